#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcopt/tensor.hpp"

namespace gcopt {

// In-memory dataset: an f64 master copy of the features, integer labels,
// and a fixed per-class 80/20 train/test split. features is (N, D) for
// vector data or (N, C, H, W) for images.
struct Dataset {
    Tensor<double> features;
    std::vector<int> labels;
    std::size_t num_classes = 0;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;

    bool is_image() const { return features.ndim() == 4; }
    std::size_t sample_count() const { return features.extent(0); }
    std::size_t sample_size() const { return features.size() / sample_count(); }

    // Copy selected samples into a batch tensor of the training dtype.
    template <typename T>
    Tensor<T> gather(const std::vector<std::size_t>& idx, std::size_t begin,
                     std::size_t count) const {
        std::vector<std::size_t> dims = features.dims();
        dims[0] = count;
        Tensor<T> out(dims);
        const std::size_t stride = sample_size();
        for (std::size_t i = 0; i < count; ++i) {
            const double* src = features.data() + idx[begin + i] * stride;
            T* dst = out.data() + i * stride;
            for (std::size_t j = 0; j < stride; ++j) dst[j] = static_cast<T>(src[j]);
        }
        return out;
    }

    std::vector<int> gather_labels(const std::vector<std::size_t>& idx,
                                   std::size_t begin, std::size_t count) const {
        std::vector<int> out(count);
        for (std::size_t i = 0; i < count; ++i) out[i] = labels[idx[begin + i]];
        return out;
    }
};

struct SyntheticSpec {
    enum class Mode { vec, img } mode = Mode::vec;
    std::size_t classes = 0;
    std::size_t per_class = 0;
    std::size_t dim = 0;                     // vec mode
    std::size_t channels = 0, height = 0, width = 0;  // img mode
    double spread = 0.0;
};

// Gaussian class clusters (vec) or procedurally textured class images
// (img). Deterministic per seed; per-class 80/20 split.
Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// Labeled CSV: header row, float features, last column is the integer label.
Dataset load_csv_labeled(const std::string& path);
void write_csv_labeled(const Dataset& data, const std::string& path);

// IDX image/label pair (big-endian dims, u8 data), values rescaled to [0,1].
Dataset load_idx_pair(const std::string& images_path, const std::string& labels_path);
void write_idx_pair(const Dataset& data, const std::string& images_path,
                    const std::string& labels_path);

// Dataset spec strings:
//   synthetic:vec:K:PER_CLASS:DIM:SPREAD
//   synthetic:img:K:PER_CLASS:C:H:W:SPREAD
//   csv:PATH
//   idx:IMAGES_PATH:LABELS_PATH
Dataset make_dataset(const std::string& spec, std::uint64_t seed);

}  // namespace gcopt
