#include "gcopt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gcopt/rng.hpp"

namespace gcopt {

namespace {

// Per-class split: the first 80% of each class's samples (generation/file
// order) train, the rest test. Synthetic generation demands at least one
// sample per class on each side; loaded files degrade gracefully (a
// one-sample class lands in train only).
void assign_split(Dataset& data, bool strict) {
    std::vector<std::vector<std::size_t>> by_class(data.num_classes);
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
        by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
    }
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        const auto& members = by_class[c];
        if (members.empty()) continue;
        std::size_t train_n = (members.size() * 4) / 5;
        if (train_n == 0 || train_n == members.size()) {
            if (strict) {
                throw std::invalid_argument("dataset: class " + std::to_string(c) +
                                            " has too few samples (" +
                                            std::to_string(members.size()) +
                                            ") for an 80/20 split");
            }
            train_n = std::max<std::size_t>(
                members.size() == 1 ? 1 : members.size() - 1, 1);
        }
        for (std::size_t i = 0; i < members.size(); ++i) {
            (i < train_n ? data.train_indices : data.test_indices).push_back(members[i]);
        }
    }
}

std::uint32_t read_u32_be(std::istream& in, const std::string& path, std::size_t& offset) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) {
        throw std::runtime_error(path + ": truncated at byte offset " +
                                 std::to_string(offset));
    }
    offset += 4;
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_u32_be(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    if (spec.classes < 2) throw std::invalid_argument("synthetic: need at least 2 classes");
    if (spec.per_class < 5) {
        throw std::invalid_argument("synthetic: need at least 5 samples per class");
    }
    if (!(spec.spread >= 0.0) || !std::isfinite(spec.spread)) {
        throw std::invalid_argument("synthetic: spread must be finite and >= 0");
    }
    RngStream rng(seed);
    Dataset data;
    data.num_classes = spec.classes;
    const std::size_t total = spec.classes * spec.per_class;

    if (spec.mode == SyntheticSpec::Mode::vec) {
        if (spec.dim == 0) throw std::invalid_argument("synthetic: dim must be >= 1");
        // Unit-length class centers, then center + spread * N(0, I).
        Tensor<double> centers({spec.classes, spec.dim});
        for (std::size_t c = 0; c < spec.classes; ++c) {
            double norm2 = 0.0;
            for (std::size_t d = 0; d < spec.dim; ++d) {
                const double v = rng.normal();
                centers.at2(c, d) = v;
                norm2 += v * v;
            }
            const double inv = 1.0 / std::sqrt(norm2);
            for (std::size_t d = 0; d < spec.dim; ++d) centers.at2(c, d) *= inv;
        }
        data.features = Tensor<double>({total, spec.dim});
        data.labels.resize(total);
        std::size_t row = 0;
        for (std::size_t c = 0; c < spec.classes; ++c) {
            for (std::size_t s = 0; s < spec.per_class; ++s, ++row) {
                double* dst = data.features.data() + row * spec.dim;
                for (std::size_t d = 0; d < spec.dim; ++d) {
                    dst[d] = centers.at2(c, d) + spec.spread * rng.normal();
                }
                data.labels[row] = static_cast<int>(c);
            }
        }
    } else {
        if (spec.channels == 0 || spec.height == 0 || spec.width == 0) {
            throw std::invalid_argument("synthetic: image dims must be >= 1");
        }
        // Each class is a sinusoidal texture (random orientation, frequency
        // and phase per channel) plus per-sample Gaussian noise, clamped to
        // [0,1].
        struct Wave {
            double fx, fy, phase;
        };
        std::vector<Wave> waves(spec.classes * spec.channels);
        for (auto& w : waves) {
            w.fx = rng.uniform(0.5, 3.0);
            w.fy = rng.uniform(0.5, 3.0);
            w.phase = rng.uniform(0.0, 6.283185307179586);
        }
        data.features = Tensor<double>({total, spec.channels, spec.height, spec.width});
        data.labels.resize(total);
        std::size_t row = 0;
        for (std::size_t c = 0; c < spec.classes; ++c) {
            for (std::size_t s = 0; s < spec.per_class; ++s, ++row) {
                for (std::size_t ch = 0; ch < spec.channels; ++ch) {
                    const Wave& w = waves[c * spec.channels + ch];
                    for (std::size_t y = 0; y < spec.height; ++y) {
                        for (std::size_t x = 0; x < spec.width; ++x) {
                            double v = 0.5 + 0.35 * std::sin(w.fx * static_cast<double>(x) +
                                                             w.fy * static_cast<double>(y) +
                                                             w.phase);
                            v += spec.spread * rng.normal();
                            data.features.at4(row, ch, y, x) = std::clamp(v, 0.0, 1.0);
                        }
                    }
                }
                data.labels[row] = static_cast<int>(c);
            }
        }
    }
    assign_split(data, /*strict=*/true);
    return data;
}

Dataset load_csv_labeled(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": missing header row");
    std::size_t columns = 1 + static_cast<std::size_t>(
        std::count(line.begin(), line.end(), ','));
    if (columns < 2) {
        throw std::runtime_error(path + ": header must name at least one feature and a label");
    }
    const std::size_t dim = columns - 1;

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t line_no = 1;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::size_t col = 0;
        while (std::getline(ss, field, ',')) {
            try {
                if (col < dim) {
                    values.push_back(static_cast<double>(std::stof(field)));
                } else {
                    const int label = std::stoi(field);
                    if (label < 0) {
                        throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                                 ": negative label");
                    }
                    labels.push_back(label);
                    max_label = std::max(max_label, label);
                }
            } catch (const std::invalid_argument&) {
                throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                         ": cannot parse field '" + field + "'");
            }
            ++col;
        }
        if (col != columns) {
            throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(columns) + " fields, got " +
                                     std::to_string(col));
        }
    }
    if (labels.empty()) throw std::runtime_error(path + ": no data rows");

    Dataset data;
    data.features = Tensor<double>({labels.size(), dim}, std::move(values));
    data.labels = std::move(labels);
    data.num_classes = static_cast<std::size_t>(max_label) + 1;
    assign_split(data, /*strict=*/false);
    return data;
}

void write_csv_labeled(const Dataset& data, const std::string& path) {
    if (data.is_image()) {
        throw std::invalid_argument("csv writer: image datasets go to IDX, not CSV");
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("csv: cannot write " + path);
    const std::size_t dim = data.sample_size();
    for (std::size_t d = 0; d < dim; ++d) out << "f" << d << ",";
    out << "label\n";
    char buf[64];
    for (std::size_t i = 0; i < data.sample_count(); ++i) {
        const double* row = data.features.data() + i * dim;
        for (std::size_t d = 0; d < dim; ++d) {
            // Features are f32 on disk; %.9g round-trips a float exactly.
            std::snprintf(buf, sizeof(buf), "%.9g",
                          static_cast<double>(static_cast<float>(row[d])));
            out << buf << ",";
        }
        out << data.labels[i] << "\n";
    }
}

Dataset load_idx_pair(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("idx: cannot open " + images_path);
    std::size_t offset = 0;
    const std::uint32_t magic = read_u32_be(img, images_path, offset);
    if (magic != 0x00000803u) {
        std::ostringstream os;
        os << images_path << ": bad magic 0x" << std::hex << magic
           << " at byte offset 0 (want 0x00000803, u8 3-D images)";
        throw std::runtime_error(os.str());
    }
    const std::uint32_t n = read_u32_be(img, images_path, offset);
    const std::uint32_t h = read_u32_be(img, images_path, offset);
    const std::uint32_t w = read_u32_be(img, images_path, offset);
    if (n == 0 || h == 0 || w == 0) {
        throw std::runtime_error(images_path + ": zero extent in header");
    }
    const std::size_t count = std::size_t(n) * h * w;
    std::vector<unsigned char> raw(count);
    img.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(img.gcount()) != count) {
        throw std::runtime_error(images_path + ": truncated at byte offset " +
                                 std::to_string(offset + static_cast<std::size_t>(img.gcount())));
    }

    std::ifstream lbl(labels_path, std::ios::binary);
    if (!lbl) throw std::runtime_error("idx: cannot open " + labels_path);
    offset = 0;
    const std::uint32_t lmagic = read_u32_be(lbl, labels_path, offset);
    if (lmagic != 0x00000801u) {
        std::ostringstream os;
        os << labels_path << ": bad magic 0x" << std::hex << lmagic
           << " at byte offset 0 (want 0x00000801, u8 labels)";
        throw std::runtime_error(os.str());
    }
    const std::uint32_t ln = read_u32_be(lbl, labels_path, offset);
    if (ln != n) {
        throw std::runtime_error(labels_path + ": " + std::to_string(ln) +
                                 " labels for " + std::to_string(n) + " images");
    }
    std::vector<unsigned char> lraw(ln);
    lbl.read(reinterpret_cast<char*>(lraw.data()), static_cast<std::streamsize>(ln));
    if (static_cast<std::size_t>(lbl.gcount()) != ln) {
        throw std::runtime_error(labels_path + ": truncated at byte offset " +
                                 std::to_string(offset + static_cast<std::size_t>(lbl.gcount())));
    }

    Dataset data;
    data.features = Tensor<double>({n, 1, h, w});
    for (std::size_t i = 0; i < count; ++i) {
        data.features[i] = static_cast<double>(raw[i]) / 255.0;
    }
    data.labels.resize(ln);
    int max_label = 0;
    for (std::size_t i = 0; i < ln; ++i) {
        data.labels[i] = static_cast<int>(lraw[i]);
        max_label = std::max(max_label, data.labels[i]);
    }
    data.num_classes = static_cast<std::size_t>(max_label) + 1;
    assign_split(data, /*strict=*/false);
    return data;
}

void write_idx_pair(const Dataset& data, const std::string& images_path,
                    const std::string& labels_path) {
    if (!data.is_image() || data.features.extent(1) != 1) {
        throw std::invalid_argument("idx writer: needs single-channel image data");
    }
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("idx: cannot write " + images_path);
    write_u32_be(img, 0x00000803u);
    write_u32_be(img, static_cast<std::uint32_t>(data.sample_count()));
    write_u32_be(img, static_cast<std::uint32_t>(data.features.extent(2)));
    write_u32_be(img, static_cast<std::uint32_t>(data.features.extent(3)));
    for (std::size_t i = 0; i < data.features.size(); ++i) {
        const double v = std::clamp(data.features[i], 0.0, 1.0);
        const unsigned char b = static_cast<unsigned char>(std::lround(v * 255.0));
        img.write(reinterpret_cast<const char*>(&b), 1);
    }

    std::ofstream lbl(labels_path, std::ios::binary);
    if (!lbl) throw std::runtime_error("idx: cannot write " + labels_path);
    write_u32_be(lbl, 0x00000801u);
    write_u32_be(lbl, static_cast<std::uint32_t>(data.labels.size()));
    for (int label : data.labels) {
        const unsigned char b = static_cast<unsigned char>(label);
        lbl.write(reinterpret_cast<const char*>(&b), 1);
    }
}

namespace {

std::vector<std::string> split_spec(const std::string& s) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
        if (c == ':') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    parts.push_back(cur);
    return parts;
}

std::size_t spec_uint(const std::string& s, const char* what) {
    try {
        const long long v = std::stoll(s);
        if (v < 0) throw std::invalid_argument("negative");
        return static_cast<std::size_t>(v);
    } catch (...) {
        throw std::invalid_argument(std::string("dataset spec: bad ") + what + " '" + s + "'");
    }
}

double spec_real(const std::string& s, const char* what) {
    try {
        return std::stod(s);
    } catch (...) {
        throw std::invalid_argument(std::string("dataset spec: bad ") + what + " '" + s + "'");
    }
}

}  // namespace

Dataset make_dataset(const std::string& spec, std::uint64_t seed) {
    const auto parts = split_spec(spec);
    if (parts[0] == "synthetic") {
        if (parts.size() < 2) throw std::invalid_argument("dataset spec: missing synthetic mode");
        SyntheticSpec s;
        if (parts[1] == "vec") {
            if (parts.size() != 6) {
                throw std::invalid_argument(
                    "dataset spec: want synthetic:vec:K:PER_CLASS:DIM:SPREAD, got '" + spec + "'");
            }
            s.mode = SyntheticSpec::Mode::vec;
            s.classes = spec_uint(parts[2], "class count");
            s.per_class = spec_uint(parts[3], "per-class count");
            s.dim = spec_uint(parts[4], "dim");
            s.spread = spec_real(parts[5], "spread");
        } else if (parts[1] == "img") {
            if (parts.size() != 8) {
                throw std::invalid_argument(
                    "dataset spec: want synthetic:img:K:PER_CLASS:C:H:W:SPREAD, got '" + spec + "'");
            }
            s.mode = SyntheticSpec::Mode::img;
            s.classes = spec_uint(parts[2], "class count");
            s.per_class = spec_uint(parts[3], "per-class count");
            s.channels = spec_uint(parts[4], "channels");
            s.height = spec_uint(parts[5], "height");
            s.width = spec_uint(parts[6], "width");
            s.spread = spec_real(parts[7], "spread");
        } else {
            throw std::invalid_argument("dataset spec: unknown synthetic mode '" + parts[1] + "'");
        }
        return generate_synthetic(s, seed);
    }
    if (parts[0] == "csv") {
        if (parts.size() != 2) throw std::invalid_argument("dataset spec: want csv:PATH");
        return load_csv_labeled(parts[1]);
    }
    if (parts[0] == "idx") {
        if (parts.size() != 3) {
            throw std::invalid_argument("dataset spec: want idx:IMAGES_PATH:LABELS_PATH");
        }
        return load_idx_pair(parts[1], parts[2]);
    }
    throw std::invalid_argument("dataset spec: unknown kind '" + parts[0] + "'");
}

}  // namespace gcopt
