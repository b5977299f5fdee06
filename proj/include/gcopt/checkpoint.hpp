#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "gcopt/tensor.hpp"

namespace gcopt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

// Binary checkpoint, format GCK1 version 1 (all integers little-endian):
//   magic "GCK1", u32 version
//   model tensor table, then optimizer moment table, each:
//     u32 count, then per tensor:
//       u16 name length, name bytes, u8 ndim, ndim x u32 dims,
//       u8 dtype (0=f32, 1=f64), raw little-endian element data
//   optimizer scalar state: u64 step t, u8 poisoned
//   rng state: 4 x u64
//   u32 epoch, u64 global step
// Moment tensors are named "opt/m/<param>" and "opt/v/<param>".
struct CheckpointTensor {
    std::string name;
    std::vector<std::uint32_t> dims;
    Dtype dtype = Dtype::f64;
    std::vector<std::uint8_t> bytes;

    std::size_t element_count() const {
        std::size_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
};

struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    std::uint32_t version = kVersion;
    std::vector<CheckpointTensor> model_tensors;
    std::vector<CheckpointTensor> opt_tensors;
    std::uint64_t opt_step = 0;
    std::uint8_t opt_poisoned = 0;
    std::array<std::uint64_t, 4> rng_state{};
    std::uint32_t epoch = 0;
    std::uint64_t global_step = 0;

    const CheckpointTensor* find(const std::string& name) const {
        for (const auto& t : model_tensors) {
            if (t.name == name) return &t;
        }
        for (const auto& t : opt_tensors) {
            if (t.name == name) return &t;
        }
        return nullptr;
    }
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

template <typename T>
CheckpointTensor pack_tensor(const std::string& name, const Tensor<T>& t) {
    CheckpointTensor out;
    out.name = name;
    out.dims.reserve(t.ndim());
    for (std::size_t d : t.dims()) out.dims.push_back(static_cast<std::uint32_t>(d));
    out.dtype = dtype_of<T>();
    out.bytes.resize(t.size() * sizeof(T));
    std::memcpy(out.bytes.data(), t.data(), out.bytes.size());
    return out;
}

template <typename T>
Tensor<T> unpack_tensor(const CheckpointTensor& ct) {
    if (ct.dtype != dtype_of<T>()) {
        throw std::runtime_error("checkpoint tensor '" + ct.name + "' has dtype " +
                                 dtype_name(ct.dtype) + ", expected " +
                                 dtype_name(dtype_of<T>()));
    }
    std::vector<std::size_t> dims(ct.dims.begin(), ct.dims.end());
    Tensor<T> out(dims);
    if (out.size() * sizeof(T) != ct.bytes.size()) {
        throw std::runtime_error("checkpoint tensor '" + ct.name + "' has inconsistent size");
    }
    std::memcpy(out.data(), ct.bytes.data(), ct.bytes.size());
    return out;
}

}  // namespace gcopt
