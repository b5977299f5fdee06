#pragma once

#include <cmath>
#include <stdexcept>

#include "gcopt/rng.hpp"
#include "gcopt/tensor.hpp"

namespace gcopt {

// Kaiming normal: i.i.d. N(0, 2/fan_in).
template <typename T>
Tensor<T> kaiming_normal_init(std::vector<std::size_t> dims, std::size_t fan_in,
                              RngStream& rng) {
    if (fan_in == 0) throw std::invalid_argument("kaiming_normal_init: fan_in must be >= 1");
    Tensor<T> out(std::move(dims));
    const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<T>(rng.normal(0.0, std_dev));
    }
    return out;
}

// Xavier uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> xavier_init(std::vector<std::size_t> dims, std::size_t fan_in,
                      std::size_t fan_out, RngStream& rng) {
    if (fan_in == 0 || fan_out == 0) {
        throw std::invalid_argument("xavier_init: fan_in and fan_out must be >= 1");
    }
    Tensor<T> out(std::move(dims));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
    return out;
}

}  // namespace gcopt
