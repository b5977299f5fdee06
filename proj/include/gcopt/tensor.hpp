#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gcopt {

enum class Dtype : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr Dtype dtype_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                  "only f32/f64 tensors are supported");
    if constexpr (std::is_same_v<T, float>) return Dtype::f32;
    return Dtype::f64;
}

inline const char* dtype_name(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }

inline std::string dims_to_string(const std::vector<std::size_t>& dims) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) os << ",";
        os << dims[i];
    }
    os << ")";
    return os.str();
}

// Dense row-major array over f32/f64. Every extent is >= 1 and the buffer
// length always equals the product of the extents.
template <typename T>
class Tensor {
public:
    Tensor() : dims_{1}, data_(1, T(0)) {}

    explicit Tensor(std::vector<std::size_t> dims, T fill = T(0))
        : dims_(std::move(dims)), data_(checked_count(dims_), fill) {}

    Tensor(std::vector<std::size_t> dims, std::vector<T> data)
        : dims_(std::move(dims)), data_(std::move(data)) {
        if (data_.size() != checked_count(dims_)) {
            throw std::invalid_argument(
                "tensor: data length " + std::to_string(data_.size()) +
                " does not match dims " + dims_to_string(dims_));
        }
    }

    static Tensor zeros(std::vector<std::size_t> dims) { return Tensor(std::move(dims)); }

    static Tensor full(std::vector<std::size_t> dims, T value) {
        return Tensor(std::move(dims), value);
    }

    // 2-D convenience constructor used all over the tests.
    static Tensor from_rows(std::initializer_list<std::initializer_list<T>> rows) {
        std::size_t r = rows.size();
        std::size_t c = rows.begin()->size();
        Tensor out({r, c});
        std::size_t k = 0;
        for (const auto& row : rows) {
            if (row.size() != c) throw std::invalid_argument("tensor: ragged row list");
            for (T v : row) out.data_[k++] = v;
        }
        return out;
    }

    static Tensor from_vector(std::vector<T> v) {
        std::size_t n = v.size();
        return Tensor({n}, std::move(v));
    }

    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t ndim() const { return dims_.size(); }
    std::size_t extent(std::size_t axis) const { return dims_.at(axis); }
    std::size_t size() const { return data_.size(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    T operator[](std::size_t i) const { return data_[i]; }

    T& at2(std::size_t i, std::size_t j) { return data_[i * dims_[1] + j]; }
    const T& at2(std::size_t i, std::size_t j) const { return data_[i * dims_[1] + j]; }

    T& at4(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
        return data_[((a * dims_[1] + b) * dims_[2] + c) * dims_[3] + d];
    }
    const T& at4(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
        return data_[((a * dims_[1] + b) * dims_[2] + c) * dims_[3] + d];
    }

    bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

    // Re-interpret the buffer with a new shape of identical element count.
    Tensor reshaped(std::vector<std::size_t> new_dims) const {
        Tensor out(std::move(new_dims));
        if (out.size() != size()) {
            throw std::invalid_argument("reshape: element count mismatch " +
                                        dims_to_string(dims_) + " -> " +
                                        dims_to_string(out.dims_));
        }
        out.data_ = data_;
        return out;
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    std::vector<T>& raw() { return data_; }
    const std::vector<T>& raw() const { return data_; }

private:
    static std::size_t checked_count(const std::vector<std::size_t>& dims) {
        if (dims.empty()) throw std::invalid_argument("tensor: dims must be non-empty");
        std::size_t n = 1;
        for (std::size_t d : dims) {
            if (d == 0) throw std::invalid_argument("tensor: zero extent in " + dims_to_string(dims));
            n *= d;
        }
        return n;
    }

    std::vector<std::size_t> dims_;
    std::vector<T> data_;
};

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    dims_to_string(a.dims()) + " vs " +
                                    dims_to_string(b.dims()));
    }
}

// Matrix product with a fixed accumulation order (k ascending per output
// element) so repeated runs are bit-reproducible.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 2) {
        throw std::invalid_argument("matmul: expected 2-D operands, got " +
                                    dims_to_string(a.dims()) + " and " +
                                    dims_to_string(b.dims()));
    }
    const std::size_t m = a.extent(0), k = a.extent(1);
    const std::size_t k2 = b.extent(0), n = b.extent(1);
    if (k != k2) {
        throw std::invalid_argument("matmul: inner dims disagree " +
                                    dims_to_string(a.dims()) + " x " +
                                    dims_to_string(b.dims()));
    }
    Tensor<T> out({m, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T aik = pa[i * k + kk];
            const T* brow = pb + kk * n;
            T* orow = po + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

// out = a^T * b, without materializing the transpose. Accumulation order per
// output element is k ascending, matching matmul.
template <typename T>
Tensor<T> matmul_at(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.extent(0) != b.extent(0)) {
        throw std::invalid_argument("matmul_at: shape mismatch " +
                                    dims_to_string(a.dims()) + " vs " +
                                    dims_to_string(b.dims()));
    }
    const std::size_t k = a.extent(0), m = a.extent(1), n = b.extent(1);
    Tensor<T> out({m, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (std::size_t kk = 0; kk < k; ++kk) {
        const T* arow = pa + kk * m;
        const T* brow = pb + kk * n;
        for (std::size_t i = 0; i < m; ++i) {
            const T aki = arow[i];
            T* orow = po + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aki * brow[j];
        }
    }
    return out;
}

// out = a * b^T.
template <typename T>
Tensor<T> matmul_bt(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.extent(1) != b.extent(1)) {
        throw std::invalid_argument("matmul_bt: shape mismatch " +
                                    dims_to_string(a.dims()) + " vs " +
                                    dims_to_string(b.dims()));
    }
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(0);
    Tensor<T> out({m, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = pa + i * k;
        T* orow = po + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const T* brow = pb + j * k;
            T acc = T(0);
            for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            orow[j] = acc;
        }
    }
    return out;
}

// Column means of a 2-D tensor: entry i is the mean of column i.
template <typename T>
Tensor<T> reduce_mean_axis0(const Tensor<T>& a) {
    if (a.ndim() != 2) {
        throw std::invalid_argument("reduce_mean_axis0: expected 2-D, got " +
                                    dims_to_string(a.dims()));
    }
    const std::size_t rows = a.extent(0), cols = a.extent(1);
    Tensor<T> out({cols});
    for (std::size_t i = 0; i < rows; ++i) {
        const T* row = a.data() + i * cols;
        for (std::size_t j = 0; j < cols; ++j) out[j] += row[j];
    }
    const T inv = T(1) / static_cast<T>(rows);
    for (std::size_t j = 0; j < cols; ++j) out[j] *= inv;
    return out;
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "add");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

template <typename T>
void axpy(T alpha, const Tensor<T>& x, Tensor<T>& y) {
    check_same_shape(x, y, "axpy");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

template <typename T>
void scale_inplace(Tensor<T>& a, T s) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] *= s;
}

template <typename T>
T sum(const Tensor<T>& a) {
    T acc = T(0);
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
    return acc;
}

template <typename T>
T l2_norm_squared(const Tensor<T>& a) {
    T acc = T(0);
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * a[i];
    return acc;
}

template <typename T>
T l2_norm(const Tensor<T>& a) {
    return std::sqrt(l2_norm_squared(a));
}

template <typename T>
T max_abs(const Tensor<T>& a) {
    T acc = T(0);
    for (std::size_t i = 0; i < a.size(); ++i) acc = std::max(acc, std::abs(a[i]));
    return acc;
}

template <typename T>
bool all_finite(const Tensor<T>& a) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(a[i])) return false;
    }
    return true;
}

template <typename T, typename U>
Tensor<U> cast_tensor(const Tensor<T>& a) {
    Tensor<U> out(a.dims());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = static_cast<U>(a[i]);
    return out;
}

}  // namespace gcopt
