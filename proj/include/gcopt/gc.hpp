#pragma once

#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gcopt/tensor.hpp"

namespace gcopt {

enum class LayerGradKind { fc, conv };

// Controls where gradient centralization applies. Columns shorter than
// min_fan_in are left untouched: with a single-entry column the mean equals
// the entry, so centralizing would zero the gradient and freeze the weight.
struct GcPolicy {
    bool apply_to_fc = true;
    bool apply_to_conv = true;
    std::size_t min_fan_in = 2;

    void validate() const {
        if (min_fan_in < 2) {
            throw std::invalid_argument("GcPolicy: min_fan_in must be >= 2");
        }
    }
};

// M x N view over a weight-gradient buffer. Column i (length M, the fan-in
// extent) is the gradient slice feeding output unit/channel i. The view is a
// pure re-indexing: writes go straight to the underlying layout.
//
// fc weights are stored (C_in, C_out) row-major, so a column is strided by
// N; conv weights are stored (C_out, C_in, k1, k2) row-major, so a column is
// the contiguous slice for one output channel, ordered input-channel major,
// then kernel row, then kernel column.
template <typename T>
class GradView {
public:
    GradView(T* base, LayerGradKind kind, std::size_t m, std::size_t n,
             std::size_t row_stride, std::size_t col_stride)
        : base_(base), kind_(kind), m_(m), n_(n),
          row_stride_(row_stride), col_stride_(col_stride) {}

    LayerGradKind source_kind() const { return kind_; }
    std::size_t m() const { return m_; }
    std::size_t n() const { return n_; }
    std::size_t row_stride() const { return row_stride_; }
    std::size_t col_stride() const { return col_stride_; }
    T* base() { return base_; }

    T& at(std::size_t row, std::size_t col) {
        return base_[col * col_stride_ + row * row_stride_];
    }
    T at(std::size_t row, std::size_t col) const {
        return base_[col * col_stride_ + row * row_stride_];
    }

    // Materialize the view as an M x N matrix.
    Tensor<T> to_matrix() const {
        Tensor<T> out({m_, n_});
        for (std::size_t j = 0; j < m_; ++j) {
            for (std::size_t i = 0; i < n_; ++i) out.at2(j, i) = at(j, i);
        }
        return out;
    }

    // Write an M x N matrix back through the view (the fold direction).
    void from_matrix(const Tensor<T>& mat) {
        if (mat.ndim() != 2 || mat.extent(0) != m_ || mat.extent(1) != n_) {
            throw std::invalid_argument("GradView::from_matrix: shape mismatch " +
                                        dims_to_string(mat.dims()));
        }
        for (std::size_t j = 0; j < m_; ++j) {
            for (std::size_t i = 0; i < n_; ++i) at(j, i) = mat.at2(j, i);
        }
    }

private:
    T* base_;
    LayerGradKind kind_;
    std::size_t m_, n_;
    std::size_t row_stride_, col_stride_;
};

struct ConvDims {
    std::size_t c_out = 0, c_in = 0, k1 = 0, k2 = 0;
};

// Unfold a weight gradient into the M x N column view.
// fc: tensor (C_in, C_out), M = C_in, N = C_out.
// conv: tensor (C_out, C_in, k1, k2), M = C_in*k1*k2, N = C_out.
template <typename T>
GradView<T> unfold(Tensor<T>& grad, LayerGradKind kind, const ConvDims* conv = nullptr) {
    if (kind == LayerGradKind::fc) {
        if (grad.ndim() != 2) {
            throw std::invalid_argument("unfold: fc gradient must be 2-D, got " +
                                        dims_to_string(grad.dims()));
        }
        const std::size_t m = grad.extent(0), n = grad.extent(1);
        return GradView<T>(grad.data(), kind, m, n, /*row_stride=*/n, /*col_stride=*/1);
    }
    if (conv == nullptr) throw std::invalid_argument("unfold: conv dims required");
    const std::size_t m = conv->c_in * conv->k1 * conv->k2;
    const std::size_t n = conv->c_out;
    if (m * n != grad.size()) {
        throw std::invalid_argument(
            "unfold: conv element count mismatch, tensor " + dims_to_string(grad.dims()) +
            " vs C_out*C_in*k1*k2 = " + std::to_string(m * n));
    }
    return GradView<T>(grad.data(), kind, m, n, /*row_stride=*/1, /*col_stride=*/m);
}

// Remove the per-column mean in place. Columns are independent; nothing
// happens when the view's kind is disabled by policy or M < min_fan_in.
// The fc layout (contiguous rows) takes a row-major two-pass route with a
// column-sum buffer; per-column accumulation order is j ascending either
// way, so both routes produce identical bits.
template <typename T>
void centralize(GradView<T>& view, const GcPolicy& policy) {
    const bool enabled = view.source_kind() == LayerGradKind::fc
                             ? policy.apply_to_fc
                             : policy.apply_to_conv;
    if (!enabled || view.m() < policy.min_fan_in) return;
    const std::size_t m = view.m(), n = view.n();
    const T inv_m = T(1) / static_cast<T>(m);
    if (view.col_stride() == 1 && view.row_stride() == n) {
        T* base = view.base();
        std::vector<T> sums(n, T(0));
        for (std::size_t j = 0; j < m; ++j) {
            const T* row = base + j * n;
            for (std::size_t i = 0; i < n; ++i) sums[i] += row[i];
        }
        for (std::size_t i = 0; i < n; ++i) sums[i] *= inv_m;
        for (std::size_t j = 0; j < m; ++j) {
            T* row = base + j * n;
            for (std::size_t i = 0; i < n; ++i) row[i] -= sums[i];
        }
        return;
    }
    for (std::size_t i = 0; i < n; ++i) {
        T acc = T(0);
        for (std::size_t j = 0; j < m; ++j) acc += view.at(j, i);
        const T mean = acc * inv_m;
        for (std::size_t j = 0; j < m; ++j) view.at(j, i) -= mean;
    }
}

// Centralize a bare column vector (always applied, no policy gate).
template <typename T>
void centralize_vector(T* v, std::size_t m) {
    T acc = T(0);
    for (std::size_t j = 0; j < m; ++j) acc += v[j];
    const T mean = acc / static_cast<T>(m);
    for (std::size_t j = 0; j < m; ++j) v[j] -= mean;
}

// The projector P = I - (1/M) 1 1^T applied by explicit construction,
// verification path only; the hot path is the mean-subtract above.
template <typename T>
Tensor<T> explicit_projector(std::size_t m) {
    Tensor<T> p({m, m});
    const T off = -T(1) / static_cast<T>(m);
    const T diag = T(1) + off;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) p.at2(i, j) = (i == j) ? diag : off;
    }
    return p;
}

// Both routes for Phi_GC(g) on a 1-D gradient: the mean-subtract used in
// training and the explicit P*g product. Callers assert elementwise
// agreement (1e-12 in f64).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> project_equivalence_check(const Tensor<T>& g) {
    if (g.ndim() != 1) {
        throw std::invalid_argument("project_equivalence_check: expected 1-D, got " +
                                    dims_to_string(g.dims()));
    }
    const std::size_t m = g.extent(0);
    Tensor<T> centralized = g;
    centralize_vector(centralized.data(), m);

    const Tensor<T> p = explicit_projector<T>(m);
    Tensor<T> explicit_path({m});
    for (std::size_t i = 0; i < m; ++i) {
        T acc = T(0);
        for (std::size_t j = 0; j < m; ++j) acc += p.at2(i, j) * g[j];
        explicit_path[i] = acc;
    }
    return {std::move(centralized), std::move(explicit_path)};
}

}  // namespace gcopt
