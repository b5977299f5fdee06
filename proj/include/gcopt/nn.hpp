#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gcopt/gc.hpp"
#include "gcopt/init.hpp"
#include "gcopt/optim.hpp"
#include "gcopt/rng.hpp"
#include "gcopt/tensor.hpp"

namespace gcopt {

// A named weight array with its gradient and the fan-in/fan-out
// decomposition. Only dense/conv weight matrices are gc_eligible; biases and
// normalization scale/shift have no column decomposition and are never
// centralized.
template <typename T>
struct ParamTensor {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
    bool gc_eligible = false;
    GcMeta gc_meta;

    ParamTensor(std::string n, Tensor<T> v)
        : name(std::move(n)), value(std::move(v)), grad(value.dims()) {}

    void zero_grad() { grad.fill(T(0)); }
};

// ---------------------------------------------------------------------------
// Free-function kernels (the layer classes wrap these).
// ---------------------------------------------------------------------------

// y = x W + b with x (batch, C_in), W (C_in, C_out), b (C_out).
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (x.ndim() != 2 || w.ndim() != 2 || x.extent(1) != w.extent(0)) {
        throw std::invalid_argument("dense_forward: shape mismatch x" +
                                    dims_to_string(x.dims()) + " W" +
                                    dims_to_string(w.dims()));
    }
    if (b.ndim() != 1 || b.extent(0) != w.extent(1)) {
        throw std::invalid_argument("dense_forward: bias shape " +
                                    dims_to_string(b.dims()) + " vs C_out " +
                                    std::to_string(w.extent(1)));
    }
    Tensor<T> y = matmul(x, w);
    const std::size_t batch = y.extent(0), n = y.extent(1);
    for (std::size_t i = 0; i < batch; ++i) {
        T* row = y.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += b[j];
    }
    return y;
}

struct Conv2dGeom {
    std::size_t c_in = 0, c_out = 0, k1 = 0, k2 = 0;
    std::size_t stride = 1, pad = 0;

    std::size_t out_extent(std::size_t in, std::size_t k) const {
        const std::size_t padded = in + 2 * pad;
        if (padded < k || (padded - k) % stride != 0) {
            throw std::invalid_argument(
                "conv2d: non-integral output extent for input " + std::to_string(in) +
                ", kernel " + std::to_string(k) + ", stride " + std::to_string(stride) +
                ", pad " + std::to_string(pad));
        }
        return (padded - k) / stride + 1;
    }
};

// Gather the (C_in*k1*k2) x (H'*W') patch matrix for one sample. Row order
// is input-channel major, then kernel row, then kernel column -- the same
// order the GC unfolding uses for conv weight slices.
template <typename T>
void im2col(const Tensor<T>& x, std::size_t sample, const Conv2dGeom& g,
            std::size_t oh, std::size_t ow, Tensor<T>& patches) {
    const std::size_t h = x.extent(2), w = x.extent(3);
    T* p = patches.data();
    const std::size_t l = oh * ow;
    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
        for (std::size_t r = 0; r < g.k1; ++r) {
            for (std::size_t s = 0; s < g.k2; ++s) {
                const std::size_t row = (ci * g.k1 + r) * g.k2 + s;
                T* prow = p + row * l;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const std::ptrdiff_t iy =
                        static_cast<std::ptrdiff_t>(oy * g.stride + r) -
                        static_cast<std::ptrdiff_t>(g.pad);
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox * g.stride + s) -
                            static_cast<std::ptrdiff_t>(g.pad);
                        T v = T(0);
                        if (iy >= 0 && iy < static_cast<std::ptrdiff_t>(h) &&
                            ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) {
                            v = x.at4(sample, ci, static_cast<std::size_t>(iy),
                                      static_cast<std::size_t>(ix));
                        }
                        prow[oy * ow + ox] = v;
                    }
                }
            }
        }
    }
}

// Scatter-add of a patch-matrix gradient back onto the input (the im2col
// adjoint).
template <typename T>
void col2im_add(const Tensor<T>& dpatches, std::size_t sample, const Conv2dGeom& g,
                std::size_t oh, std::size_t ow, Tensor<T>& dx) {
    const std::size_t h = dx.extent(2), w = dx.extent(3);
    const T* p = dpatches.data();
    const std::size_t l = oh * ow;
    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
        for (std::size_t r = 0; r < g.k1; ++r) {
            for (std::size_t s = 0; s < g.k2; ++s) {
                const std::size_t row = (ci * g.k1 + r) * g.k2 + s;
                const T* prow = p + row * l;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const std::ptrdiff_t iy =
                        static_cast<std::ptrdiff_t>(oy * g.stride + r) -
                        static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox * g.stride + s) -
                            static_cast<std::ptrdiff_t>(g.pad);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                        dx.at4(sample, ci, static_cast<std::size_t>(iy),
                               static_cast<std::size_t>(ix)) += prow[oy * ow + ox];
                    }
                }
            }
        }
    }
}

// Cross-correlation via patch matrix + matmul. x (B, C_in, H, W),
// kernel (C_out, C_in, k1, k2) -> (B, C_out, H', W').
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& kernel,
                         const Tensor<T>& bias, std::size_t stride, std::size_t pad) {
    if (x.ndim() != 4 || kernel.ndim() != 4 || x.extent(1) != kernel.extent(1)) {
        throw std::invalid_argument("conv2d_forward: shape mismatch x" +
                                    dims_to_string(x.dims()) + " kernel" +
                                    dims_to_string(kernel.dims()));
    }
    Conv2dGeom g{kernel.extent(1), kernel.extent(0), kernel.extent(2), kernel.extent(3),
                 stride, pad};
    const std::size_t batch = x.extent(0);
    const std::size_t oh = g.out_extent(x.extent(2), g.k1);
    const std::size_t ow = g.out_extent(x.extent(3), g.k2);
    const std::size_t k = g.c_in * g.k1 * g.k2;
    const std::size_t l = oh * ow;

    const Tensor<T> wmat = kernel.reshaped({g.c_out, k});
    Tensor<T> out({batch, g.c_out, oh, ow});
    Tensor<T> patches({k, l});
    for (std::size_t b = 0; b < batch; ++b) {
        im2col(x, b, g, oh, ow, patches);
        Tensor<T> y = matmul(wmat, patches);  // (C_out, L)
        for (std::size_t c = 0; c < g.c_out; ++c) {
            const T* yrow = y.data() + c * l;
            T* orow = &out.at4(b, c, 0, 0);
            const T bc = bias[c];
            for (std::size_t i = 0; i < l; ++i) orow[i] = yrow[i] + bc;
        }
    }
    return out;
}

// Direct-loop reference path, kept as the oracle for the patch-matrix
// implementation.
template <typename T>
Tensor<T> conv2d_forward_direct(const Tensor<T>& x, const Tensor<T>& kernel,
                                const Tensor<T>& bias, std::size_t stride,
                                std::size_t pad) {
    Conv2dGeom g{kernel.extent(1), kernel.extent(0), kernel.extent(2), kernel.extent(3),
                 stride, pad};
    const std::size_t batch = x.extent(0);
    const std::size_t h = x.extent(2), w = x.extent(3);
    const std::size_t oh = g.out_extent(h, g.k1);
    const std::size_t ow = g.out_extent(w, g.k2);
    Tensor<T> out({batch, g.c_out, oh, ow});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < g.c_out; ++c) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    T acc = bias[c];
                    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
                        for (std::size_t r = 0; r < g.k1; ++r) {
                            for (std::size_t s = 0; s < g.k2; ++s) {
                                const std::ptrdiff_t iy =
                                    static_cast<std::ptrdiff_t>(oy * stride + r) -
                                    static_cast<std::ptrdiff_t>(pad);
                                const std::ptrdiff_t ix =
                                    static_cast<std::ptrdiff_t>(ox * stride + s) -
                                    static_cast<std::ptrdiff_t>(pad);
                                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h) ||
                                    ix < 0 || ix >= static_cast<std::ptrdiff_t>(w))
                                    continue;
                                acc += kernel.at4(c, ci, r, s) *
                                       x.at4(b, ci, static_cast<std::size_t>(iy),
                                             static_cast<std::size_t>(ix));
                            }
                        }
                    }
                    out.at4(b, c, oy, ox) = acc;
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

template <typename T>
class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor<T> forward(const Tensor<T>& x, bool train) = 0;
    virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
    virtual std::vector<ParamTensor<T>*> params() { return {}; }
    // Non-parameter state carried across steps (BN running stats).
    virtual std::vector<std::pair<std::string, Tensor<T>*>> buffers() { return {}; }
    virtual const char* kind() const = 0;
    virtual const std::vector<std::uint8_t>* activation_mask() const { return nullptr; }

protected:
    void require_forward_cached(bool have) const {
        if (!have) throw std::runtime_error(std::string(kind()) + ": backward before forward");
    }
};

template <typename T>
class DenseLayer final : public Layer<T> {
public:
    DenseLayer(std::string name, std::size_t c_in, std::size_t c_out, RngStream& rng)
        : weight_(name + "/W", kaiming_normal_init<T>({c_in, c_out}, c_in, rng)),
          bias_(name + "/b", Tensor<T>({c_out})) {
        weight_.fan_in = c_in;
        weight_.fan_out = c_out;
        weight_.gc_eligible = true;
        weight_.gc_meta.kind = GcMeta::Kind::fc;
        bias_.fan_in = 0;
        bias_.fan_out = c_out;
    }

    Tensor<T> forward(const Tensor<T>& x, bool) override {
        x_ = x;
        have_forward_ = true;
        return dense_forward(x, weight_.value, bias_.value);
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        this->require_forward_cached(have_forward_);
        add_inplace(weight_.grad, matmul_at(x_, dy));
        const std::size_t batch = dy.extent(0), n = dy.extent(1);
        for (std::size_t i = 0; i < batch; ++i) {
            const T* row = dy.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) bias_.grad[j] += row[j];
        }
        return matmul_bt(dy, weight_.value);
    }

    std::vector<ParamTensor<T>*> params() override { return {&weight_, &bias_}; }
    const char* kind() const override { return "dense"; }

private:
    ParamTensor<T> weight_, bias_;
    Tensor<T> x_;
    bool have_forward_ = false;
};

template <typename T>
class Conv2dLayer final : public Layer<T> {
public:
    Conv2dLayer(std::string name, Conv2dGeom geom, RngStream& rng)
        : geom_(geom),
          weight_(name + "/W",
                  kaiming_normal_init<T>({geom.c_out, geom.c_in, geom.k1, geom.k2},
                                         geom.c_in * geom.k1 * geom.k2, rng)),
          bias_(name + "/b", Tensor<T>({geom.c_out})) {
        weight_.fan_in = geom.c_in * geom.k1 * geom.k2;
        weight_.fan_out = geom.c_out;
        weight_.gc_eligible = true;
        weight_.gc_meta.kind = GcMeta::Kind::conv;
        weight_.gc_meta.conv = ConvDims{geom.c_out, geom.c_in, geom.k1, geom.k2};
        bias_.fan_in = 0;
        bias_.fan_out = geom.c_out;
    }

    Tensor<T> forward(const Tensor<T>& x, bool) override {
        x_ = x;
        have_forward_ = true;
        oh_ = geom_.out_extent(x.extent(2), geom_.k1);
        ow_ = geom_.out_extent(x.extent(3), geom_.k2);
        return conv2d_forward(x, weight_.value, bias_.value, geom_.stride, geom_.pad);
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        this->require_forward_cached(have_forward_);
        const std::size_t batch = x_.extent(0);
        const std::size_t k = geom_.c_in * geom_.k1 * geom_.k2;
        const std::size_t l = oh_ * ow_;
        const Tensor<T> wmat = weight_.value.reshaped({geom_.c_out, k});

        Tensor<T> dx(x_.dims());
        Tensor<T> patches({k, l});
        Tensor<T> dys({geom_.c_out, l});
        for (std::size_t b = 0; b < batch; ++b) {
            im2col(x_, b, geom_, oh_, ow_, patches);
            for (std::size_t c = 0; c < geom_.c_out; ++c) {
                const T* src = &dy.at4(b, c, 0, 0);
                T* dst = dys.data() + c * l;
                T acc = T(0);
                for (std::size_t i = 0; i < l; ++i) {
                    dst[i] = src[i];
                    acc += src[i];
                }
                bias_.grad[c] += acc;
            }
            // dW (C_out, K) accumulates dY * patches^T; the weight tensor's
            // flat layout is exactly (C_out, K).
            Tensor<T> dwmat = matmul_bt(dys, patches);
            for (std::size_t i = 0; i < dwmat.size(); ++i) weight_.grad[i] += dwmat[i];
            Tensor<T> dpatches = matmul_at(wmat, dys);  // (K, L)
            col2im_add(dpatches, b, geom_, oh_, ow_, dx);
        }
        return dx;
    }

    std::vector<ParamTensor<T>*> params() override { return {&weight_, &bias_}; }
    const char* kind() const override { return "conv2d"; }

private:
    Conv2dGeom geom_;
    ParamTensor<T> weight_, bias_;
    Tensor<T> x_;
    std::size_t oh_ = 0, ow_ = 0;
    bool have_forward_ = false;
};

template <typename T>
class ReluLayer final : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, bool) override {
        have_forward_ = true;
        mask_.assign(x.size(), 0);
        Tensor<T> y(x.dims());
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i] > T(0)) {
                mask_[i] = 1;
                y[i] = x[i];
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        this->require_forward_cached(have_forward_);
        if (dy.size() != mask_.size()) {
            throw std::invalid_argument("relu backward: upstream shape mismatch");
        }
        Tensor<T> dx(dy.dims());
        for (std::size_t i = 0; i < dy.size(); ++i) {
            dx[i] = mask_[i] ? dy[i] : T(0);
        }
        return dx;
    }

    const char* kind() const override { return "relu"; }
    const std::vector<std::uint8_t>* activation_mask() const override { return &mask_; }

private:
    std::vector<std::uint8_t> mask_;
    bool have_forward_ = false;
};

template <typename T>
class FlattenLayer final : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, bool) override {
        have_forward_ = true;
        in_dims_ = x.dims();
        const std::size_t batch = x.extent(0);
        return x.reshaped({batch, x.size() / batch});
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        this->require_forward_cached(have_forward_);
        return dy.reshaped(in_dims_);
    }

    const char* kind() const override { return "flatten"; }

private:
    std::vector<std::size_t> in_dims_;
    bool have_forward_ = false;
};

// Per-feature (2-D input) or per-channel (4-D input) batch normalization
// with fixed eps 1e-5 and running-stat momentum 0.9. Biased (1/N) variance
// is used both for normalization and for the running estimate. gamma and
// beta are never centralized.
template <typename T>
class BatchNormLiteLayer final : public Layer<T> {
public:
    static constexpr double kEps = 1e-5;
    static constexpr double kMomentum = 0.9;

    BatchNormLiteLayer(std::string name, std::size_t features)
        : name_(std::move(name)),
          gamma_(name_ + "/gamma", Tensor<T>::full({features}, T(1))),
          beta_(name_ + "/beta", Tensor<T>({features})),
          running_mean_({features}),
          running_var_(Tensor<T>::full({features}, T(1))) {}

    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        const auto [count, spatial] = reduce_geometry(x);
        const std::size_t f = features();
        if (train && x.extent(0) < 2) {
            throw std::invalid_argument(name_ + ": train-mode batch must be >= 2");
        }
        have_forward_ = true;
        train_mode_ = train;
        Tensor<T> mean({f}), var({f});
        if (train) {
            for (std::size_t c = 0; c < f; ++c) {
                T acc = T(0);
                visit_feature(x, c, spatial, [&](T v) { acc += v; });
                mean[c] = acc / static_cast<T>(count);
                T sq = T(0);
                visit_feature(x, c, spatial, [&](T v) {
                    const T d = v - mean[c];
                    sq += d * d;
                });
                var[c] = sq / static_cast<T>(count);
            }
            for (std::size_t c = 0; c < f; ++c) {
                running_mean_[c] = static_cast<T>(kMomentum) * running_mean_[c] +
                                   static_cast<T>(1.0 - kMomentum) * mean[c];
                running_var_[c] = static_cast<T>(kMomentum) * running_var_[c] +
                                  static_cast<T>(1.0 - kMomentum) * var[c];
            }
        } else {
            mean = running_mean_;
            var = running_var_;
        }

        inv_std_ = Tensor<T>({f});
        for (std::size_t c = 0; c < f; ++c) {
            inv_std_[c] = T(1) / std::sqrt(var[c] + static_cast<T>(kEps));
        }
        xhat_ = Tensor<T>(x.dims());
        Tensor<T> y(x.dims());
        for (std::size_t c = 0; c < f; ++c) {
            transform_feature(x, xhat_, y, c, spatial, mean[c], inv_std_[c],
                              gamma_.value[c], beta_.value[c]);
        }
        reduce_count_ = count;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        this->require_forward_cached(have_forward_);
        const auto [count, spatial] = reduce_geometry(dy);
        if (count != reduce_count_) {
            throw std::invalid_argument(name_ + ": backward shape mismatch");
        }
        const std::size_t f = features();
        Tensor<T> dx(dy.dims());
        const T n = static_cast<T>(count);
        for (std::size_t c = 0; c < f; ++c) {
            T sum_dy = T(0), sum_dy_xhat = T(0);
            std::size_t idx = 0;
            visit_feature(dy, c, spatial, [&](T v) {
                sum_dy += v;
                sum_dy_xhat += v * feature_value(xhat_, c, spatial, idx);
                ++idx;
            });
            gamma_.grad[c] += sum_dy_xhat;
            beta_.grad[c] += sum_dy;
            if (!train_mode_) {
                // Eval-mode stats are constants; the chain is elementwise.
                const T a = gamma_.value[c] * inv_std_[c];
                idx = 0;
                visit_feature(dy, c, spatial, [&](T v) {
                    feature_value(dx, c, spatial, idx) = a * v;
                    ++idx;
                });
                continue;
            }
            const T a = gamma_.value[c] * inv_std_[c] / n;
            idx = 0;
            visit_feature(dy, c, spatial, [&](T v) {
                const T xh = feature_value(xhat_, c, spatial, idx);
                feature_value(dx, c, spatial, idx) =
                    a * (n * v - sum_dy - xh * sum_dy_xhat);
                ++idx;
            });
        }
        return dx;
    }

    std::vector<ParamTensor<T>*> params() override { return {&gamma_, &beta_}; }
    std::vector<std::pair<std::string, Tensor<T>*>> buffers() override {
        return {{name_ + "/running_mean", &running_mean_},
                {name_ + "/running_var", &running_var_}};
    }
    const char* kind() const override { return "batchnorm_lite"; }

private:
    std::size_t features() const { return gamma_.value.extent(0); }

    // Returns (reduce count, spatial extent) and validates layout.
    std::pair<std::size_t, std::size_t> reduce_geometry(const Tensor<T>& x) const {
        if (x.ndim() == 2) {
            if (x.extent(1) != features()) {
                throw std::invalid_argument(name_ + ": feature extent " +
                                            std::to_string(x.extent(1)) + " vs " +
                                            std::to_string(features()));
            }
            return {x.extent(0), 1};
        }
        if (x.ndim() == 4) {
            if (x.extent(1) != features()) {
                throw std::invalid_argument(name_ + ": channel extent " +
                                            std::to_string(x.extent(1)) + " vs " +
                                            std::to_string(features()));
            }
            return {x.extent(0) * x.extent(2) * x.extent(3), x.extent(2) * x.extent(3)};
        }
        throw std::invalid_argument(name_ + ": expected 2-D or 4-D input, got " +
                                    dims_to_string(x.dims()));
    }

    template <typename F>
    void visit_feature(const Tensor<T>& x, std::size_t c, std::size_t spatial, F&& fn) const {
        const std::size_t batch = x.extent(0);
        const std::size_t f = features();
        for (std::size_t b = 0; b < batch; ++b) {
            const T* base = x.data() + (b * f + c) * spatial;
            for (std::size_t s = 0; s < spatial; ++s) fn(base[s]);
        }
    }

    static T& feature_value(Tensor<T>& x, std::size_t c, std::size_t spatial,
                            std::size_t flat_idx) {
        const std::size_t f = x.extent(1);
        const std::size_t b = flat_idx / spatial, s = flat_idx % spatial;
        return x.data()[(b * f + c) * spatial + s];
    }
    static T feature_value(const Tensor<T>& x, std::size_t c, std::size_t spatial,
                           std::size_t flat_idx) {
        const std::size_t f = x.extent(1);
        const std::size_t b = flat_idx / spatial, s = flat_idx % spatial;
        return x.data()[(b * f + c) * spatial + s];
    }

    void transform_feature(const Tensor<T>& x, Tensor<T>& xhat, Tensor<T>& y,
                           std::size_t c, std::size_t spatial, T mean, T inv_std,
                           T gamma, T beta) const {
        const std::size_t batch = x.extent(0);
        const std::size_t f = features();
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t off = (b * f + c) * spatial;
            const T* px = x.data() + off;
            T* ph = xhat.data() + off;
            T* py = y.data() + off;
            for (std::size_t s = 0; s < spatial; ++s) {
                ph[s] = (px[s] - mean) * inv_std;
                py[s] = gamma * ph[s] + beta;
            }
        }
    }

    std::string name_;
    ParamTensor<T> gamma_, beta_;
    Tensor<T> running_mean_, running_var_;
    Tensor<T> xhat_, inv_std_;
    std::size_t reduce_count_ = 0;
    bool train_mode_ = true;
    bool have_forward_ = false;
};

// ---------------------------------------------------------------------------
// Loss head: softmax cross-entropy, mean over the batch.
// ---------------------------------------------------------------------------

template <typename T>
struct LossResult {
    T loss;
    Tensor<T> dlogits;  // (softmax - onehot) / batch
};

template <typename T>
LossResult<T> softmax_ce(const Tensor<T>& logits, const std::vector<int>& targets) {
    if (logits.ndim() != 2 || logits.extent(0) != targets.size()) {
        throw std::invalid_argument("softmax_ce: logits " + dims_to_string(logits.dims()) +
                                    " vs " + std::to_string(targets.size()) + " targets");
    }
    const std::size_t batch = logits.extent(0), k = logits.extent(1);
    Tensor<T> dlogits({batch, k});
    T total = T(0);
    const T inv_batch = T(1) / static_cast<T>(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        const int t = targets[i];
        if (t < 0 || static_cast<std::size_t>(t) >= k) {
            throw std::out_of_range("softmax_ce: target " + std::to_string(t) +
                                    " out of range [0," + std::to_string(k) + ")");
        }
        const T* row = logits.data() + i * k;
        T mx = row[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        T denom = T(0);
        for (std::size_t j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
        const T log_denom = std::log(denom);
        total += -(row[static_cast<std::size_t>(t)] - mx - log_denom);
        T* drow = dlogits.data() + i * k;
        for (std::size_t j = 0; j < k; ++j) {
            const T p = std::exp(row[j] - mx) / denom;
            drow[j] = p * inv_batch;
        }
        drow[static_cast<std::size_t>(t)] -= inv_batch;
    }
    return {total * inv_batch, std::move(dlogits)};
}

template <typename T>
double accuracy(const Tensor<T>& logits, const std::vector<int>& targets) {
    const std::size_t batch = logits.extent(0), k = logits.extent(1);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < batch; ++i) {
        const T* row = logits.data() + i * k;
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j) {
            if (row[j] > row[best]) best = j;
        }
        if (static_cast<int>(best) == targets[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(batch);
}

// ---------------------------------------------------------------------------
// Sequential model
// ---------------------------------------------------------------------------

template <typename T>
class Model {
public:
    Model() = default;

    DenseLayer<T>& add_dense(std::size_t c_in, std::size_t c_out, RngStream& rng) {
        auto layer = std::make_unique<DenseLayer<T>>(next_name("dense"), c_in, c_out, rng);
        auto& ref = *layer;
        layers_.push_back(std::move(layer));
        check_gc_geometry(ref);
        return ref;
    }

    Conv2dLayer<T>& add_conv2d(Conv2dGeom geom, RngStream& rng) {
        auto layer = std::make_unique<Conv2dLayer<T>>(next_name("conv"), geom, rng);
        auto& ref = *layer;
        layers_.push_back(std::move(layer));
        check_gc_geometry(ref);
        return ref;
    }

    void add_relu() { layers_.push_back(std::make_unique<ReluLayer<T>>()); }
    void add_flatten() { layers_.push_back(std::make_unique<FlattenLayer<T>>()); }

    BatchNormLiteLayer<T>& add_batchnorm(std::size_t features) {
        auto layer = std::make_unique<BatchNormLiteLayer<T>>(next_name("bn"), features);
        auto& ref = *layer;
        layers_.push_back(std::move(layer));
        return ref;
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) {
        Tensor<T> cur = x;
        for (auto& layer : layers_) cur = layer->forward(cur, train);
        return cur;
    }

    Tensor<T> backward(const Tensor<T>& dloss) {
        Tensor<T> cur = dloss_copy(dloss);
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
            cur = (*it)->backward(cur);
        }
        return cur;
    }

    void zero_grad() {
        for (auto* p : params()) p->zero_grad();
    }

    std::vector<ParamTensor<T>*> params() {
        std::vector<ParamTensor<T>*> out;
        for (auto& layer : layers_) {
            for (auto* p : layer->params()) out.push_back(p);
        }
        return out;
    }

    std::vector<std::pair<std::string, Tensor<T>*>> buffers() {
        std::vector<std::pair<std::string, Tensor<T>*>> out;
        for (auto& layer : layers_) {
            for (auto& b : layer->buffers()) out.push_back(b);
        }
        return out;
    }

    // Sign pattern of the most recent forward's ReLU inputs, one mask per
    // relu layer; the fd checker uses it to detect kink straddles.
    std::vector<std::vector<std::uint8_t>> relu_masks() const {
        std::vector<std::vector<std::uint8_t>> out;
        for (const auto& layer : layers_) {
            if (const auto* m = layer->activation_mask()) out.push_back(*m);
        }
        return out;
    }

    std::size_t layer_count() const { return layers_.size(); }
    Layer<T>& layer(std::size_t i) { return *layers_.at(i); }

private:
    static Tensor<T> dloss_copy(const Tensor<T>& d) { return d; }

    std::string next_name(const std::string& base) {
        return base + std::to_string(++counts_[base == "dense" ? 0 : base == "conv" ? 1 : 2]);
    }

    // The (M, N) convention: dense M = C_in, conv M = C_in*k1*k2.
    static void check_gc_geometry(Layer<T>& layer) {
        for (auto* p : layer.params()) {
            if (!p->gc_eligible) continue;
            std::size_t expect_m = 0;
            if (p->gc_meta.kind == GcMeta::Kind::fc) {
                expect_m = p->value.extent(0);
            } else if (p->gc_meta.kind == GcMeta::Kind::conv) {
                const auto& c = p->gc_meta.conv;
                expect_m = c.c_in * c.k1 * c.k2;
            }
            if (p->fan_in != expect_m || p->fan_in * p->fan_out != p->value.size()) {
                throw std::logic_error("model build: fan-in/fan-out decomposition of '" +
                                       p->name + "' violates the column convention");
            }
        }
    }

    std::vector<std::unique_ptr<Layer<T>>> layers_;
    std::array<int, 3> counts_{};
};

}  // namespace gcopt
