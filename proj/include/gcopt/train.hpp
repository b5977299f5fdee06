#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcopt/checkpoint.hpp"
#include "gcopt/config.hpp"
#include "gcopt/dataset.hpp"
#include "gcopt/nn.hpp"
#include "gcopt/optim.hpp"

namespace gcopt {

template <typename T>
Model<T> build_model(const std::vector<LayerSpec>& specs, RngStream& rng) {
    Model<T> model;
    for (const LayerSpec& ls : specs) {
        switch (ls.kind) {
            case LayerSpec::Kind::dense:
                model.add_dense(ls.a, ls.b, rng);
                break;
            case LayerSpec::Kind::conv:
                model.add_conv2d(Conv2dGeom{ls.a, ls.b, ls.k1, ls.k2, ls.stride, ls.pad}, rng);
                break;
            case LayerSpec::Kind::relu:
                model.add_relu();
                break;
            case LayerSpec::Kind::flatten:
                model.add_flatten();
                break;
            case LayerSpec::Kind::bn:
                model.add_batchnorm(ls.a);
                break;
        }
    }
    return model;
}

// Per-step gradient norms around the centralization point for one
// gc-eligible parameter: `pre` is the optimizer input after coupled decay,
// `post` is after GC (equal to pre when GC is off). Norms accumulate in f64.
struct ParamStepRecord {
    std::uint64_t step = 0;
    std::string param;
    double l2_pre = 0.0, max_pre = 0.0;
    double l2_post = 0.0, max_post = 0.0;
};

using StepObserver = std::function<void(const ParamStepRecord&)>;

struct RunOptions {
    std::string resume_from;              // checkpoint path, empty = fresh run
    std::size_t checkpoint_at_epoch = 0;  // write <out>.epochN.ckpt after epoch N
    StepObserver observer;                // called per gc-eligible param per step
};

struct RunSummary {
    std::vector<double> epoch_train_loss;  // mean over the epoch's logged train rows
    std::vector<double> epoch_test_loss;
    std::vector<double> epoch_test_acc;
    double final_test_loss = 0.0;
    double final_test_acc = 0.0;
    std::size_t steps_per_epoch = 0;
    std::uint64_t total_steps = 0;
    std::string csv_text;
    std::string csv_path;   // empty when cfg.out is empty
    std::string ckpt_path;
};

struct RunAborted : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string format_metric(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

template <typename T>
double tensor_l2_f64(const Tensor<T>& t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double v = static_cast<double>(t[i]);
        acc += v * v;
    }
    return std::sqrt(acc);
}

template <typename T>
double tensor_max_abs_f64(const Tensor<T>& t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        acc = std::max(acc, std::abs(static_cast<double>(t[i])));
    }
    return acc;
}

}  // namespace detail

inline double effective_lr(const ExperimentConfig& cfg, std::size_t epoch) {
    double lr = cfg.optimizer.lr;
    for (std::size_t drop : cfg.lr_drop_epochs) {
        if (drop <= epoch) lr *= cfg.lr_drop_factor;
    }
    return lr;
}

template <typename T>
struct EvalResult {
    double loss = 0.0;
    double acc = 0.0;
};

template <typename T>
EvalResult<T> evaluate(Model<T>& model, const Dataset& data,
                       const std::vector<std::size_t>& indices, std::size_t batch_size) {
    if (indices.empty()) return {0.0, 0.0};
    double loss_sum = 0.0;
    std::size_t hits = 0, total = 0;
    for (std::size_t begin = 0; begin < indices.size(); begin += batch_size) {
        const std::size_t count = std::min(batch_size, indices.size() - begin);
        Tensor<T> x = data.gather<T>(indices, begin, count);
        std::vector<int> y = data.gather_labels(indices, begin, count);
        Tensor<T> logits = model.forward(x, /*train=*/false);
        LossResult<T> res = softmax_ce(logits, y);
        loss_sum += static_cast<double>(res.loss) * static_cast<double>(count);
        hits += static_cast<std::size_t>(
            std::lround(accuracy(logits, y) * static_cast<double>(count)));
        total += count;
    }
    return {loss_sum / static_cast<double>(total),
            static_cast<double>(hits) / static_cast<double>(total)};
}

template <typename T>
Checkpoint make_checkpoint(Model<T>& model, const std::vector<OptimizerState<T>>& states,
                           const RngStream& rng, std::size_t epoch,
                           std::uint64_t global_step) {
    Checkpoint ckpt;
    auto params = model.params();
    for (auto* p : params) ckpt.model_tensors.push_back(pack_tensor(p->name, p->value));
    for (auto& [name, buf] : model.buffers()) {
        ckpt.model_tensors.push_back(pack_tensor(name, *buf));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        ckpt.opt_tensors.push_back(pack_tensor("opt/m/" + params[i]->name, states[i].m));
        ckpt.opt_tensors.push_back(pack_tensor("opt/v/" + params[i]->name, states[i].v));
    }
    ckpt.opt_step = states.empty() ? 0 : states[0].step;
    for (const auto& s : states) {
        if (s.step != ckpt.opt_step) {
            throw std::logic_error("checkpoint: optimizer states out of sync");
        }
        if (s.poisoned) ckpt.opt_poisoned = 1;
    }
    const auto rs = rng.state();
    std::copy(rs.begin(), rs.end(), ckpt.rng_state.begin());
    ckpt.epoch = static_cast<std::uint32_t>(epoch);
    ckpt.global_step = global_step;
    return ckpt;
}

template <typename T>
void apply_checkpoint(const Checkpoint& ckpt, Model<T>& model,
                      std::vector<OptimizerState<T>>& states, RngStream& rng,
                      std::size_t& epoch, std::uint64_t& global_step) {
    auto params = model.params();
    auto restore = [&](const std::string& name, Tensor<T>& dst) {
        const CheckpointTensor* ct = ckpt.find(name);
        if (ct == nullptr) {
            throw std::runtime_error("checkpoint incompatibility: tensor '" + name +
                                     "' not found in checkpoint");
        }
        Tensor<T> loaded = unpack_tensor<T>(*ct);
        if (!loaded.same_shape(dst)) {
            throw std::runtime_error("checkpoint incompatibility: tensor '" + name +
                                     "' has shape " + dims_to_string(loaded.dims()) +
                                     ", model expects " + dims_to_string(dst.dims()));
        }
        dst = std::move(loaded);
    };
    for (std::size_t i = 0; i < params.size(); ++i) {
        restore(params[i]->name, params[i]->value);
        restore("opt/m/" + params[i]->name, states[i].m);
        restore("opt/v/" + params[i]->name, states[i].v);
        states[i].step = ckpt.opt_step;
        states[i].poisoned = ckpt.opt_poisoned != 0;
    }
    for (auto& [name, buf] : model.buffers()) restore(name, *buf);
    rng.set_state({ckpt.rng_state[0], ckpt.rng_state[1], ckpt.rng_state[2],
                   ckpt.rng_state[3]});
    epoch = ckpt.epoch;
    global_step = ckpt.global_step;
}

// The experiment runner: seeded init, per-epoch reshuffle, forward/backward,
// gradient preprocessing, optimizer step, metrics CSV, final checkpoint.
// (config, seed) determines every output byte; wall_ms is written as 0
// unless cfg.measure_time is set, which trades that guarantee for real
// timing stamps.
template <typename T, bool kGcCompiled = true>
RunSummary train_run(const ExperimentConfig& cfg, const Dataset& data,
                     const RunOptions& opts = {}) {
    cfg.validate();
    if (dtype_of<T>() != cfg.dtype) {
        throw std::invalid_argument("train_run: instantiated dtype differs from config dtype");
    }
    if constexpr (!kGcCompiled) {
        if (cfg.optimizer.gc_enabled) {
            throw std::invalid_argument("train_run: GC requested but the GC path is compiled out");
        }
    }

    RngStream rng(cfg.seed);
    Model<T> model = build_model<T>(parse_model_spec(cfg.model), rng);
    auto params = model.params();
    std::vector<OptimizerState<T>> states;
    states.reserve(params.size());
    for (auto* p : params) states.emplace_back(p->value.dims());

    std::size_t start_epoch = 0;
    std::uint64_t global_step = 0;
    const bool resumed = !opts.resume_from.empty();
    if (resumed) {
        apply_checkpoint(load_checkpoint(opts.resume_from), model, states, rng,
                         start_epoch, global_step);
        if (start_epoch > cfg.epochs) {
            throw std::invalid_argument("train_run: checkpoint is past the configured epochs");
        }
    }

    const auto t0 = std::chrono::steady_clock::now();
    auto wall_ms = [&]() -> long long {
        if (!cfg.measure_time) return 0;
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now() - t0)
            .count();
    };

    std::ostringstream csv;
    csv << "epoch,step,split,loss,acc,grad_l2_total,grad_max_total,wall_ms";
    if (cfg.trace_layers) {
        for (auto* p : params) csv << ",grad_l2:" << p->name << ",grad_max:" << p->name;
    }
    csv << "\n";

    auto write_row = [&](std::size_t epoch, std::uint64_t step, const char* split,
                         double loss, double acc, double gl2, double gmax,
                         const std::vector<double>& per_layer) {
        csv << epoch << "," << step << "," << split << "," << detail::format_metric(loss)
            << "," << detail::format_metric(acc) << "," << detail::format_metric(gl2)
            << "," << detail::format_metric(gmax) << "," << wall_ms();
        if (cfg.trace_layers) {
            if (per_layer.empty()) {
                for (std::size_t i = 0; i < params.size(); ++i) csv << ",0,0";
            } else {
                for (double v : per_layer) csv << "," << detail::format_metric(v);
            }
        }
        csv << "\n";
    };

    RunSummary summary;
    auto flush_outputs = [&](bool aborted) {
        summary.csv_text = csv.str();
        if (!cfg.out.empty()) {
            summary.csv_path = cfg.out + ".csv";
            std::ofstream f(summary.csv_path, std::ios::trunc);
            if (!f) throw std::runtime_error("run: cannot write " + summary.csv_path);
            f << summary.csv_text;
            if (!aborted) {
                summary.ckpt_path = cfg.out + ".ckpt";
                save_checkpoint(
                    make_checkpoint(model, states, rng, cfg.epochs, global_step),
                    summary.ckpt_path);
            }
        }
    };

    if (!resumed) {
        EvalResult<T> ev = evaluate(model, data, data.test_indices, cfg.batch_size);
        write_row(0, 0, "test", ev.loss, ev.acc, 0.0, 0.0, {});
    }

    const std::size_t steps_per_epoch = data.train_indices.size() / cfg.batch_size;
    if (steps_per_epoch == 0 && cfg.epochs > start_epoch) {
        throw std::invalid_argument("train_run: fewer training samples than one batch");
    }
    summary.steps_per_epoch = steps_per_epoch;

    std::vector<double> per_layer;
    for (std::size_t epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
        OptimizerConfig step_cfg = cfg.optimizer;
        step_cfg.lr = effective_lr(cfg, epoch);

        std::vector<std::size_t> order = data.train_indices;
        rng.shuffle(order);

        double logged_loss_sum = 0.0;
        std::size_t logged_rows = 0;
        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            Tensor<T> x = data.gather<T>(order, b * cfg.batch_size, cfg.batch_size);
            std::vector<int> y = data.gather_labels(order, b * cfg.batch_size, cfg.batch_size);

            model.zero_grad();
            Tensor<T> logits = model.forward(x, /*train=*/true);
            LossResult<T> res = softmax_ce(logits, y);
            if (!std::isfinite(static_cast<double>(res.loss))) {
                csv << "# aborted: non-finite loss at epoch " << epoch << " step "
                    << (global_step + 1) << "\n";
                flush_outputs(/*aborted=*/true);
                throw RunAborted("non-finite loss at epoch " + std::to_string(epoch) +
                                 " step " + std::to_string(global_step + 1));
            }
            model.backward(res.dlogits);

            for (std::size_t i = 0; i < params.size(); ++i) {
                ParamTensor<T>* p = params[i];
                Tensor<T> ghat = decay_coupled(p->grad, p->value, step_cfg);
                if (opts.observer && p->gc_eligible) {
                    ParamStepRecord rec;
                    rec.step = global_step + 1;
                    rec.param = p->name;
                    rec.l2_pre = detail::tensor_l2_f64(ghat);
                    rec.max_pre = detail::tensor_max_abs_f64(ghat);
                    centralize_gradient<T, kGcCompiled>(ghat, p->gc_meta, step_cfg);
                    rec.l2_post = detail::tensor_l2_f64(ghat);
                    rec.max_post = detail::tensor_max_abs_f64(ghat);
                    opts.observer(rec);
                } else {
                    centralize_gradient<T, kGcCompiled>(ghat, p->gc_meta, step_cfg);
                }
                apply_update(p->value, ghat, states[i], step_cfg, p->name);
                if (step_cfg.decay_mode == DecayMode::decoupled &&
                    step_cfg.weight_decay != 0.0) {
                    decoupled_decay_step(p->value, step_cfg);
                }
            }
            ++global_step;

            const bool log_now =
                (global_step % cfg.log_interval == 0) || (b + 1 == steps_per_epoch);
            if (log_now) {
                double l2_sq = 0.0, gmax = 0.0;
                per_layer.clear();
                for (auto* p : params) {
                    const double l2 = detail::tensor_l2_f64(p->grad);
                    const double mx = detail::tensor_max_abs_f64(p->grad);
                    l2_sq += l2 * l2;
                    gmax = std::max(gmax, mx);
                    if (cfg.trace_layers) {
                        per_layer.push_back(l2);
                        per_layer.push_back(mx);
                    }
                }
                const double batch_loss = static_cast<double>(res.loss);
                write_row(epoch, global_step, "train", batch_loss, accuracy(logits, y),
                          std::sqrt(l2_sq), gmax, per_layer);
                logged_loss_sum += batch_loss;
                ++logged_rows;
            }
        }

        EvalResult<T> ev = evaluate(model, data, data.test_indices, cfg.batch_size);
        write_row(epoch, global_step, "test", ev.loss, ev.acc, 0.0, 0.0, {});
        summary.epoch_train_loss.push_back(
            logged_rows ? logged_loss_sum / static_cast<double>(logged_rows) : 0.0);
        summary.epoch_test_loss.push_back(ev.loss);
        summary.epoch_test_acc.push_back(ev.acc);
        summary.final_test_loss = ev.loss;
        summary.final_test_acc = ev.acc;

        if (opts.checkpoint_at_epoch == epoch && !cfg.out.empty()) {
            save_checkpoint(make_checkpoint(model, states, rng, epoch, global_step),
                            cfg.out + ".epoch" + std::to_string(epoch) + ".ckpt");
        }
    }

    if (cfg.epochs == 0 || start_epoch == cfg.epochs) {
        EvalResult<T> ev = evaluate(model, data, data.test_indices, cfg.batch_size);
        summary.final_test_loss = ev.loss;
        summary.final_test_acc = ev.acc;
    }

    summary.total_steps = global_step;
    flush_outputs(/*aborted=*/false);
    return summary;
}

// Runtime-dtype dispatch used by the CLI.
template <bool kGcCompiled = true>
RunSummary train_run_dispatch(const ExperimentConfig& cfg, const Dataset& data,
                              const RunOptions& opts = {}) {
    if (cfg.dtype == Dtype::f32) return train_run<float, kGcCompiled>(cfg, data, opts);
    return train_run<double, kGcCompiled>(cfg, data, opts);
}

}  // namespace gcopt
