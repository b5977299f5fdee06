#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gcopt/nn.hpp"
#include "gcopt/tensor.hpp"

namespace gcopt {

using LossFn = std::function<LossResult<double>(const Tensor<double>&,
                                                const std::vector<int>&)>;

struct FdEntryFailure {
    std::string param;
    std::size_t index;
    double analytic;
    double numeric;
    double rel_error;
};

struct FdTensorReport {
    std::string param;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;  // kink-straddling entries
};

struct FdReport {
    std::vector<FdTensorReport> tensors;
    std::vector<FdEntryFailure> failures;
    double max_rel_error = 0.0;
    std::size_t total_skipped = 0;
    bool pass = true;
};

// Central-difference check of every parameter entry against the backward
// pass, f64 models only. An entry whose +/-h perturbations flip any ReLU
// input sign straddles a kink (the subgradient is ambiguous there) and is
// excluded from the comparison rather than reported as a failure.
//
// BN running stats are snapshotted and restored, so the check leaves the
// model byte-identical apart from layer activation caches.
inline FdReport fd_gradient_check(Model<double>& model, const Tensor<double>& x,
                                  const std::vector<int>& targets, double h = 1e-5,
                                  double tolerance = 1e-4, const LossFn& loss = {}) {
    const LossFn loss_fn = loss ? loss : LossFn(softmax_ce<double>);
    auto buffers = model.buffers();
    std::vector<Tensor<double>> saved_buffers;
    saved_buffers.reserve(buffers.size());
    for (auto& [name, buf] : buffers) saved_buffers.push_back(*buf);

    auto loss_at = [&]() {
        Tensor<double> logits = model.forward(x, /*train=*/true);
        return loss_fn(logits, targets).loss;
    };

    model.zero_grad();
    Tensor<double> logits = model.forward(x, true);
    LossResult<double> base = loss_fn(logits, targets);
    model.backward(base.dlogits);

    FdReport report;
    for (ParamTensor<double>* p : model.params()) {
        FdTensorReport tr;
        tr.param = p->name;
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double orig = p->value[i];

            p->value[i] = orig + h;
            const double loss_plus = loss_at();
            const auto masks_plus = model.relu_masks();

            p->value[i] = orig - h;
            const double loss_minus = loss_at();
            const auto masks_minus = model.relu_masks();

            p->value[i] = orig;

            if (masks_plus != masks_minus) {
                ++tr.skipped;
                continue;
            }

            const double numeric = (loss_plus - loss_minus) / (2.0 * h);
            const double analytic = p->grad[i];
            const double rel =
                std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
            tr.max_rel_error = std::max(tr.max_rel_error, rel);
            ++tr.checked;
            if (rel > tolerance) {
                report.failures.push_back({p->name, i, analytic, numeric, rel});
                report.pass = false;
            }
        }
        report.max_rel_error = std::max(report.max_rel_error, tr.max_rel_error);
        report.total_skipped += tr.skipped;
        report.tensors.push_back(std::move(tr));
    }

    for (std::size_t i = 0; i < buffers.size(); ++i) *buffers[i].second = saved_buffers[i];
    return report;
}

}  // namespace gcopt
