#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcopt/config.hpp"
#include "gcopt/nn.hpp"
#include "gcopt/tensor.hpp"

namespace gcopt {

// One measured quantity against its bound. Report-only entries (no bound to
// assert, e.g. descriptive statistics) carry asserted=false and always pass.
struct TheoremCheck {
    std::string description;
    double measured = 0.0;
    double bound = 0.0;
    bool asserted = true;
    bool pass = true;
};

struct TheoremReport {
    std::string name;
    std::uint64_t seed = 0;
    std::vector<TheoremCheck> checks;
    bool pass = true;

    void add(const std::string& description, double measured, double bound) {
        const bool ok = measured <= bound;
        checks.push_back({description, measured, bound, true, ok});
        pass = pass && ok;
    }

    void add_reported(const std::string& description, double measured) {
        checks.push_back({description, measured, 0.0, false, true});
    }

    // Canonical serialization is timestamp-free so identical seeds produce
    // byte-identical reports; opt in to a wall-clock stamp for logs.
    std::string to_json(bool include_timestamp = false) const;
    std::string to_text() const;
};

// Explicit-projector identities: P symmetric, P^2 = P (full product for
// small M, sampled entries for large M), trace(P) = M-1, and the
// annihilation bound |1^T P g| <= 1e-10 * ||g||_2 over random g.
TheoremReport check_projection_algebra(const std::vector<std::size_t>& m_values,
                                       std::size_t trials, std::uint64_t seed);

// Pythagorean norm identity ||Pg||^2 + (1/M)(1^T g)^2 = ||g||^2 (1e-10
// relative) and the reduction inequality ||Pg|| <= ||g||, over random
// vectors and per-column over random matrices.
struct NormCheckShape {
    std::size_t rows = 0;
    std::size_t cols = 1;  // 1 = plain vector
};
TheoremReport check_norm_reduction(const std::vector<NormCheckShape>& shapes,
                                   std::size_t trials, std::uint64_t seed);

// Hessian-side contraction: sigma_max(PH) <= sigma_max(H) by power
// iteration, and the Frobenius identity ||PH||_F^2 = ||H||_F^2 -
// ||e^T H||_2^2 (1e-9 relative) for random symmetric H.
TheoremReport check_hessian_contraction(std::size_t m, std::size_t trials,
                                        std::uint64_t seed);

// Output-invariance of the trained single dense layer under constant input
// shift: after t steps of SGDM+GC (paper momentum form, no decay) the
// logit difference for x vs x + gamma*1 equals gamma * 1^T w^0 per column,
// and 1^T w stays at its initial value throughout. The Adam variant of the
// drift is reported without a bound.
TheoremReport check_output_invariance(const std::vector<std::size_t>& step_marks,
                                      const std::vector<double>& gammas,
                                      std::uint64_t seed);

// Per-column |mean(w_i)| listing for every gc-eligible parameter,
// log10-scaled with a 1e-300 floor. Report-only.
struct WeightMeanEntry {
    std::string param;
    std::size_t column = 0;
    double log10_abs_mean = 0.0;
};
std::vector<WeightMeanEntry> weight_mean_profile(Model<double>& model);
std::string weight_mean_profile_to_text(const std::vector<WeightMeanEntry>& entries);

// Paired-run gradient norm traces. Runs both arms of a config pair that may
// differ only in the gc flags, with identical seeds and data order, and
// records per-parameter pre/post-centralization norms at every step.
// The per-application inequality ||ghat|| <= ||g|| is asserted for every
// arm that has GC on; the cross-run comparison is descriptive only.
struct NormTraceRecord {
    std::uint64_t step = 0;
    std::string param;
    double l2_pre = 0.0, max_pre = 0.0;
    double l2_post = 0.0, max_post = 0.0;
};

struct NormTrace {
    std::vector<NormTraceRecord> arm_a;
    std::vector<NormTraceRecord> arm_b;
    bool a_has_gc = false;
    bool b_has_gc = false;
    std::size_t inequality_violations = 0;
    double max_violation_excess = 0.0;  // max (l2_post - l2_pre) / l2_pre over GC arms
    double median_l2_ratio = 0.0;       // median over matched records of
                                        // l2_pre(a) / l2_pre(b)
    TheoremReport report;
};

NormTrace trace_gradient_norms(const ExperimentConfig& arm_a, const ExperimentConfig& arm_b);
std::string norm_trace_to_csv(const NormTrace& trace);

// The standalone check suite behind the `verify` CLI subcommand. Checks are
// independent and may run on up to max_workers threads; report order is
// fixed regardless.
struct VerifySuiteResult {
    std::vector<TheoremReport> reports;
    bool pass = true;
};
VerifySuiteResult run_verify_suite(std::uint64_t seed, unsigned max_workers = 1);
std::string verify_suite_to_json(const VerifySuiteResult& result,
                                 bool include_timestamp = false);

}  // namespace gcopt
