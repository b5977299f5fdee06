#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcopt/optim.hpp"
#include "gcopt/rng.hpp"
#include "gcopt/tensor.hpp"

namespace gcopt {

// One entry of a model spec string. The spec grammar (comma-separated):
//   dense:IN:OUT
//   conv:CIN:COUT:K            (square kernel, stride 1, pad 0)
//   conv:CIN:COUT:K1:K2:STRIDE:PAD
//   relu
//   flatten
//   bn:FEATURES
struct LayerSpec {
    enum class Kind { dense, conv, relu, flatten, bn } kind = Kind::dense;
    std::size_t a = 0, b = 0, k1 = 0, k2 = 0, stride = 1, pad = 0;
};

std::vector<LayerSpec> parse_model_spec(const std::string& spec);
std::string model_spec_to_string(const std::vector<LayerSpec>& specs);

struct ExperimentConfig {
    std::string model = "dense:64:128,relu,dense:128:128,relu,dense:128:10";
    OptimizerConfig optimizer;
    std::size_t epochs = 10;
    std::size_t batch_size = 64;
    std::vector<std::size_t> lr_drop_epochs;  // lr *= lr_drop_factor entering these epochs
    double lr_drop_factor = 0.1;
    std::string dataset = "synthetic:vec:10:500:64:0.35";
    std::uint64_t seed = 1;
    Dtype dtype = Dtype::f32;
    std::string out;               // output prefix: <out>.csv, <out>.ckpt
    std::size_t log_interval = 10;
    bool trace_layers = false;
    bool measure_time = false;     // real wall_ms stamps break rerun byte-identity

    void validate() const;

    // Serialize as the flat key=value config format (parse_config inverse).
    std::string to_text() const;
};

// Parse the flat key-value config format: one `key = value` per line,
// '#' comments, unknown keys are errors.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

// Apply one key=value override (the CLI flags funnel through this).
void apply_config_override(ExperimentConfig& cfg, const std::string& key,
                           const std::string& value);

// Paired-run validity: everything but the GC toggle fields must agree.
bool differs_only_in_gc(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace gcopt
