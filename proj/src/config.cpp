#include "gcopt/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gcopt {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    parts.push_back(cur);
    return parts;
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::size_t to_uint(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos != s.size() || v < 0) throw std::invalid_argument("bad");
        return static_cast<std::size_t>(v);
    } catch (...) {
        throw std::invalid_argument("config: bad " + what + " '" + s + "'");
    }
}

double to_real(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (...) {
        throw std::invalid_argument("config: bad " + what + " '" + s + "'");
    }
}

bool to_bool(const std::string& s, const std::string& what) {
    if (s == "on" || s == "true" || s == "1") return true;
    if (s == "off" || s == "false" || s == "0") return false;
    throw std::invalid_argument("config: bad " + what + " '" + s + "' (want on|off)");
}

std::string real_to_string(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::vector<LayerSpec> parse_model_spec(const std::string& spec) {
    std::vector<LayerSpec> out;
    for (const std::string& token : split(spec, ',')) {
        const auto f = split(trim(token), ':');
        LayerSpec ls;
        if (f[0] == "dense") {
            if (f.size() != 3) throw std::invalid_argument("model spec: want dense:IN:OUT in '" + token + "'");
            ls.kind = LayerSpec::Kind::dense;
            ls.a = to_uint(f[1], "dense in");
            ls.b = to_uint(f[2], "dense out");
            if (ls.a == 0 || ls.b == 0) {
                throw std::invalid_argument("model spec: dense extents must be >= 1");
            }
        } else if (f[0] == "conv") {
            if (f.size() != 4 && f.size() != 7) {
                throw std::invalid_argument(
                    "model spec: want conv:CIN:COUT:K or conv:CIN:COUT:K1:K2:STRIDE:PAD in '" +
                    token + "'");
            }
            ls.kind = LayerSpec::Kind::conv;
            ls.a = to_uint(f[1], "conv c_in");
            ls.b = to_uint(f[2], "conv c_out");
            ls.k1 = to_uint(f[3], "conv k");
            if (f.size() == 4) {
                ls.k2 = ls.k1;
                ls.stride = 1;
                ls.pad = 0;
            } else {
                ls.k2 = to_uint(f[4], "conv k2");
                ls.stride = to_uint(f[5], "conv stride");
                ls.pad = to_uint(f[6], "conv pad");
            }
            if (ls.a == 0 || ls.b == 0 || ls.k1 == 0 || ls.k2 == 0 || ls.stride == 0) {
                throw std::invalid_argument(
                    "model spec: conv channel/kernel/stride extents must be >= 1");
            }
        } else if (f[0] == "relu") {
            ls.kind = LayerSpec::Kind::relu;
        } else if (f[0] == "flatten") {
            ls.kind = LayerSpec::Kind::flatten;
        } else if (f[0] == "bn") {
            if (f.size() != 2) throw std::invalid_argument("model spec: want bn:FEATURES in '" + token + "'");
            ls.kind = LayerSpec::Kind::bn;
            ls.a = to_uint(f[1], "bn features");
            if (ls.a == 0) throw std::invalid_argument("model spec: bn features must be >= 1");
        } else {
            throw std::invalid_argument("model spec: unknown layer '" + f[0] + "'");
        }
        out.push_back(ls);
    }
    if (out.empty()) throw std::invalid_argument("model spec: empty");
    return out;
}

std::string model_spec_to_string(const std::vector<LayerSpec>& specs) {
    std::ostringstream os;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (i) os << ",";
        const LayerSpec& ls = specs[i];
        switch (ls.kind) {
            case LayerSpec::Kind::dense: os << "dense:" << ls.a << ":" << ls.b; break;
            case LayerSpec::Kind::conv:
                os << "conv:" << ls.a << ":" << ls.b << ":" << ls.k1 << ":" << ls.k2 << ":"
                   << ls.stride << ":" << ls.pad;
                break;
            case LayerSpec::Kind::relu: os << "relu"; break;
            case LayerSpec::Kind::flatten: os << "flatten"; break;
            case LayerSpec::Kind::bn: os << "bn:" << ls.a; break;
        }
    }
    return os.str();
}

void ExperimentConfig::validate() const {
    parse_model_spec(model);
    optimizer.validate();
    if (batch_size == 0) throw std::invalid_argument("config: batch_size must be >= 1");
    if (log_interval == 0) throw std::invalid_argument("config: log_interval must be >= 1");
    if (!(lr_drop_factor > 0.0)) throw std::invalid_argument("config: lr_drop_factor must be > 0");
    if (dataset.empty()) throw std::invalid_argument("config: dataset spec is empty");
}

void apply_config_override(ExperimentConfig& cfg, const std::string& key,
                           const std::string& value) {
    if (key == "model") {
        cfg.model = value;
    } else if (key == "optimizer") {
        cfg.optimizer.kind = optimizer_kind_from_string(value);
        cfg.optimizer.decay_mode = cfg.optimizer.uses_decoupled_kind()
                                       ? DecayMode::decoupled
                                       : DecayMode::coupled_l2;
    } else if (key == "lr") {
        cfg.optimizer.lr = to_real(value, "lr");
    } else if (key == "momentum") {
        cfg.optimizer.momentum = to_real(value, "momentum");
    } else if (key == "beta1") {
        cfg.optimizer.beta1 = to_real(value, "beta1");
    } else if (key == "beta2") {
        cfg.optimizer.beta2 = to_real(value, "beta2");
    } else if (key == "eps") {
        cfg.optimizer.eps = to_real(value, "eps");
    } else if (key == "wd") {
        cfg.optimizer.weight_decay = to_real(value, "wd");
    } else if (key == "decay_mode") {
        if (value == "coupled_l2") {
            cfg.optimizer.decay_mode = DecayMode::coupled_l2;
        } else if (value == "decoupled") {
            cfg.optimizer.decay_mode = DecayMode::decoupled;
        } else {
            throw std::invalid_argument("config: bad decay_mode '" + value + "'");
        }
    } else if (key == "momentum_form") {
        if (value == "paper") {
            cfg.optimizer.momentum_form = MomentumForm::paper;
        } else if (value == "classic") {
            cfg.optimizer.momentum_form = MomentumForm::classic;
        } else {
            throw std::invalid_argument("config: bad momentum_form '" + value + "'");
        }
    } else if (key == "gc") {
        cfg.optimizer.gc_enabled = to_bool(value, "gc");
    } else if (key == "gc_fc") {
        cfg.optimizer.gc.apply_to_fc = to_bool(value, "gc_fc");
    } else if (key == "gc_conv") {
        cfg.optimizer.gc.apply_to_conv = to_bool(value, "gc_conv");
    } else if (key == "gc_min_fan_in") {
        cfg.optimizer.gc.min_fan_in = to_uint(value, "gc_min_fan_in");
    } else if (key == "epochs") {
        cfg.epochs = to_uint(value, "epochs");
    } else if (key == "batch_size") {
        cfg.batch_size = to_uint(value, "batch_size");
    } else if (key == "lr_drop_epochs") {
        cfg.lr_drop_epochs.clear();
        if (!trim(value).empty()) {
            for (const std::string& tok : split(value, ',')) {
                cfg.lr_drop_epochs.push_back(to_uint(trim(tok), "lr_drop_epochs entry"));
            }
        }
    } else if (key == "lr_drop_factor") {
        cfg.lr_drop_factor = to_real(value, "lr_drop_factor");
    } else if (key == "dataset") {
        cfg.dataset = value;
    } else if (key == "seed") {
        cfg.seed = static_cast<std::uint64_t>(to_uint(value, "seed"));
    } else if (key == "dtype") {
        if (value == "f32") {
            cfg.dtype = Dtype::f32;
        } else if (value == "f64") {
            cfg.dtype = Dtype::f64;
        } else {
            throw std::invalid_argument("config: bad dtype '" + value + "' (want f32|f64)");
        }
    } else if (key == "out") {
        cfg.out = value;
    } else if (key == "log_interval") {
        cfg.log_interval = to_uint(value, "log_interval");
    } else if (key == "trace_layers") {
        cfg.trace_layers = to_bool(value, "trace_layers");
    } else if (key == "measure_time") {
        cfg.measure_time = to_bool(value, "measure_time");
    } else {
        throw std::invalid_argument("config: unknown key '" + key + "'");
    }
}

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            apply_config_override(cfg, key, value);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": " +
                                        e.what());
        }
    }
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string ExperimentConfig::to_text() const {
    std::ostringstream os;
    os << "model = " << model << "\n";
    os << "optimizer = " << optimizer_kind_name(optimizer.kind) << "\n";
    os << "lr = " << real_to_string(optimizer.lr) << "\n";
    os << "momentum = " << real_to_string(optimizer.momentum) << "\n";
    os << "beta1 = " << real_to_string(optimizer.beta1) << "\n";
    os << "beta2 = " << real_to_string(optimizer.beta2) << "\n";
    os << "eps = " << real_to_string(optimizer.eps) << "\n";
    os << "wd = " << real_to_string(optimizer.weight_decay) << "\n";
    os << "decay_mode = "
       << (optimizer.decay_mode == DecayMode::decoupled ? "decoupled" : "coupled_l2") << "\n";
    os << "momentum_form = "
       << (optimizer.momentum_form == MomentumForm::paper ? "paper" : "classic") << "\n";
    os << "gc = " << (optimizer.gc_enabled ? "on" : "off") << "\n";
    os << "gc_fc = " << (optimizer.gc.apply_to_fc ? "on" : "off") << "\n";
    os << "gc_conv = " << (optimizer.gc.apply_to_conv ? "on" : "off") << "\n";
    os << "gc_min_fan_in = " << optimizer.gc.min_fan_in << "\n";
    os << "epochs = " << epochs << "\n";
    os << "batch_size = " << batch_size << "\n";
    os << "lr_drop_epochs = ";
    for (std::size_t i = 0; i < lr_drop_epochs.size(); ++i) {
        if (i) os << ",";
        os << lr_drop_epochs[i];
    }
    os << "\n";
    os << "lr_drop_factor = " << real_to_string(lr_drop_factor) << "\n";
    os << "dataset = " << dataset << "\n";
    os << "seed = " << seed << "\n";
    os << "dtype = " << dtype_name(dtype) << "\n";
    os << "out = " << out << "\n";
    os << "log_interval = " << log_interval << "\n";
    os << "trace_layers = " << (trace_layers ? "on" : "off") << "\n";
    os << "measure_time = " << (measure_time ? "on" : "off") << "\n";
    return os.str();
}

bool differs_only_in_gc(const ExperimentConfig& a, const ExperimentConfig& b) {
    ExperimentConfig a2 = a, b2 = b;
    a2.optimizer.gc_enabled = false;
    b2.optimizer.gc_enabled = false;
    a2.optimizer.gc = GcPolicy{};
    b2.optimizer.gc = GcPolicy{};
    a2.out.clear();
    b2.out.clear();
    return a2.to_text() == b2.to_text();
}

}  // namespace gcopt
