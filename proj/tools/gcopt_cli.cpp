#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "gcopt/compare.hpp"
#include "gcopt/config.hpp"
#include "gcopt/dataset.hpp"
#include "gcopt/parallel.hpp"
#include "gcopt/train.hpp"
#include "gcopt/verify.hpp"

namespace {

struct RunFlags {
    std::string config_path;
    std::string optimizer, gc, lr, wd, decay_mode, momentum_form, epochs, batch_size,
        seed, dataset, out, dtype, model;
    std::string resume;
    std::size_t checkpoint_at_epoch = 0;
    bool measure_time = false;
    bool trace_layers = false;
};

gcopt::ExperimentConfig resolve_config(const RunFlags& flags) {
    gcopt::ExperimentConfig cfg;
    if (!flags.config_path.empty()) cfg = gcopt::load_config_file(flags.config_path);
    auto maybe = [&](const char* key, const std::string& value) {
        if (!value.empty()) gcopt::apply_config_override(cfg, key, value);
    };
    maybe("optimizer", flags.optimizer);
    maybe("gc", flags.gc);
    maybe("lr", flags.lr);
    maybe("wd", flags.wd);
    maybe("decay_mode", flags.decay_mode);
    maybe("momentum_form", flags.momentum_form);
    maybe("epochs", flags.epochs);
    maybe("batch_size", flags.batch_size);
    maybe("seed", flags.seed);
    maybe("dataset", flags.dataset);
    maybe("out", flags.out);
    maybe("dtype", flags.dtype);
    maybe("model", flags.model);
    if (flags.measure_time) cfg.measure_time = true;
    if (flags.trace_layers) cfg.trace_layers = true;
    return cfg;
}

int cmd_run(const RunFlags& flags) {
    gcopt::ExperimentConfig cfg = resolve_config(flags);
    cfg.validate();
    if (cfg.out.empty()) {
        std::cerr << "run: --out (or `out` in the config file) is required\n";
        return 2;
    }
    const gcopt::Dataset data = gcopt::make_dataset(cfg.dataset, cfg.seed);
    gcopt::RunOptions opts;
    opts.resume_from = flags.resume;
    opts.checkpoint_at_epoch = flags.checkpoint_at_epoch;
    try {
        const gcopt::RunSummary summary = gcopt::train_run_dispatch(cfg, data, opts);
        std::printf("run complete: %llu steps, final test loss %.6g, acc %.4f\n",
                    static_cast<unsigned long long>(summary.total_steps),
                    summary.final_test_loss, summary.final_test_acc);
        std::printf("metrics: %s\ncheckpoint: %s\n", summary.csv_path.c_str(),
                    summary.ckpt_path.c_str());
        return 0;
    } catch (const gcopt::RunAborted& e) {
        std::cerr << "run aborted: " << e.what() << "\n";
        return 1;
    }
}

int cmd_compare(const std::string& a_path, const std::string& b_path,
                double loss_threshold, double acc_threshold, const std::string& out) {
    const gcopt::MetricsTable a = gcopt::load_metrics_csv(a_path);
    const gcopt::MetricsTable b = gcopt::load_metrics_csv(b_path);
    const std::string summary =
        gcopt::compare_runs_json(a, b, loss_threshold, acc_threshold);
    if (out.empty()) {
        std::cout << summary << "\n";
    } else {
        std::ofstream f(out, std::ios::trunc);
        if (!f) throw std::runtime_error("compare: cannot write " + out);
        f << summary << "\n";
        std::printf("summary: %s\n", out.c_str());
    }
    return 0;
}

int cmd_verify(std::uint64_t seed, const std::string& json_out,
               const std::string& trace_out) {
    gcopt::VerifySuiteResult result =
        gcopt::run_verify_suite(seed, gcopt::worker_thread_cap());

    if (!trace_out.empty()) {
        // Small CNN pair for the gradient-norm trace, identical but for gc.
        gcopt::ExperimentConfig base;
        base.model = "conv:1:6:3,relu,flatten,dense:216:32,relu,dense:32:10";
        base.dataset = "synthetic:img:10:60:1:8:8:0.08";
        base.epochs = 4;
        base.batch_size = 16;
        base.seed = seed;
        base.optimizer.kind = gcopt::OptimizerKind::sgdm;
        base.optimizer.lr = 0.05;
        base.optimizer.weight_decay = 0.0;
        gcopt::ExperimentConfig with_gc = base;
        with_gc.optimizer.gc_enabled = true;
        const gcopt::NormTrace trace = gcopt::trace_gradient_norms(with_gc, base);
        result.reports.push_back(trace.report);
        result.pass = result.pass && trace.report.pass;
        std::ofstream f(trace_out, std::ios::trunc);
        if (!f) throw std::runtime_error("verify: cannot write " + trace_out);
        f << gcopt::norm_trace_to_csv(trace);
        std::printf("trace: %s\n", trace_out.c_str());
    }

    for (const auto& report : result.reports) std::cout << report.to_text();
    if (!json_out.empty()) {
        std::ofstream f(json_out, std::ios::trunc);
        if (!f) throw std::runtime_error("verify: cannot write " + json_out);
        f << gcopt::verify_suite_to_json(result) << "\n";
        std::printf("report: %s\n", json_out.c_str());
    }
    std::printf("verify: %s\n", result.pass ? "all checks passed" : "FAILURES");
    return result.pass ? 0 : 1;
}

int cmd_gen_data(const std::string& spec, std::uint64_t seed, const std::string& out,
                 const std::string& format) {
    const gcopt::Dataset data = gcopt::make_dataset(spec, seed);
    if (format == "csv") {
        gcopt::write_csv_labeled(data, out + ".csv");
        std::printf("wrote %s.csv (%zu samples, %zu classes)\n", out.c_str(),
                    data.sample_count(), data.num_classes);
    } else if (format == "idx") {
        gcopt::write_idx_pair(data, out + "-images.idx", out + "-labels.idx");
        std::printf("wrote %s-images.idx and %s-labels.idx (%zu samples)\n", out.c_str(),
                    out.c_str(), data.sample_count());
    } else {
        std::cerr << "gen-data: unknown format '" << format << "' (want csv|idx)\n";
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gradient-centralization optimizer benchmark harness"};
    app.require_subcommand(1);

    RunFlags run_flags;
    CLI::App* run = app.add_subcommand("run", "Train a model per config and emit metrics");
    run->add_option("--config", run_flags.config_path, "Config file (key = value lines)");
    run->add_option("--optimizer", run_flags.optimizer, "sgdm|sgdw|adagrad|adam|adamw");
    run->add_option("--gc", run_flags.gc, "on|off");
    run->add_option("--lr", run_flags.lr, "Learning rate");
    run->add_option("--wd", run_flags.wd, "Weight decay");
    run->add_option("--decay-mode", run_flags.decay_mode, "coupled_l2|decoupled");
    run->add_option("--momentum-form", run_flags.momentum_form, "paper|classic");
    run->add_option("--epochs", run_flags.epochs, "Epochs");
    run->add_option("--batch-size", run_flags.batch_size, "Batch size");
    run->add_option("--seed", run_flags.seed, "Run seed");
    run->add_option("--dataset", run_flags.dataset, "Dataset spec string");
    run->add_option("--out", run_flags.out, "Output prefix (<out>.csv, <out>.ckpt)");
    run->add_option("--dtype", run_flags.dtype, "f32|f64");
    run->add_option("--model", run_flags.model, "Model spec string");
    run->add_option("--resume", run_flags.resume, "Resume from checkpoint");
    run->add_option("--checkpoint-at-epoch", run_flags.checkpoint_at_epoch,
                    "Also write a checkpoint after this epoch");
    run->add_flag("--measure-time", run_flags.measure_time,
                  "Real wall_ms stamps (trades away rerun byte-identity)");
    run->add_flag("--trace-layers", run_flags.trace_layers, "Per-layer gradient columns");

    std::string cmp_a, cmp_b, cmp_out;
    double loss_threshold = 0.5, acc_threshold = 0.8;
    CLI::App* cmp = app.add_subcommand("compare", "Summarize two metrics CSVs");
    cmp->add_option("a", cmp_a, "First metrics CSV")->required();
    cmp->add_option("b", cmp_b, "Second metrics CSV")->required();
    cmp->add_option("--loss-threshold", loss_threshold, "Epochs-to train-loss threshold");
    cmp->add_option("--acc-threshold", acc_threshold, "Epochs-to test-accuracy threshold");
    cmp->add_option("--out", cmp_out, "Write summary JSON here instead of stdout");

    std::uint64_t verify_seed = 0;
    std::string verify_out, verify_trace_out;
    CLI::App* verify = app.add_subcommand("verify", "Run the theorem check suite");
    verify->add_option("--seed", verify_seed, "Suite seed");
    verify->add_option("--out", verify_out, "Write the JSON report here");
    verify->add_option("--trace-out", verify_trace_out,
                       "Also run a paired CNN gradient-norm trace, CSV here");

    std::string gen_spec, gen_out, gen_format = "csv";
    std::uint64_t gen_seed = 0;
    CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset file");
    gen->add_option("--spec", gen_spec, "Dataset spec (synthetic:...)")->required();
    gen->add_option("--seed", gen_seed, "Generator seed");
    gen->add_option("--out", gen_out, "Output path prefix")->required();
    gen->add_option("--format", gen_format, "csv|idx");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (run->parsed()) return cmd_run(run_flags);
        if (cmp->parsed()) {
            return cmd_compare(cmp_a, cmp_b, loss_threshold, acc_threshold, cmp_out);
        }
        if (verify->parsed()) return cmd_verify(verify_seed, verify_out, verify_trace_out);
        if (gen->parsed()) return cmd_gen_data(gen_spec, gen_seed, gen_out, gen_format);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
