#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gcopt {

// Parsed metrics CSV. Rows keep (epoch, step, split) plus the numeric
// columns in header order; a trailing "# aborted..." line sets the flag.
struct MetricsTable {
    std::vector<std::string> columns;  // numeric column names (after split)
    struct Row {
        std::size_t epoch = 0;
        std::uint64_t step = 0;
        std::string split;
        std::vector<double> values;
    };
    std::vector<Row> rows;
    bool aborted = false;

    std::size_t column_index(const std::string& name) const;
};

MetricsTable load_metrics_csv(const std::string& path);
MetricsTable parse_metrics_csv(const std::string& text, const std::string& origin);

// Pure comparison of two runs sharing schema and step grid. Deltas are
// a - b throughout, so swapping the inputs negates every signed delta.
// Epoch train loss is the mean of that epoch's logged train rows;
// epochs-to-threshold is the first epoch at or past the threshold (epoch
// count, or null when never reached).
std::string compare_runs_json(const MetricsTable& a, const MetricsTable& b,
                              double loss_threshold, double acc_threshold);

// Epochs-to-threshold helpers exposed for the harness; 0 means "never".
std::size_t epochs_to_train_loss(const MetricsTable& t, double threshold);
std::size_t epochs_to_test_acc(const MetricsTable& t, double threshold);

}  // namespace gcopt
