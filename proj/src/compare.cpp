#include "gcopt/compare.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace gcopt {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

// Per-epoch mean of the logged train-row losses.
std::map<std::size_t, double> epoch_train_loss_means(const MetricsTable& t) {
    const std::size_t loss_col = t.column_index("loss");
    std::map<std::size_t, std::pair<double, std::size_t>> acc;
    for (const auto& row : t.rows) {
        if (row.split != "train") continue;
        auto& slot = acc[row.epoch];
        slot.first += row.values[loss_col];
        slot.second += 1;
    }
    std::map<std::size_t, double> out;
    for (const auto& [epoch, slot] : acc) {
        out[epoch] = slot.first / static_cast<double>(slot.second);
    }
    return out;
}

const MetricsTable::Row* last_row_of_split(const MetricsTable& t, const std::string& split) {
    const MetricsTable::Row* found = nullptr;
    for (const auto& row : t.rows) {
        if (row.split == split) found = &row;
    }
    return found;
}

}  // namespace

std::size_t MetricsTable::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i] == name) return i;
    }
    throw std::invalid_argument("metrics: no column '" + name + "'");
}

MetricsTable parse_metrics_csv(const std::string& text, const std::string& origin) {
    MetricsTable table;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(origin + ": empty metrics file");
    auto header = split_csv_line(line);
    if (header.size() < 4 || header[0] != "epoch" || header[1] != "step" ||
        header[2] != "split") {
        throw std::runtime_error(origin + ": unexpected metrics header '" + line + "'");
    }
    table.columns.assign(header.begin() + 3, header.end());

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line.rfind("# aborted", 0) == 0) table.aborted = true;
            continue;
        }
        auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw std::runtime_error(origin + ": line " + std::to_string(line_no) +
                                     ": expected " + std::to_string(header.size()) +
                                     " fields, got " + std::to_string(fields.size()));
        }
        MetricsTable::Row row;
        try {
            row.epoch = static_cast<std::size_t>(std::stoull(fields[0]));
            row.step = std::stoull(fields[1]);
            row.split = fields[2];
            row.values.reserve(fields.size() - 3);
            for (std::size_t i = 3; i < fields.size(); ++i) {
                row.values.push_back(std::stod(fields[i]));
            }
        } catch (...) {
            throw std::runtime_error(origin + ": line " + std::to_string(line_no) +
                                     ": cannot parse row");
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

MetricsTable load_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("metrics: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_metrics_csv(ss.str(), path);
}

std::size_t epochs_to_train_loss(const MetricsTable& t, double threshold) {
    for (const auto& [epoch, mean_loss] : epoch_train_loss_means(t)) {
        if (mean_loss <= threshold) return epoch;
    }
    return 0;
}

std::size_t epochs_to_test_acc(const MetricsTable& t, double threshold) {
    const std::size_t acc_col = t.column_index("acc");
    for (const auto& row : t.rows) {
        if (row.split == "test" && row.epoch > 0 && row.values[acc_col] >= threshold) {
            return row.epoch;
        }
    }
    return 0;
}

std::string compare_runs_json(const MetricsTable& a, const MetricsTable& b,
                              double loss_threshold, double acc_threshold) {
    if (a.columns != b.columns) {
        throw std::invalid_argument("compare: metric schemas differ");
    }
    if (a.rows.size() != b.rows.size()) {
        throw std::invalid_argument("compare: step grids differ (row counts " +
                                    std::to_string(a.rows.size()) + " vs " +
                                    std::to_string(b.rows.size()) + ")");
    }
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        if (a.rows[i].epoch != b.rows[i].epoch || a.rows[i].step != b.rows[i].step ||
            a.rows[i].split != b.rows[i].split) {
            throw std::invalid_argument("compare: step grids differ at row " +
                                        std::to_string(i + 1));
        }
    }

    nlohmann::json j;
    const std::size_t loss_col = a.column_index("loss");
    const std::size_t acc_col = a.column_index("acc");

    auto final_block = [&](const std::string& split) {
        nlohmann::json blk;
        const auto* ra = last_row_of_split(a, split);
        const auto* rb = last_row_of_split(b, split);
        if (ra == nullptr || rb == nullptr) return nlohmann::json(nullptr);
        auto metric = [&](std::size_t col) {
            nlohmann::json m;
            m["a"] = ra->values[col];
            m["b"] = rb->values[col];
            m["delta"] = ra->values[col] - rb->values[col];
            return m;
        };
        blk["loss"] = metric(loss_col);
        blk["acc"] = metric(acc_col);
        return blk;
    };
    j["final"]["train"] = final_block("train");
    j["final"]["test"] = final_block("test");

    auto epochs_block = [&](std::size_t ea, std::size_t eb, double threshold) {
        nlohmann::json blk;
        blk["threshold"] = threshold;
        blk["a"] = ea == 0 ? nlohmann::json(nullptr) : nlohmann::json(ea);
        blk["b"] = eb == 0 ? nlohmann::json(nullptr) : nlohmann::json(eb);
        if (ea != 0 && eb != 0) {
            blk["delta"] = static_cast<long long>(ea) - static_cast<long long>(eb);
        } else {
            blk["delta"] = nullptr;
        }
        return blk;
    };
    j["epochs_to"]["train_loss_le"] =
        epochs_block(epochs_to_train_loss(a, loss_threshold),
                     epochs_to_train_loss(b, loss_threshold), loss_threshold);
    j["epochs_to"]["test_acc_ge"] =
        epochs_block(epochs_to_test_acc(a, acc_threshold),
                     epochs_to_test_acc(b, acc_threshold), acc_threshold);

    nlohmann::json acc_deltas = nlohmann::json::array();
    nlohmann::json loss_deltas = nlohmann::json::array();
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        if (a.rows[i].split != "test" || a.rows[i].epoch == 0) continue;
        nlohmann::json e;
        e["epoch"] = a.rows[i].epoch;
        e["delta"] = a.rows[i].values[acc_col] - b.rows[i].values[acc_col];
        acc_deltas.push_back(e);
        nlohmann::json l;
        l["epoch"] = a.rows[i].epoch;
        l["delta"] = a.rows[i].values[loss_col] - b.rows[i].values[loss_col];
        loss_deltas.push_back(l);
    }
    j["per_epoch"]["test_acc_delta"] = acc_deltas;
    j["per_epoch"]["test_loss_delta"] = loss_deltas;
    j["aborted"]["a"] = a.aborted;
    j["aborted"]["b"] = b.aborted;
    return j.dump(2);
}

}  // namespace gcopt
