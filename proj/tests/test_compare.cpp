#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "json.hpp"

#include "gcopt/compare.hpp"

using namespace gcopt;

namespace {

const char* kCsvA =
    "epoch,step,split,loss,acc,grad_l2_total,grad_max_total,wall_ms\n"
    "0,0,test,2.3,0.1,0,0,0\n"
    "1,5,train,1.2,0.5,3.0,0.9,0\n"
    "1,10,train,0.8,0.6,2.0,0.7,0\n"
    "1,10,test,0.9,0.55,0,0,0\n"
    "2,15,train,0.45,0.8,1.5,0.5,0\n"
    "2,20,train,0.35,0.85,1.0,0.4,0\n"
    "2,20,test,0.5,0.75,0,0,0\n";

const char* kCsvB =
    "epoch,step,split,loss,acc,grad_l2_total,grad_max_total,wall_ms\n"
    "0,0,test,2.3,0.1,0,0,0\n"
    "1,5,train,1.4,0.4,3.5,1.0,0\n"
    "1,10,train,1.0,0.5,2.5,0.8,0\n"
    "1,10,test,1.1,0.45,0,0,0\n"
    "2,15,train,0.7,0.7,2.0,0.6,0\n"
    "2,20,train,0.6,0.75,1.5,0.5,0\n"
    "2,20,test,0.8,0.65,0,0,0\n";

}  // namespace

TEST_CASE("self-comparison yields all-zero deltas") {
    const MetricsTable a = parse_metrics_csv(kCsvA, "a");
    const auto j = nlohmann::json::parse(compare_runs_json(a, a, 0.5, 0.8));
    CHECK(j["final"]["test"]["loss"]["delta"].get<double>() == 0.0);
    CHECK(j["final"]["test"]["acc"]["delta"].get<double>() == 0.0);
    CHECK(j["final"]["train"]["loss"]["delta"].get<double>() == 0.0);
    CHECK(j["epochs_to"]["train_loss_le"]["delta"].get<int>() == 0);
    for (const auto& e : j["per_epoch"]["test_acc_delta"]) {
        CHECK(e["delta"].get<double>() == 0.0);
    }
}

TEST_CASE("swapping inputs negates every signed delta") {
    const MetricsTable a = parse_metrics_csv(kCsvA, "a");
    const MetricsTable b = parse_metrics_csv(kCsvB, "b");
    const auto ab = nlohmann::json::parse(compare_runs_json(a, b, 0.5, 0.8));
    const auto ba = nlohmann::json::parse(compare_runs_json(b, a, 0.5, 0.8));

    CHECK(ab["final"]["test"]["loss"]["delta"].get<double>() ==
          doctest::Approx(-ba["final"]["test"]["loss"]["delta"].get<double>()));
    CHECK(ab["final"]["test"]["acc"]["delta"].get<double>() ==
          doctest::Approx(-ba["final"]["test"]["acc"]["delta"].get<double>()));
    for (std::size_t i = 0; i < ab["per_epoch"]["test_acc_delta"].size(); ++i) {
        CHECK(ab["per_epoch"]["test_acc_delta"][i]["delta"].get<double>() ==
              doctest::Approx(
                  -ba["per_epoch"]["test_acc_delta"][i]["delta"].get<double>()));
    }
}

TEST_CASE("epochs-to-threshold definitions") {
    const MetricsTable a = parse_metrics_csv(kCsvA, "a");
    const MetricsTable b = parse_metrics_csv(kCsvB, "b");

    // epoch means for A: epoch1 = (1.2+0.8)/2 = 1.0; epoch2 = 0.4 <= 0.5
    CHECK(epochs_to_train_loss(a, 0.5) == 2);
    CHECK(epochs_to_train_loss(a, 1.0) == 1);
    CHECK(epochs_to_train_loss(b, 0.5) == 0);  // never

    CHECK(epochs_to_test_acc(a, 0.7) == 2);
    CHECK(epochs_to_test_acc(a, 0.99) == 0);

    const auto j = nlohmann::json::parse(compare_runs_json(a, b, 0.5, 0.8));
    CHECK(j["epochs_to"]["train_loss_le"]["a"].get<int>() == 2);
    CHECK(j["epochs_to"]["train_loss_le"]["b"].is_null());
    CHECK(j["epochs_to"]["train_loss_le"]["delta"].is_null());
}

TEST_CASE("schema and grid mismatches are errors") {
    const MetricsTable a = parse_metrics_csv(kCsvA, "a");
    MetricsTable b = parse_metrics_csv(kCsvB, "b");
    b.columns.push_back("extra");
    CHECK_THROWS_AS(compare_runs_json(a, b, 0.5, 0.8), std::invalid_argument);

    MetricsTable c = parse_metrics_csv(kCsvB, "c");
    c.rows.pop_back();
    CHECK_THROWS_AS(compare_runs_json(a, c, 0.5, 0.8), std::invalid_argument);

    MetricsTable d = parse_metrics_csv(kCsvB, "d");
    d.rows[2].step = 11;
    CHECK_THROWS_AS(compare_runs_json(a, d, 0.5, 0.8), std::invalid_argument);
}

TEST_CASE("aborted marker is surfaced") {
    std::string text = kCsvA;
    text += "# aborted: non-finite loss at epoch 3 step 21\n";
    const MetricsTable t = parse_metrics_csv(text, "t");
    CHECK(t.aborted);
}

TEST_CASE("csv parse errors carry the origin and line") {
    CHECK_THROWS_WITH_AS(parse_metrics_csv("bad header\n", "x"), doctest::Contains("x"),
                         std::runtime_error);
    const std::string text =
        "epoch,step,split,loss,acc,grad_l2_total,grad_max_total,wall_ms\n"
        "1,1,train,oops,0,0,0,0\n";
    CHECK_THROWS_WITH_AS(parse_metrics_csv(text, "y"), doctest::Contains("line 2"),
                         std::runtime_error);
}
