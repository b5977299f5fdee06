#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>

#include "gcopt/fd_check.hpp"
#include "gcopt/nn.hpp"
#include "gcopt/rng.hpp"

using namespace gcopt;

TEST_CASE("dense_forward examples") {
    const auto eye = Tensor<double>::from_rows({{1, 0}, {0, 1}});
    const auto b0 = Tensor<double>::from_vector({0, 0});
    const auto x = Tensor<double>::from_rows({{2, 3}});
    const auto y = dense_forward(x, eye, b0);
    CHECK(y.at2(0, 0) == 2.0);
    CHECK(y.at2(0, 1) == 3.0);

    const auto w = Tensor<double>::from_rows({{1, 2}, {3, 4}});
    const auto x11 = Tensor<double>::from_rows({{1, 1}});
    const auto y2 = dense_forward(x11, w, b0);
    CHECK(y2.at2(0, 0) == 4.0);
    CHECK(y2.at2(0, 1) == 6.0);

    const auto b1 = Tensor<double>::from_vector({1, 1});
    const auto zero = Tensor<double>::from_rows({{0, 0}});
    const auto y3 = dense_forward(zero, eye, b1);
    CHECK(y3.at2(0, 0) == 1.0);
    CHECK(y3.at2(0, 1) == 1.0);

    CHECK_THROWS_AS(dense_forward(Tensor<double>({1, 3}), eye, b0), std::invalid_argument);
}

TEST_CASE("dense backward: batch-1 outer product and zero upstream") {
    RngStream rng(1);
    Model<double> model;
    auto& layer = model.add_dense(2, 2, rng);
    auto params = layer.params();
    // overwrite the random init so dW is the pure outer product
    params[0]->value = Tensor<double>::from_rows({{1, 0}, {0, 1}});
    params[1]->value.fill(0.0);

    const auto x = Tensor<double>::from_rows({{1, 2}});
    model.forward(x, true);
    model.zero_grad();
    model.backward(Tensor<double>::from_rows({{3, 4}}));
    CHECK(params[0]->grad.at2(0, 0) == 3.0);
    CHECK(params[0]->grad.at2(0, 1) == 4.0);
    CHECK(params[0]->grad.at2(1, 0) == 6.0);
    CHECK(params[0]->grad.at2(1, 1) == 8.0);
    CHECK(params[1]->grad[0] == 3.0);
    CHECK(params[1]->grad[1] == 4.0);

    model.zero_grad();
    model.forward(x, true);
    model.backward(Tensor<double>::from_rows({{0, 0}}));
    for (std::size_t i = 0; i < params[0]->grad.size(); ++i) {
        CHECK(params[0]->grad[i] == 0.0);
    }
}

TEST_CASE("backward before forward is a state error") {
    RngStream rng(2);
    Model<double> model;
    model.add_dense(2, 2, rng);
    CHECK_THROWS_AS(model.backward(Tensor<double>({1, 2})), std::runtime_error);
}

TEST_CASE("conv2d forward examples") {
    // 1x1 kernel is a per-channel-pair scalar multiply
    Tensor<double> x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    Tensor<double> k1({1, 1, 1, 1}, std::vector<double>{3});
    const auto y1 = conv2d_forward(x, k1, Tensor<double>({1}), 1, 0);
    CHECK(y1.at4(0, 0, 0, 0) == 3.0);
    CHECK(y1.at4(0, 0, 1, 1) == 12.0);

    // 3x3 ones through a 2x2 ones kernel: every window sums to 4
    Tensor<double> ones({1, 1, 3, 3}, std::vector<double>(9, 1.0));
    Tensor<double> k2({1, 1, 2, 2}, std::vector<double>(4, 1.0));
    const auto y2 = conv2d_forward(ones, k2, Tensor<double>({1}), 1, 0);
    CHECK(y2.extent(2) == 2);
    CHECK(y2.extent(3) == 2);
    for (std::size_t i = 0; i < 4; ++i) CHECK(y2[i] == 4.0);

    // padding with a zero kernel stays zero
    Tensor<double> k0({1, 1, 3, 3});
    const auto y3 = conv2d_forward(ones, k0, Tensor<double>({1}), 1, 1);
    for (std::size_t i = 0; i < y3.size(); ++i) CHECK(y3[i] == 0.0);

    // non-integral output extent
    Tensor<double> k22({1, 1, 2, 2}, std::vector<double>(4, 1.0));
    CHECK_THROWS_AS(conv2d_forward(ones, k22, Tensor<double>({1}), 2, 0),
                    std::invalid_argument);
}

TEST_CASE("conv2d patch-matrix path matches the direct-loop oracle") {
    RngStream rng(3);
    for (int trial = 0; trial < 8; ++trial) {
        const std::size_t cin = 1 + rng.next_below(3);
        const std::size_t cout = 1 + rng.next_below(4);
        const std::size_t k = 1 + rng.next_below(3);
        const std::size_t stride = 1 + rng.next_below(2);
        const std::size_t pad = rng.next_below(2);
        const std::size_t h = k + stride * (1 + rng.next_below(4)) - 2 * pad + k % 2;
        // keep the output extent integral
        const std::size_t hh = ((h + 2 * pad - k) / stride) * stride + k - 2 * pad;

        Tensor<double> x({2, cin, hh, hh});
        Tensor<double> kernel({cout, cin, k, k});
        Tensor<double> bias({cout});
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
        for (std::size_t i = 0; i < kernel.size(); ++i) kernel[i] = rng.normal();
        for (std::size_t i = 0; i < bias.size(); ++i) bias[i] = rng.normal();

        const auto fast = conv2d_forward(x, kernel, bias, stride, pad);
        const auto slow = conv2d_forward_direct(x, kernel, bias, stride, pad);
        REQUIRE(fast.dims() == slow.dims());
        for (std::size_t i = 0; i < fast.size(); ++i) {
            CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-13));
        }
    }
}

TEST_CASE("batchnorm_lite examples") {
    Model<double> model;
    model.add_batchnorm(1);

    // column [1, 3]: mean 2, biased std 1 -> [-1, 1] up to eps_bn
    Tensor<double> x({2, 1}, std::vector<double>{1, 3});
    const auto y = model.forward(x, true);
    CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-5));
    CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-5));

    // already-normalized input passes through nearly unchanged
    Tensor<double> z({4, 1}, std::vector<double>{-1.3416407864998738, -0.4472135954999579,
                                                 0.4472135954999579, 1.3416407864998738});
    const auto y2 = model.forward(z, true);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(y2[i] == doctest::Approx(z[i]).epsilon(1e-4));
    }

    // eval mode with running stats (0, 1) is the identity up to eps_bn
    Model<double> fresh;
    fresh.add_batchnorm(1);
    Tensor<double> probe({3, 1}, std::vector<double>{0.5, -2.0, 1.25});
    const auto y3 = fresh.forward(probe, false);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(y3[i] == doctest::Approx(probe[i]).epsilon(1e-4));
    }

    // train-mode batch of 1 is an error
    Model<double> bn1;
    bn1.add_batchnorm(2);
    CHECK_THROWS_AS(bn1.forward(Tensor<double>({1, 2}), true), std::invalid_argument);
}

TEST_CASE("batchnorm running stats update with momentum 0.9") {
    Model<double> model;
    auto& bn = model.add_batchnorm(1);
    Tensor<double> x({2, 1}, std::vector<double>{1, 3});  // mean 2, biased var 1
    model.forward(x, true);
    auto buffers = bn.buffers();
    CHECK(buffers[0].first == "bn1/running_mean");
    CHECK((*buffers[0].second)[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 2.0).epsilon(1e-12));
    CHECK((*buffers[1].second)[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0).epsilon(1e-12));
}

TEST_CASE("softmax cross-entropy examples") {
    // logits [0,0], target 0 -> ln 2
    const auto r1 = softmax_ce(Tensor<double>::from_rows({{0, 0}}), {0});
    CHECK(r1.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // confident correct prediction: loss <= 1e-17
    const auto r2 = softmax_ce(Tensor<double>::from_rows({{40, -40}}), {0});
    CHECK(r2.loss >= 0.0);
    CHECK(r2.loss <= 1e-17);

    // per-sample gradient rows sum to zero
    RngStream rng(4);
    Tensor<double> logits({3, 5});
    for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = rng.normal() * 3.0;
    const auto r3 = softmax_ce(logits, {1, 4, 0});
    for (std::size_t i = 0; i < 3; ++i) {
        double rowsum = 0.0;
        for (std::size_t j = 0; j < 5; ++j) rowsum += r3.dlogits.at2(i, j);
        CHECK(std::abs(rowsum) <= 1e-15);
    }

    CHECK_THROWS_AS(softmax_ce(logits, {1, 5, 0}), std::out_of_range);
    CHECK_THROWS_AS(softmax_ce(logits, {1, -1, 0}), std::out_of_range);
}

TEST_CASE("gc eligibility and the (M, N) convention") {
    RngStream rng(5);
    Model<double> model;
    model.add_conv2d({2, 4, 3, 3, 1, 1}, rng);
    model.add_relu();
    model.add_flatten();
    model.add_dense(16, 8, rng);
    model.add_batchnorm(8);

    auto params = model.params();
    REQUIRE(params.size() == 6);
    CHECK(params[0]->gc_eligible);  // conv weight
    CHECK(params[0]->fan_in == 2 * 3 * 3);
    CHECK(params[0]->fan_out == 4);
    CHECK(!params[1]->gc_eligible);  // conv bias
    CHECK(params[2]->gc_eligible);   // dense weight
    CHECK(params[2]->fan_in == 16);
    CHECK(!params[3]->gc_eligible);  // dense bias
    CHECK(!params[4]->gc_eligible);  // bn gamma
    CHECK(!params[5]->gc_eligible);  // bn beta
}

TEST_CASE("fd check: quadratic loss is exact to 1e-9 on a linear model") {
    RngStream rng(6);
    Model<double> model;
    model.add_dense(4, 3, rng);

    Tensor<double> x({4, 4});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();

    // 0.5 * ||logits - onehot(target)||^2, mean over batch: quadratic in the
    // logits, so central differences carry no truncation error.
    LossFn quadratic = [](const Tensor<double>& logits, const std::vector<int>& targets) {
        const std::size_t batch = logits.extent(0), k = logits.extent(1);
        Tensor<double> dlogits({batch, k});
        double loss = 0.0;
        for (std::size_t i = 0; i < batch; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                const double target = static_cast<int>(j) == targets[i] ? 1.0 : 0.0;
                const double d = logits.at2(i, j) - target;
                loss += 0.5 * d * d;
                dlogits.at2(i, j) = d / static_cast<double>(batch);
            }
        }
        return LossResult<double>{loss / static_cast<double>(batch), std::move(dlogits)};
    };

    const auto report = fd_gradient_check(model, x, {0, 1, 2, 0}, 1e-5, 1e-9, quadratic);
    CHECK(report.pass);
    CHECK(report.max_rel_error <= 1e-9);
    CHECK(report.total_skipped == 0);
}

TEST_CASE("fd check: conv+bn+relu+dense stack within 1e-4") {
    RngStream rng(7);
    Model<double> model;
    model.add_conv2d({1, 3, 3, 3, 1, 0}, rng);
    model.add_batchnorm(3);
    model.add_relu();
    model.add_flatten();
    model.add_dense(3 * 4 * 4, 5, rng);

    Tensor<double> x({4, 1, 6, 6});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal() * 0.5 + 0.2;

    const auto report = fd_gradient_check(model, x, {0, 2, 4, 1}, 1e-5, 1e-4);
    CHECK(report.pass);
    CHECK(report.max_rel_error <= 1e-4);
}

TEST_CASE("fd check: entries straddling a relu kink are excluded") {
    RngStream rng(8);
    Model<double> model;
    model.add_dense(1, 1, rng);
    model.add_relu();
    model.add_dense(1, 2, rng);

    // force the relu input to sit exactly on the kink: z = x*w + b = 0
    auto params = model.params();
    params[0]->value[0] = 1.0;
    params[1]->value[0] = -1.0;

    Tensor<double> x({1, 1}, std::vector<double>{1.0});
    const auto report = fd_gradient_check(model, x, {0}, 1e-5, 1e-4);
    CHECK(report.total_skipped > 0);
    CHECK(report.pass);
}

TEST_CASE("backward determinism: identical seeds give identical gradient bytes") {
    auto build_and_grad = [](std::uint64_t seed) {
        RngStream rng(seed);
        Model<float> model;
        model.add_dense(6, 8, rng);
        model.add_relu();
        model.add_dense(8, 3, rng);
        Tensor<float> x({5, 6});
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.normal());
        model.zero_grad();
        auto logits = model.forward(x, true);
        auto res = softmax_ce(logits, {0, 1, 2, 0, 1});
        model.backward(res.dlogits);
        std::vector<float> all;
        for (auto* p : model.params()) {
            all.insert(all.end(), p->grad.raw().begin(), p->grad.raw().end());
        }
        return all;
    };
    const auto a = build_and_grad(1234);
    const auto b = build_and_grad(1234);
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}
