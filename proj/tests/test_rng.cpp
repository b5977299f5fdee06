#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <vector>

#include "gcopt/init.hpp"
#include "gcopt/rng.hpp"

using namespace gcopt;

TEST_CASE("identical seeds give identical streams") {
    RngStream a(12345), b(12345);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
    for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());

    RngStream c(12346);
    bool differs = false;
    RngStream a2(12345);
    for (int i = 0; i < 10 && !differs; ++i) differs = a2.next_u64() != c.next_u64();
    CHECK(differs);
}

TEST_CASE("state round trip resumes the same sequence") {
    RngStream a(9);
    for (int i = 0; i < 17; ++i) a.next_u64();
    const auto snap = a.state();
    std::vector<std::uint64_t> expect;
    for (int i = 0; i < 50; ++i) expect.push_back(a.next_u64());

    RngStream b(0);
    b.set_state(snap);
    for (int i = 0; i < 50; ++i) CHECK(b.next_u64() == expect[static_cast<std::size_t>(i)]);
}

TEST_CASE("uniform stays in [0,1) and shuffle is deterministic") {
    RngStream rng(5);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    std::vector<int> v1{1, 2, 3, 4, 5, 6, 7, 8}, v2 = v1;
    RngStream s1(77), s2(77);
    s1.shuffle(v1);
    s2.shuffle(v2);
    CHECK(v1 == v2);
}

TEST_CASE("kaiming init: fan_in=2 gives unit std over 1e6 samples") {
    RngStream rng(2024);
    const std::size_t n = 1000000;
    const auto t = kaiming_normal_init<double>({n}, 2, rng);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += t[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (t[i] - mean) * (t[i] - mean);
    var /= static_cast<double>(n);
    const double std_dev = std::sqrt(var);
    CHECK(std_dev == doctest::Approx(1.0).epsilon(0.01));  // sqrt(2/2) = 1
}

TEST_CASE("kaiming init: fan_in=8 mean within the 3-sigma CLT bound") {
    RngStream rng(99);
    const std::size_t n = 1000000;
    const auto t = kaiming_normal_init<double>({n}, 8, rng);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += t[i];
    mean /= static_cast<double>(n);
    const double sigma = std::sqrt(2.0 / 8.0);
    CHECK(std::abs(mean) <= 3.0 * sigma / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("kaiming init: determinism and fan_in=0 error") {
    RngStream r1(4), r2(4);
    const auto a = kaiming_normal_init<double>({64, 32}, 64, r1);
    const auto b = kaiming_normal_init<double>({64, 32}, 64, r2);
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
    RngStream r3(4);
    CHECK_THROWS_AS(kaiming_normal_init<double>({4}, 0, r3), std::invalid_argument);
}

TEST_CASE("xavier init: bound, mean, determinism, zero-fan errors") {
    RngStream rng(31);
    const std::size_t n = 1000000;
    const auto t = xavier_init<double>({n}, 3, 3, rng);  // bound = sqrt(6/6) = 1
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(t[i] >= -1.0);
        CHECK(t[i] <= 1.0);
        mean += t[i];
    }
    mean /= static_cast<double>(n);
    const double sigma = 1.0 / std::sqrt(3.0);  // uniform on [-1,1]
    CHECK(std::abs(mean) <= 3.0 * sigma / std::sqrt(static_cast<double>(n)));

    RngStream r1(8), r2(8);
    const auto x1 = xavier_init<float>({10, 10}, 10, 10, r1);
    const auto x2 = xavier_init<float>({10, 10}, 10, 10, r2);
    CHECK(std::memcmp(x1.data(), x2.data(), x1.size() * sizeof(float)) == 0);

    RngStream r3(8);
    CHECK_THROWS_AS(xavier_init<double>({4}, 0, 3, r3), std::invalid_argument);
    CHECK_THROWS_AS(xavier_init<double>({4}, 3, 0, r3), std::invalid_argument);
}
