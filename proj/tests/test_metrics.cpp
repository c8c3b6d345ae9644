#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>

#include "selrob/metrics.hpp"

using namespace selrob;
using attacks::AttackOutcome;
using metrics::RejectionLoss;
using metrics::RobustnessCurve;

namespace {

AttackOutcome outcome(bool correct, bool rejected, bool outer, std::vector<uint8_t> inner) {
    AttackOutcome o;
    o.clean_correct = correct;
    o.clean_rejected = rejected;
    o.outer_success = outer;
    o.inner_success = std::move(inner);
    return o;
}

RobustnessCurve curve_of(std::vector<double> alphas, std::vector<double> values, double eps = 1.0) {
    RobustnessCurve c;
    c.alphas = std::move(alphas);
    c.values = std::move(values);
    c.epsilon = eps;
    c.validate();
    return c;
}

}  // namespace

TEST_CASE("robustness_curve: clean outcomes give zero error") {
    std::vector<AttackOutcome> outs(5, outcome(true, false, false, {0, 0, 0}));
    auto c = metrics::robustness_curve(outs, {0.0, 0.5, 1.0}, 0.3);
    for (double v : c.values) CHECK(v == 0.0);
}

TEST_CASE("robustness_curve: outer-only successes make a flat curve") {
    std::vector<AttackOutcome> outs(4, outcome(true, false, false, {0, 0, 0}));
    outs[1].outer_success = true;
    auto c = metrics::robustness_curve(outs, {0.0, 0.5, 1.0}, 0.3);
    for (double v : c.values) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("robustness_curve: clean misclassification counts at every alpha") {
    std::vector<AttackOutcome> outs(4, outcome(true, false, false, {0, 0}));
    outs[0] = outcome(false, false, false, {0, 0});  // accepted but wrong
    auto c = metrics::robustness_curve(outs, {0.0, 1.0}, 0.3);
    CHECK(c.values[0] == doctest::Approx(0.25));
    CHECK(c.values[1] == doctest::Approx(0.25));
}

TEST_CASE("robustness_curve: rejection flags accumulate along alpha") {
    std::vector<AttackOutcome> outs;
    outs.push_back(outcome(true, true, false, {1, 1, 1}));   // clean rejection
    outs.push_back(outcome(true, false, false, {0, 1, 1}));  // rejected from alpha = 0.5
    outs.push_back(outcome(true, false, false, {0, 0, 0}));
    outs.push_back(outcome(true, false, false, {0, 0, 0}));
    auto c = metrics::robustness_curve(outs, {0.0, 0.5, 1.0}, 0.3);
    CHECK(c.values[0] == doctest::Approx(0.25));
    CHECK(c.values[1] == doctest::Approx(0.5));
    CHECK(c.values[2] == doctest::Approx(0.5));
}

TEST_CASE("robustness_curve requires grid endpoints") {
    std::vector<AttackOutcome> outs(2, outcome(true, false, false, {0, 0}));
    CHECK_THROWS_AS(metrics::robustness_curve(outs, {0.0, 0.5}, 0.3), std::invalid_argument);
    CHECK_THROWS_AS(metrics::robustness_curve(outs, {0.1, 1.0}, 0.3), std::invalid_argument);
}

TEST_CASE("curve validation enforces monotonicity and range") {
    RobustnessCurve bad;
    bad.alphas = {0.0, 0.5, 1.0};
    bad.values = {0.4, 0.3, 0.5};
    bad.epsilon = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad.values = {0.4, 0.5, 1.2};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("step loss: grid points return stored values exactly") {
    auto c = curve_of({0.0, 0.25, 1.0}, {0.125, 0.25, 0.75});
    CHECK(metrics::total_robust_loss_step(c, 0.0) == 0.125);
    CHECK(metrics::total_robust_loss_step(c, 0.25) == 0.25);
    CHECK(metrics::total_robust_loss_step(c, 1.0) == 0.75);
}

TEST_CASE("step loss: interpolation between grid points") {
    auto c = curve_of({0.0, 1.0}, {0.1, 0.5});
    CHECK(metrics::total_robust_loss_step(c, 0.5) == doctest::Approx(0.3).epsilon(1e-12));
    auto flat = curve_of({0.0, 1.0}, {0.37, 0.37});
    for (double a : {0.0, 0.123, 0.77, 1.0})
        CHECK(metrics::total_robust_loss_step(flat, a) == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("ramp loss: unit curve integrates to exactly 1 for t in 1..4") {
    auto c = curve_of({0.0, 1.0}, {1.0, 1.0});
    for (double t : {1.0, 2.0, 3.0, 4.0})
        CHECK(std::abs(metrics::total_robust_loss_ramp(c, t) - 1.0) <= 1e-9);
}

TEST_CASE("ramp loss: linear curve closed forms") {
    auto c = curve_of({0.0, 1.0}, {0.0, 1.0});  // s(alpha) = alpha
    CHECK(std::abs(metrics::total_robust_loss_ramp(c, 1.0) - 0.5) <= 1e-4);
    CHECK(std::abs(metrics::total_robust_loss_ramp(c, 2.0) - 1.0 / 3.0) <= 1e-4);
}

TEST_CASE("ramp loss rejects t < 1") {
    auto c = curve_of({0.0, 1.0}, {0.2, 0.4});
    CHECK_THROWS_AS(metrics::total_robust_loss_ramp(c, 0.5), std::invalid_argument);
}

TEST_CASE("ramp loss decreases in t for nondecreasing curves") {
    Rng rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> alphas = {0.0, 0.2, 0.5, 0.8, 1.0};
        std::vector<double> values(alphas.size());
        double v = rng.uniform(0.0, 0.3);
        for (auto& s : values) {
            s = v;
            v = std::min(1.0, v + rng.uniform(0.0, 0.3));
        }
        auto c = curve_of(alphas, values);
        double prev = metrics::total_robust_loss_ramp(c, 1.0);
        for (double t : {1.5, 2.0, 3.0, 4.0}) {
            double cur = metrics::total_robust_loss_ramp(c, t);
            CHECK(cur <= prev + 1e-12);
            prev = cur;
        }
    }
}

TEST_CASE("general loss: zero rejection loss leaves the misclassification mass") {
    auto c = curve_of({0.0, 0.5, 1.0}, {0.2, 0.3, 0.45});
    double p_rej = 0.08;
    std::vector<double> zero(c.alphas.size(), 0.0);
    CHECK(metrics::total_robust_loss_general(c, p_rej, zero) ==
          doctest::Approx(0.2 - 0.08).epsilon(1e-12));
}

TEST_CASE("general loss: never-rejecting classifier keeps s(0)") {
    auto c = curve_of({0.0, 0.5, 1.0}, {0.3, 0.3, 0.3});
    std::vector<double> loss = {1.0, 0.5, 0.0};
    CHECK(metrics::total_robust_loss_general(c, 0.0, loss) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("general loss agrees with the ramp formula on dense grids") {
    // Densify to make the Stieltjes sum comparable with the integral.
    const int n = 200;
    std::vector<double> alphas(n + 1), values(n + 1);
    Rng rng(23);
    double v = 0.1;
    for (int i = 0; i <= n; ++i) {
        alphas[i] = static_cast<double>(i) / n;
        values[i] = v;
        v = std::min(1.0, v + rng.uniform(0.0, 0.012));
    }
    auto c = curve_of(alphas, values);
    for (double t : {1.0, 2.0, 4.0}) {
        std::vector<double> sampled(alphas.size());
        for (int i = 0; i <= n; ++i) sampled[i] = RejectionLoss::ramp(t)(alphas[i] * c.epsilon, c.epsilon);
        double via_ramp = metrics::total_robust_loss_ramp(c, t);
        double via_general = metrics::total_robust_loss_general(c, 0.0, sampled);
        double tv = values.back() - values.front();
        CHECK(std::abs(via_ramp - via_general) <= 2.0 * (1.0 / n) * std::max(tv, 1.0) + 1e-9);
    }
}

TEST_CASE("general loss stays within the lemma's bounds") {
    Rng rng(31);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<double> alphas = {0.0, 0.3, 0.6, 1.0};
        std::vector<double> values(4);
        double v = rng.uniform(0.0, 0.4);
        for (auto& s : values) {
            s = v;
            v = std::min(1.0, v + rng.uniform(0.0, 0.25));
        }
        auto c = curve_of(alphas, values);
        // Admissible loss: l(0) = 1, l(eps) = 0, nonincreasing.
        std::vector<double> loss = {1.0, rng.uniform(0.3, 1.0), 0.0, 0.0};
        loss[2] = rng.uniform(0.0, loss[1]);
        double p_rej = rng.uniform(0.0, values[0]);
        double total = metrics::total_robust_loss_general(c, p_rej, loss);
        CHECK(total >= values[0] - p_rej - 1e-12);
        CHECK(total <= values[3] + 1e-12);
    }
}

TEST_CASE("general loss validates the sampled rejection loss") {
    auto c = curve_of({0.0, 0.5, 1.0}, {0.1, 0.2, 0.3});
    CHECK_THROWS_AS(metrics::total_robust_loss_general(c, 0.0, {0.5, 0.8, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(metrics::total_robust_loss_general(c, 0.0, {1.0, 0.5}), std::invalid_argument);
    CHECK_THROWS_AS(metrics::total_robust_loss_general(c, 0.0, {1.0, 0.5, -0.1}), std::invalid_argument);
}

TEST_CASE("estimate_p_rej counts clean rejections without outer success") {
    std::vector<AttackOutcome> outs;
    outs.push_back(outcome(true, true, false, {1}));
    outs.push_back(outcome(true, true, true, {1}));   // outer success excludes it
    outs.push_back(outcome(true, false, false, {0}));
    outs.push_back(outcome(false, false, true, {0}));
    CHECK(metrics::estimate_p_rej(outs) == doctest::Approx(0.25));
}

TEST_CASE("traditional metrics: perfect never-rejecting classifier") {
    std::vector<AttackOutcome> outs(10, outcome(true, false, false, {0}));
    auto t = metrics::traditional_metrics(outs);
    REQUIRE(t.acc_with_rej.has_value());
    CHECK(*t.acc_with_rej == 1.0);
    CHECK(t.rej_rate == 0.0);
    REQUIRE(t.f1_like.has_value());
    CHECK(*t.f1_like == 1.0);
    CHECK(t.robust_acc_with_detection == 1.0);
}

TEST_CASE("traditional metrics: harmonic-mean arithmetic") {
    std::vector<AttackOutcome> outs(10, outcome(true, false, false, {0}));
    outs[0] = outcome(false, true, false, {1});  // one rejected point
    auto t = metrics::traditional_metrics(outs);
    CHECK(*t.acc_with_rej == doctest::Approx(1.0));
    CHECK(t.rej_rate == doctest::Approx(0.1));
    CHECK(*t.f1_like == doctest::Approx(2.0 * 1.0 * 0.9 / (1.0 + 0.9)).epsilon(1e-12));
}

TEST_CASE("traditional metrics: detection accuracy complements s(0) exactly") {
    Rng rng(37);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<AttackOutcome> outs;
        for (int i = 0; i < 16; ++i) {
            bool rej = rng.uniform() < 0.3;
            bool correct = !rej && rng.uniform() < 0.8;
            bool outer = rng.uniform() < 0.3;
            outs.push_back(outcome(correct, rej, outer, {static_cast<uint8_t>(rej), 1}));
        }
        auto c = metrics::robustness_curve(outs, {0.0, 1.0}, 0.5);
        auto t = metrics::traditional_metrics(outs);
        CHECK(t.robust_acc_with_detection + c.values[0] == 1.0);
    }
}

TEST_CASE("traditional metrics: all points rejected reports absent accuracy") {
    std::vector<AttackOutcome> outs(3, outcome(false, true, false, {1}));
    auto t = metrics::traditional_metrics(outs);
    CHECK(!t.acc_with_rej.has_value());
    CHECK(!t.f1_like.has_value());
    CHECK(t.rej_rate == 1.0);
}

TEST_CASE("curve csv round trip and error reporting") {
    auto c = curve_of({0.0, 0.25, 1.0}, {0.1, 0.2, 0.5}, 0.3);
    std::string path = "/tmp/selrob_curve_test.csv";
    metrics::save_curve_csv(c, path);
    auto back = metrics::load_curve_csv(path);
    CHECK(back.alphas == c.alphas);
    CHECK(back.values == c.values);

    std::ofstream bad(path);
    bad << "alpha,s\n0.0,0.1\nnot,numbers,here\n";
    bad.close();
    CHECK_THROWS_WITH_AS(metrics::load_curve_csv(path), doctest::Contains(":3:"), FormatError);

    std::ofstream empty(path);
    empty.close();
    CHECK_THROWS_AS(metrics::load_curve_csv(path), FormatError);
}
