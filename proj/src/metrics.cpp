#include "selrob/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace selrob::metrics {

void RobustnessCurve::validate() const {
    if (alphas.size() != values.size() || alphas.size() < 2)
        throw std::invalid_argument("RobustnessCurve: need matching alpha/value arrays with >= 2 entries");
    if (alphas.front() != 0.0 || alphas.back() != 1.0)
        throw std::invalid_argument("RobustnessCurve: alpha grid must contain the endpoints 0 and 1");
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        if (i > 0 && alphas[i] <= alphas[i - 1])
            throw std::invalid_argument("RobustnessCurve: alpha grid must be strictly ascending");
        if (!(values[i] >= 0.0 && values[i] <= 1.0))
            throw std::invalid_argument("RobustnessCurve: values must lie in [0,1]");
        if (i > 0 && values[i] < values[i - 1])
            throw std::invalid_argument("RobustnessCurve: values must be nondecreasing in alpha");
    }
    if (epsilon < 0.0) throw std::invalid_argument("RobustnessCurve: epsilon must be >= 0");
}

double RobustnessCurve::at(double alpha) const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("curve: alpha must be in [0,1]");
    auto it = std::upper_bound(alphas.begin(), alphas.end(), alpha);
    std::size_t hi = std::min<std::size_t>(static_cast<std::size_t>(it - alphas.begin()), alphas.size() - 1);
    std::size_t lo = hi - 1;
    if (alpha <= alphas[lo]) return values[lo];
    double w = (alpha - alphas[lo]) / (alphas[hi] - alphas[lo]);
    return values[lo] + w * (values[hi] - values[lo]);
}

RejectionLoss RejectionLoss::step(double alpha0) {
    if (!(alpha0 >= 0.0 && alpha0 <= 1.0)) throw std::invalid_argument("step loss: alpha0 must be in [0,1]");
    return RejectionLoss{Kind::step, alpha0};
}

RejectionLoss RejectionLoss::ramp(double t) {
    if (!(t >= 0.0)) throw std::invalid_argument("ramp loss: t must be >= 0");
    return RejectionLoss{Kind::ramp, t};
}

double RejectionLoss::operator()(double r, double epsilon) const {
    if (kind == Kind::step) return r <= param * epsilon ? 1.0 : 0.0;
    double base = 1.0 - r / epsilon;
    if (base <= 0.0) return 0.0;
    if (param == 0.0) return 1.0;
    return std::pow(base, param);
}

std::string RejectionLoss::describe() const {
    char buf[64];
    if (kind == Kind::step)
        std::snprintf(buf, sizeof buf, "step(alpha0=%g)", param);
    else
        std::snprintf(buf, sizeof buf, "ramp(t=%g)", param);
    return buf;
}

RobustnessCurve robustness_curve(const std::vector<attacks::AttackOutcome>& outcomes,
                                 const std::vector<double>& alpha_grid, double epsilon) {
    if (outcomes.empty()) throw std::invalid_argument("robustness_curve: no outcomes");
    if (alpha_grid.size() < 2 || alpha_grid.front() != 0.0 || alpha_grid.back() != 1.0)
        throw std::invalid_argument("robustness_curve: alpha grid must contain the endpoints 0 and 1");
    for (const auto& o : outcomes)
        if (o.inner_success.size() != alpha_grid.size())
            throw std::invalid_argument("robustness_curve: outcome flags do not match the alpha grid");
    RobustnessCurve c;
    c.alphas = alpha_grid;
    c.epsilon = epsilon;
    c.values.assign(alpha_grid.size(), 0.0);
    double n = static_cast<double>(outcomes.size());
    for (std::size_t ai = 0; ai < alpha_grid.size(); ++ai) {
        std::size_t errors = 0;
        for (const auto& o : outcomes) {
            bool clean_misclassified = !o.clean_correct && !o.clean_rejected;
            if (o.inner_success[ai] || o.outer_success || clean_misclassified) ++errors;
        }
        c.values[ai] = static_cast<double>(errors) / n;
    }
    c.validate();
    return c;
}

double total_robust_loss_step(const RobustnessCurve& curve, double alpha0) {
    curve.validate();
    if (!(alpha0 >= 0.0 && alpha0 <= 1.0)) throw std::invalid_argument("step loss: alpha0 must be in [0,1]");
    return curve.at(alpha0);
}

double total_robust_loss_ramp(const RobustnessCurve& curve, double t) {
    curve.validate();
    if (!(t >= 1.0))
        throw std::invalid_argument("ramp loss: t must be >= 1 (the weight is unbounded at alpha = 1 for t < 1)");
    // Knots: the curve grid united with the 0.01 densification grid.
    std::vector<double> knots = curve.alphas;
    for (int i = 0; i <= 100; ++i) knots.push_back(i / 100.0);
    std::sort(knots.begin(), knots.end());
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
    // On each cell s is linear; integrate t*(1-a)^(t-1)*s(a) exactly via the
    // substitution u = 1-a:  integral of t*u^(t-1)*(P + Q*u) du
    //   = P*(u2^t - u1^t) + Q*t/(t+1)*(u2^(t+1) - u1^(t+1)).
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        double a = knots[i], b = knots[i + 1];
        double sa = curve.at(a), sb = curve.at(b);
        double slope = (sb - sa) / (b - a);
        double q = -slope;                    // s = P + Q*u with u = 1-alpha
        double p = sa + slope * (1.0 - a);
        double u1 = 1.0 - b, u2 = 1.0 - a;
        total += p * (std::pow(u2, t) - std::pow(u1, t)) +
                 q * t / (t + 1.0) * (std::pow(u2, t + 1.0) - std::pow(u1, t + 1.0));
    }
    return total;
}

double total_robust_loss_general(const RobustnessCurve& curve, double p_rej,
                                 const std::vector<double>& loss_on_grid) {
    curve.validate();
    if (loss_on_grid.size() != curve.alphas.size())
        throw std::invalid_argument("general loss: sampled loss does not match the curve grid");
    if (!(p_rej >= 0.0 && p_rej <= 1.0)) throw std::invalid_argument("general loss: p_rej must be in [0,1]");
    for (std::size_t i = 0; i < loss_on_grid.size(); ++i) {
        if (!(loss_on_grid[i] >= 0.0 && loss_on_grid[i] <= 1.0))
            throw std::invalid_argument("general loss: rejection loss values must lie in [0,1]");
        if (i > 0 && loss_on_grid[i] > loss_on_grid[i - 1])
            throw std::invalid_argument("general loss: rejection loss must be monotone nonincreasing");
    }
    double total = curve.values.front() + (loss_on_grid.front() - 1.0) * p_rej;
    for (std::size_t i = 1; i < curve.alphas.size(); ++i)
        total += loss_on_grid[i] * (curve.values[i] - curve.values[i - 1]);
    return total;
}

double estimate_p_rej(const std::vector<attacks::AttackOutcome>& outcomes) {
    if (outcomes.empty()) throw std::invalid_argument("estimate_p_rej: no outcomes");
    std::size_t count = 0;
    for (const auto& o : outcomes)
        if (o.clean_rejected && !o.outer_success) ++count;
    return static_cast<double>(count) / static_cast<double>(outcomes.size());
}

TraditionalMetrics traditional_metrics(const std::vector<attacks::AttackOutcome>& outcomes) {
    if (outcomes.empty()) throw std::invalid_argument("traditional_metrics: no outcomes");
    std::size_t accepted = 0, accepted_correct = 0, rejected = 0, det_errors = 0;
    for (const auto& o : outcomes) {
        if (o.clean_rejected) {
            ++rejected;
        } else {
            ++accepted;
            if (o.clean_correct) ++accepted_correct;
        }
        bool clean_misclassified = !o.clean_correct && !o.clean_rejected;
        if (o.clean_rejected || clean_misclassified || o.outer_success) ++det_errors;
    }
    double n = static_cast<double>(outcomes.size());
    TraditionalMetrics t;
    t.rej_rate = static_cast<double>(rejected) / n;
    t.robust_acc_with_detection = 1.0 - static_cast<double>(det_errors) / n;
    if (accepted > 0) {
        double acc = static_cast<double>(accepted_correct) / static_cast<double>(accepted);
        t.acc_with_rej = acc;
        double keep = 1.0 - t.rej_rate;
        if (acc + keep > 0.0) t.f1_like = 2.0 * acc * keep / (acc + keep);
    }
    return t;
}

void save_curve_csv(const RobustnessCurve& curve, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for writing: " + path);
    f << "alpha,s\n";
    char buf[80];
    for (std::size_t i = 0; i < curve.alphas.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", curve.alphas[i], curve.values[i]);
        f << buf;
    }
}

RobustnessCurve load_curve_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open curve file: " + path);
    RobustnessCurve c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (lineno == 1) {
            if (line != "alpha,s")
                throw FormatError(path + ":1: expected header 'alpha,s'");
            continue;
        }
        double a, s;
        char extra;
        if (std::sscanf(line.c_str(), "%lf,%lf%c", &a, &s, &extra) != 2)
            throw FormatError(path + ":" + std::to_string(lineno) + ": malformed row '" + line + "'");
        c.alphas.push_back(a);
        c.values.push_back(s);
    }
    if (c.alphas.empty()) throw FormatError(path + ":" + std::to_string(std::max<std::size_t>(lineno, 1)) +
                                            ": no data rows");
    return c;
}

}  // namespace selrob::metrics
