#include "selrob/oracle.hpp"

#include <cmath>
#include <limits>

#include "json.hpp"
#include "selrob/train.hpp"

namespace selrob::oracle {

AnalyticClassifier threshold_classifier(double boundary) {
    AnalyticClassifier c;
    c.signed_margin = [boundary](const Vec& x) { return x[0] - boundary; };
    return c;
}

AnalyticClassifier linear_classifier(double w0, double w1, double b) {
    double norm1 = std::abs(w0) + std::abs(w1);
    if (!(norm1 > 0.0)) throw std::invalid_argument("linear_classifier: zero weight vector");
    AnalyticClassifier c;
    c.signed_margin = [w0, w1, b, norm1](const Vec& x) { return (w0 * x[0] + w1 * x[1] + b) / norm1; };
    return c;
}

void RadialDensity::validate() const {
    if (segments.empty()) throw std::invalid_argument("RadialDensity: no segments");
    double mass = 0.0;
    double prev = 0.0;
    for (const auto& s : segments) {
        if (!(s.r_lo >= prev) || !(s.r_hi > s.r_lo))
            throw std::invalid_argument("RadialDensity: segments must be disjoint and ascending");
        if (!(s.density >= 0.0)) throw std::invalid_argument("RadialDensity: negative density");
        mass += s.density * (s.r_hi - s.r_lo);
        prev = s.r_hi;
    }
    if (std::abs(mass - 1.0) > 1e-9)
        throw std::invalid_argument("RadialDensity: total mass must be 1");
}

double RadialDensity::cdf(double r) const {
    double mass = 0.0;
    for (const auto& s : segments) {
        if (r <= s.r_lo) break;
        mass += s.density * (std::min(r, s.r_hi) - s.r_lo);
    }
    return mass;
}

double RadialDensity::quantile(double q) const {
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("RadialDensity: quantile arg in [0,1]");
    double acc = 0.0;
    for (const auto& s : segments) {
        double seg = s.density * (s.r_hi - s.r_lo);
        if (q <= acc + seg && s.density > 0.0) return s.r_lo + (q - acc) / s.density;
        acc += seg;
    }
    return segments.back().r_hi;
}

RadialDensity uniform_radial(double r_max) {
    if (!(r_max > 0.0)) throw std::invalid_argument("uniform_radial: r_max must be positive");
    RadialDensity p;
    p.segments.push_back({0.0, r_max, 1.0 / r_max});
    p.validate();
    return p;
}

selective::SelectiveDecision fdelta_classify(const AnalyticClassifier& base, double delta, double epsilon,
                                             const Vec& x) {
    if (!(delta >= 0.0 && delta <= 1.0)) throw std::invalid_argument("fdelta: delta must be in [0,1]");
    if (epsilon < 0.0) throw std::invalid_argument("fdelta: epsilon must be >= 0");
    double band = delta * epsilon;
    double m = base.signed_margin(x);
    // band = 0 degenerates to the base classifier (the boundary region of
    // radius 0 is empty).
    if (band > 0.0 && std::abs(m) <= band) return selective::SelectiveDecision::reject();
    return selective::SelectiveDecision::classify(m >= 0.0 ? 1 : 0);
}

SelectiveFn fdelta_fn(const AnalyticClassifier& base, double delta, double epsilon) {
    return [base, delta, epsilon](const Vec& x) { return fdelta_classify(base, delta, epsilon, x); };
}

static void check_theorem_scope(double delta) {
    if (!(delta >= 0.0 && delta <= 0.5))
        throw std::invalid_argument("fdelta closed form: delta outside the theorem scope [0, 1/2]");
}

double fdelta_curve_closed_form(const RadialDensity& p, double delta, double epsilon, double alpha) {
    check_theorem_scope(delta);
    p.validate();
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("fdelta closed form: alpha in [0,1]");
    if (epsilon < 0.0) throw std::invalid_argument("fdelta closed form: epsilon must be >= 0");
    // The boundary alpha = 1-2*delta belongs to the first branch.
    if (alpha <= 1.0 - 2.0 * delta) return p.cdf((1.0 - delta) * epsilon);
    return p.cdf((alpha + delta) * epsilon);
}

double fdelta_total_loss_closed_form(const RadialDensity& p, double delta, double epsilon,
                                     const std::function<double(double)>& loss) {
    check_theorem_scope(delta);
    p.validate();
    if (!(epsilon >= 0.0)) throw std::invalid_argument("fdelta closed form: epsilon must be >= 0");
    double lo = (1.0 - delta) * epsilon;
    double hi = (1.0 + delta) * epsilon;
    double total = p.cdf(lo);
    if (hi <= lo) return total;
    // Trapezoid at resolution epsilon/1e4, split at the density breakpoints
    // (the integrand is smooth inside each segment for continuous losses).
    double target_h = std::max(epsilon / 1e4, (hi - lo) / 1e6);
    for (const auto& s : p.segments) {
        double a = std::max(lo, s.r_lo);
        double b = std::min(hi, s.r_hi);
        if (b <= a || s.density == 0.0) continue;
        int cells = std::max(1, static_cast<int>(std::ceil((b - a) / target_h)));
        double h = (b - a) / cells;
        double acc = 0.0;
        for (int i = 0; i <= cells; ++i) {
            double r = a + h * i;
            double w = (i == 0 || i == cells) ? 0.5 : 1.0;
            acc += w * loss(r - delta * epsilon);
        }
        total += acc * h * s.density;
    }
    return total;
}

double fdelta_total_loss_closed_form(const RadialDensity& p, double delta, double epsilon,
                                     const metrics::RejectionLoss& loss) {
    check_theorem_scope(delta);
    if (loss.kind == metrics::RejectionLoss::Kind::step) {
        p.validate();
        // l(r - d*e) = 1 iff r <= (alpha0 + d)*e: the second integral is the
        // density mass of ((1-d)e, min((alpha0+d), (1+d))e], exactly.
        double lo = (1.0 - delta) * epsilon;
        double hi = std::min((loss.param + delta) * epsilon, (1.0 + delta) * epsilon);
        double total = p.cdf(lo);
        if (hi > lo) total += p.cdf(hi) - p.cdf(lo);
        return total;
    }
    return fdelta_total_loss_closed_form(p, delta, epsilon,
                                         [&](double r) { return loss(r, epsilon); });
}

TightnessValues tightness_values(double alpha, double beta, double epsilon) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("tightness_values: alpha in [0,1]");
    if (!(beta > 0.0 && beta < 0.5)) throw std::invalid_argument("tightness_values: beta in (0,0.5)");
    if (!(epsilon >= 0.0)) throw std::invalid_argument("tightness_values: epsilon must be >= 0");
    return TightnessValues{beta / 2.0, (1.0 + alpha) * epsilon / 2.0};
}

BruteForceScan brute_force_scan(const SelectiveFn& f, const data::Dataset& ds, double epsilon, int steps,
                                unsigned threads) {
    if (ds.d > 2) throw std::invalid_argument("brute_force: unsupported dimension (need d <= 2)");
    if (steps < 100) throw std::invalid_argument("brute_force: grid must divide epsilon into >= 100 steps");
    if (epsilon < 0.0) throw std::invalid_argument("brute_force: epsilon must be >= 0");
    BruteForceScan scan;
    scan.epsilon = epsilon;
    scan.steps = steps;
    scan.points.assign(ds.size(), ScanPoint{});
    parallel_for(ds.size(), threads, [&](std::size_t i) {
        const Vec& x = ds.xs[i];
        int y = ds.ys[i];
        bool mis = false;
        int minrej = -1;
        auto probe = [&](const Vec& z, int mag) {
            selective::SelectiveDecision d = f(z);
            if (d.rejected()) {
                if (minrej < 0 || mag < minrej) minrej = mag;
            } else if (d.label() != y) {
                mis = true;
            }
        };
        if (ds.d == 1) {
            Vec z(1);
            for (int j = 0; j <= steps; ++j) {
                double off = epsilon * j / steps;
                z[0] = x[0] + off;
                probe(z, j);
                if (j > 0) {
                    z[0] = x[0] - off;
                    probe(z, j);
                }
                // Radii ascend, so the first rejection is already the
                // minimum; once a misclassification is also on record
                // nothing can improve.
                if (mis && minrej >= 0) break;
            }
        } else {
            Vec z(2);
            for (int jx = -steps; jx <= steps; ++jx) {
                z[0] = x[0] + epsilon * jx / steps;
                for (int jy = -steps; jy <= steps; ++jy) {
                    z[1] = x[1] + epsilon * jy / steps;
                    probe(z, std::max(std::abs(jx), std::abs(jy)));
                }
            }
        }
        scan.points[i].misclassified = mis;
        scan.points[i].min_reject_steps = minrej;
    });
    return scan;
}

double scan_total_loss(const BruteForceScan& scan, const std::function<double(double)>& loss) {
    // Inner max per point: misclassification (loss 1) dominates; among
    // rejections the smallest magnitude attains the max for nonincreasing
    // losses.
    double total = 0.0;
    for (const ScanPoint& p : scan.points) {
        if (p.misclassified)
            total += 1.0;
        else if (p.min_reject_steps >= 0)
            total += loss(scan.epsilon * p.min_reject_steps / scan.steps);
    }
    return total / static_cast<double>(scan.points.size());
}

metrics::RobustnessCurve scan_curve(const BruteForceScan& scan, const std::vector<double>& alpha_grid) {
    metrics::RobustnessCurve c;
    c.alphas = alpha_grid;
    c.epsilon = scan.epsilon;
    c.values.assign(alpha_grid.size(), 0.0);
    double n = static_cast<double>(scan.points.size());
    for (std::size_t ai = 0; ai < alpha_grid.size(); ++ai) {
        int thresh = static_cast<int>(std::floor(alpha_grid[ai] * scan.steps + 1e-9));
        std::size_t errors = 0;
        for (const ScanPoint& p : scan.points)
            if (p.misclassified || (p.min_reject_steps >= 0 && p.min_reject_steps <= thresh)) ++errors;
        c.values[ai] = static_cast<double>(errors) / n;
    }
    c.validate();
    return c;
}

double scan_p_rej(const BruteForceScan& scan) {
    std::size_t count = 0;
    for (const ScanPoint& p : scan.points)
        if (!p.misclassified && p.min_reject_steps == 0) ++count;
    return static_cast<double>(count) / static_cast<double>(scan.points.size());
}

double brute_force_total_loss(const SelectiveFn& f, const data::Dataset& ds, double epsilon,
                              const std::function<double(double)>& loss, int steps) {
    return scan_total_loss(brute_force_scan(f, ds, epsilon, steps), loss);
}

double standard_robust_error(const AnalyticClassifier& f, const data::Dataset& ds, double budget) {
    std::size_t errors = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        double m = f.signed_margin(ds.xs[i]);
        bool wrong = (m >= 0.0 ? 1 : 0) != ds.ys[i];
        if (wrong || std::abs(m) <= budget) ++errors;
    }
    return static_cast<double>(errors) / static_cast<double>(ds.size());
}

data::Dataset radial_dataset(const RadialDensity& p, std::size_t n) {
    p.validate();
    if (n == 0) throw std::invalid_argument("radial_dataset: n must be >= 1");
    data::Dataset ds;
    ds.d = 1;
    ds.k = 2;
    for (std::size_t i = 0; i < n; ++i) {
        double r = p.quantile((static_cast<double>(i) + 0.5) / static_cast<double>(n));
        int side = (i % 2 == 0) ? 1 : 0;
        ds.xs.push_back({side == 1 ? r : -r});
        ds.ys.push_back(side);
    }
    ds.margin = [](const Vec& x) { return x[0]; };
    ds.validate();
    return ds;
}

namespace {

const std::vector<double> kDefaultAlphas = {0.0, 0.01, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.5, 1.0};

OracleCheck make_check(const std::string& name, double theoretical, double empirical, double tol) {
    OracleCheck c;
    c.name = name;
    c.theoretical = theoretical;
    c.empirical = empirical;
    c.tolerance = tol;
    c.pass = std::abs(empirical - theoretical) <= tol;
    return c;
}

// One-sided bound check: pass when empirical <= bound + tol.
OracleCheck make_bound_check(const std::string& name, double bound, double empirical, double tol) {
    OracleCheck c;
    c.name = name;
    c.theoretical = bound;
    c.empirical = empirical;
    c.tolerance = tol;
    c.pass = empirical <= bound + tol;
    return c;
}

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

}  // namespace

std::vector<OracleCheck> lemma1_suite(const OracleOptions& opt) {
    // 1-D model trained on a continuum of margins, wrapped by a wide CPR
    // band so that rejections happen at varying radii; the grid adversary's
    // total loss must close against the Stieltjes formula applied to the
    // grid adversary's own curve.
    data::Dataset train_ds = radial_dataset(uniform_radial(0.6), 512);
    train::TrainConfig tc;
    tc.epochs = 12;
    tc.batch_size = 32;
    tc.lr = 0.2;
    tc.seed = 3;
    nn::Mlp model = train::train_standard(train_ds, {16}, tc).model;

    selective::CprConfig cpr;
    cpr.consistency_radius = 0.15;
    cpr.pgd_steps = 5;
    cpr.pgd_step_size = 0.04;
    const nn::Mlp* mp = &model;
    SelectiveFn f = [mp, cpr](const Vec& x) { return selective::cpr_classify(*mp, x, cpr); };

    data::Dataset test_ds = radial_dataset(uniform_radial(0.6), 257);

    const double epsilon = 0.3;
    const int steps = 1000;
    BruteForceScan scan = brute_force_scan(f, test_ds, epsilon, steps, opt.threads);

    std::vector<double> alphas(steps + 1);
    for (int i = 0; i <= steps; ++i) alphas[i] = static_cast<double>(i) / steps;
    metrics::RobustnessCurve curve = scan_curve(scan, alphas);
    double p_rej = scan_p_rej(scan);

    std::vector<metrics::RejectionLoss> losses = {
        metrics::RejectionLoss::step(0.0),  metrics::RejectionLoss::step(0.05),
        metrics::RejectionLoss::step(0.1),  metrics::RejectionLoss::step(0.5),
        metrics::RejectionLoss::ramp(1.0),  metrics::RejectionLoss::ramp(2.0),
        metrics::RejectionLoss::ramp(4.0)};

    std::vector<OracleCheck> checks;
    double tol = 0.01 * opt.tolerance_scale;
    for (const auto& loss : losses) {
        double direct = scan_total_loss(scan, [&](double r) { return loss(r, epsilon); });
        std::vector<double> sampled(alphas.size());
        for (int i = 0; i <= steps; ++i) sampled[i] = loss(epsilon * i / steps, epsilon);
        double via_curve = metrics::total_robust_loss_general(curve, p_rej, sampled);
        checks.push_back(make_check("lemma1/" + loss.describe(), direct, via_curve, tol));
    }
    return checks;
}

std::vector<OracleCheck> theorem2_suite(const OracleOptions& opt) {
    const double epsilon = 0.3;
    const std::size_t n = 2000;
    const int steps = 1000;
    std::vector<std::pair<std::string, RadialDensity>> densities;
    densities.emplace_back("uniform", uniform_radial(2.0 * epsilon));
    RadialDensity two;
    two.segments = {{0.0, epsilon, 0.3 / epsilon}, {epsilon, 2.0 * epsilon, 0.7 / epsilon}};
    two.validate();
    densities.emplace_back("two_segment", two);

    AnalyticClassifier base = threshold_classifier(0.0);
    std::vector<metrics::RejectionLoss> losses = {
        metrics::RejectionLoss::step(0.0), metrics::RejectionLoss::step(0.25),
        metrics::RejectionLoss::step(0.5), metrics::RejectionLoss::step(1.0),
        metrics::RejectionLoss::ramp(1.0), metrics::RejectionLoss::ramp(2.0),
        metrics::RejectionLoss::ramp(4.0)};

    std::vector<OracleCheck> checks;
    double tol = 0.005 * opt.tolerance_scale;
    for (const auto& [dname, density] : densities) {
        data::Dataset ds = radial_dataset(density, n);
        for (double delta : {0.0, 0.1, 0.25, 0.5}) {
            BruteForceScan scan = brute_force_scan(fdelta_fn(base, delta, epsilon), ds, epsilon, steps,
                                                   opt.threads);
            metrics::RobustnessCurve curve = scan_curve(scan, kDefaultAlphas);
            double max_dev = 0.0;
            for (std::size_t ai = 0; ai < kDefaultAlphas.size(); ++ai) {
                double closed = fdelta_curve_closed_form(density, delta, epsilon, kDefaultAlphas[ai]);
                max_dev = std::max(max_dev, std::abs(closed - curve.values[ai]));
            }
            checks.push_back(make_check("theorem2/curve/" + dname + "/delta=" + fmt(delta), 0.0, max_dev, tol));

            double max_loss_dev = 0.0;
            for (const auto& loss : losses) {
                double closed = fdelta_total_loss_closed_form(density, delta, epsilon, loss);
                double brute = scan_total_loss(scan, [&](double r) { return loss(r, epsilon); });
                max_loss_dev = std::max(max_loss_dev, std::abs(closed - brute));
            }
            checks.push_back(
                make_check("theorem2/total_loss/" + dname + "/delta=" + fmt(delta), 0.0, max_loss_dev, tol));
        }
    }
    return checks;
}

std::vector<OracleCheck> theorem1_suite(const OracleOptions& opt) {
    std::vector<OracleCheck> checks;
    double tol = 0.01 * opt.tolerance_scale;

    // Instance 1: uniform radial density in 1-D, threshold base classifier.
    {
        const double epsilon = 0.3;
        AnalyticClassifier base = threshold_classifier(0.0);
        data::Dataset ds = radial_dataset(uniform_radial(2.0 * epsilon), 1500);
        for (double delta : {0.1, 0.25}) {
            BruteForceScan scan = brute_force_scan(fdelta_fn(base, delta, epsilon), ds, epsilon, 1000,
                                                   opt.threads);
            metrics::RobustnessCurve curve = scan_curve(scan, kDefaultAlphas);
            double worst = -std::numeric_limits<double>::infinity();
            for (std::size_t ai = 0; ai < kDefaultAlphas.size(); ++ai) {
                double a = kDefaultAlphas[ai];
                double eps_prime = std::max((a + delta) * epsilon, (1.0 - delta) * epsilon);
                double bound = standard_robust_error(base, ds, eps_prime);
                worst = std::max(worst, curve.values[ai] - bound);
            }
            checks.push_back(make_bound_check("theorem1/bound/uniform_1d/delta=" + fmt(delta), 0.0, worst, tol));
        }
    }

    // Instance 2: the four-atom family with the shifted base classifier
    // sign(x + eps) from the tightness construction.
    {
        const double epsilon = 0.3, alpha = 0.5, delta = 0.25;
        data::SyntheticSpec spec{data::Tightness{alpha, 0.4, epsilon}, 4000, 23};
        data::Dataset ds = data::generate(spec);
        AnalyticClassifier base = threshold_classifier(-epsilon);
        BruteForceScan scan = brute_force_scan(fdelta_fn(base, delta, epsilon), ds, epsilon, 1000, opt.threads);
        metrics::RobustnessCurve curve = scan_curve(scan, kDefaultAlphas);
        double worst = -std::numeric_limits<double>::infinity();
        for (std::size_t ai = 0; ai < kDefaultAlphas.size(); ++ai) {
            double a = kDefaultAlphas[ai];
            double eps_prime = std::max((a + delta) * epsilon, (1.0 - delta) * epsilon);
            double bound = standard_robust_error(base, ds, eps_prime);
            worst = std::max(worst, curve.values[ai] - bound);
        }
        checks.push_back(make_bound_check("theorem1/bound/tightness_atoms", 0.0, worst, tol));
    }

    // Instance 3: 2-D Gaussians against a tilted halfspace.
    {
        const double epsilon = 0.4, delta = 0.25;
        data::SyntheticSpec spec{data::TwoGaussians{3.0, 0.8}, 300, 29};
        data::Dataset ds = data::generate(spec);
        AnalyticClassifier base = linear_classifier(1.0, 0.3, 0.05);
        BruteForceScan scan = brute_force_scan(fdelta_fn(base, delta, epsilon), ds, epsilon, 100, opt.threads);
        metrics::RobustnessCurve curve = scan_curve(scan, kDefaultAlphas);
        double worst = -std::numeric_limits<double>::infinity();
        for (std::size_t ai = 0; ai < kDefaultAlphas.size(); ++ai) {
            double a = kDefaultAlphas[ai];
            double eps_prime = std::max((a + delta) * epsilon, (1.0 - delta) * epsilon);
            double bound = standard_robust_error(base, ds, eps_prime);
            worst = std::max(worst, curve.values[ai] - bound);
        }
        checks.push_back(make_bound_check("theorem1/bound/linear_2d", 0.0, worst, tol));
    }
    return checks;
}

std::vector<OracleCheck> tightness_suite(const OracleOptions& opt) {
    const double alpha = 0.5, beta = 0.4, epsilon = 0.3;
    const std::size_t n = 10000;
    TightnessValues tv = tightness_values(alpha, beta, epsilon);

    std::vector<OracleCheck> checks;
    checks.push_back(make_check("tightness/lower_bound_value", 0.2, tv.lower_bound, 0.0));
    checks.push_back(make_check("tightness/epsilon_prime_value", (1.0 + alpha) * epsilon / 2.0,
                                tv.epsilon_prime, 0.0));
    checks.push_back(make_check("tightness/alpha1_eps_prime", epsilon,
                                tightness_values(1.0, beta, epsilon).epsilon_prime, 0.0));
    // alpha = 0 with delta = 1/2 is the detection-only special case; the
    // budget degenerates to eps/2 on both branches.
    checks.push_back(make_check("tightness/detection_special_case", 0.5 * epsilon,
                                tightness_values(0.0, beta, epsilon).epsilon_prime, 0.0));

    data::SyntheticSpec spec{data::Tightness{alpha, beta, epsilon}, n, 77};
    data::Dataset ds = data::generate(spec);
    AnalyticClassifier base = threshold_classifier(-epsilon);
    double delta = (1.0 - alpha) / 2.0;
    BruteForceScan scan = brute_force_scan(fdelta_fn(base, delta, epsilon), ds, epsilon, 1000, opt.threads);
    metrics::RobustnessCurve curve = scan_curve(scan, {0.0, alpha, 1.0});
    double empirical = curve.values[1];

    double tol = 0.012 * opt.tolerance_scale;  // 3-sigma binomial at n = 1e4
    checks.push_back(make_check("tightness/empirical_error_at_alpha", beta / 2.0, empirical, tol));
    double oe = standard_robust_error(base, ds, tv.epsilon_prime);
    checks.push_back(make_check("tightness/empirical_oe_eps_prime", beta / 2.0, oe, tol));
    checks.push_back(make_bound_check("tightness/bound_holds", oe, empirical, 0.01 * opt.tolerance_scale));
    return checks;
}

std::vector<OracleCheck> run_suite(const std::string& name, const OracleOptions& opt) {
    if (name == "lemma1") return lemma1_suite(opt);
    if (name == "theorem1") return theorem1_suite(opt);
    if (name == "theorem2") return theorem2_suite(opt);
    if (name == "tightness") return tightness_suite(opt);
    if (name == "all") {
        std::vector<OracleCheck> all;
        for (const char* s : {"lemma1", "theorem1", "theorem2", "tightness"}) {
            auto part = run_suite(s, opt);
            all.insert(all.end(), part.begin(), part.end());
        }
        return all;
    }
    throw std::invalid_argument("unknown oracle suite: " + name);
}

std::string report_json(const std::vector<OracleCheck>& checks) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& c : checks) {
        nlohmann::json e;
        e["name"] = c.name;
        e["theoretical"] = c.theoretical;
        e["empirical"] = c.empirical;
        e["tolerance"] = c.tolerance;
        e["pass"] = c.pass;
        j.push_back(std::move(e));
    }
    return j.dump(2);
}

}  // namespace selrob::oracle
