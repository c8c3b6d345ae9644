#pragma once

#include <functional>
#include <string>
#include <vector>

#include "selrob/data.hpp"
#include "selrob/metrics.hpp"
#include "selrob/selective.hpp"

namespace selrob::oracle {

/// Classifier with an exact signed margin in the attack norm: |margin(x)| is
/// the l-inf distance of x to the decision boundary, margin >= 0 maps to
/// class 1 and margin < 0 to class 0.
struct AnalyticClassifier {
    std::function<double(const Vec&)> signed_margin;

    int classify(const Vec& x) const { return signed_margin(x) >= 0.0 ? 1 : 0; }
};

/// 1-D threshold classifier sign(x - boundary).
AnalyticClassifier threshold_classifier(double boundary);

/// 2-D halfspace sign(w.x + b); the l-inf margin is (w.x + b) / ||w||_1.
AnalyticClassifier linear_classifier(double w0, double w1, double b);

struct DensitySegment {
    double r_lo = 0.0;
    double r_hi = 0.0;
    double density = 0.0;
};

/// Piecewise-constant density over the distance r >= 0 to the base
/// classifier's boundary; total mass must be 1 (1e-9).
struct RadialDensity {
    std::vector<DensitySegment> segments;  // disjoint, ascending

    void validate() const;
    double cdf(double r) const;
    double quantile(double q) const;
};

RadialDensity uniform_radial(double r_max);

/// The f_delta construction: reject everything within delta*epsilon of the
/// base boundary, else answer with the base class.
selective::SelectiveDecision fdelta_classify(const AnalyticClassifier& base, double delta, double epsilon,
                                             const Vec& x);

/// Closed-form robust error with rejection of f_delta over a radial density:
/// cdf((1-delta)*eps) for alpha <= 1-2*delta, else cdf((alpha+delta)*eps).
/// Requires delta in [0, 1/2].
double fdelta_curve_closed_form(const RadialDensity& p, double delta, double epsilon, double alpha);

/// Closed-form total robust loss of f_delta:
/// cdf((1-d)e) + integral over ((1-d)e, (1+d)e] of l_rej(r - d*e) p(r) dr.
/// Step losses are integrated analytically; general monotone losses by
/// trapezoid at resolution epsilon/1e4.
double fdelta_total_loss_closed_form(const RadialDensity& p, double delta, double epsilon,
                                     const std::function<double(double)>& loss);
double fdelta_total_loss_closed_form(const RadialDensity& p, double delta, double epsilon,
                                     const metrics::RejectionLoss& loss);

struct TightnessValues {
    double lower_bound = 0.0;    // beta/2
    double epsilon_prime = 0.0;  // (1+alpha)*epsilon/2
};

TightnessValues tightness_values(double alpha, double beta, double epsilon);

using SelectiveFn = std::function<selective::SelectiveDecision(const Vec&)>;

SelectiveFn fdelta_fn(const AnalyticClassifier& base, double delta, double epsilon);

/// Per-point result of the exhaustive l-inf grid adversary: whether any
/// perturbation in the epsilon-ball is accepted-and-misclassified, and the
/// smallest rejected perturbation as a grid-step count (-1 when none; the
/// magnitude is epsilon * min_reject_steps / steps).
struct ScanPoint {
    bool misclassified = false;
    int min_reject_steps = -1;
};

struct BruteForceScan {
    double epsilon = 0.0;
    int steps = 0;
    std::vector<ScanPoint> points;
};

/// Enumerates the l-inf grid (steps subdivisions of epsilon per axis) around
/// every dataset point; only d <= 2 is supported and steps must be >= 100.
BruteForceScan brute_force_scan(const SelectiveFn& f, const data::Dataset& ds, double epsilon, int steps,
                                unsigned threads = 0);

/// Ground-truth total robust loss by direct grid search (Definition-style
/// inner max: misclassification dominates, otherwise the smallest rejected
/// perturbation attains the max for nonincreasing losses).
double brute_force_total_loss(const SelectiveFn& f, const data::Dataset& ds, double epsilon,
                              const std::function<double(double)>& loss, int steps);

double scan_total_loss(const BruteForceScan& scan, const std::function<double(double)>& loss);
metrics::RobustnessCurve scan_curve(const BruteForceScan& scan, const std::vector<double>& alpha_grid);
double scan_p_rej(const BruteForceScan& scan);

/// Standard robust error of an analytic classifier at the given budget
/// (exact: a point errs iff it is clean-wrong or |margin| <= budget).
double standard_robust_error(const AnalyticClassifier& f, const data::Dataset& ds, double budget);

/// Deterministic quantile-stratified sample of a radial density: point i
/// sits at distance quantile((i+0.5)/n) from the boundary at 0, alternating
/// sides, labeled by side. Empirical integrals converge at O(1/n).
data::Dataset radial_dataset(const RadialDensity& p, std::size_t n);

struct OracleCheck {
    std::string name;
    double theoretical = 0.0;
    double empirical = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct OracleOptions {
    double tolerance_scale = 1.0;  // fault-injection hook: 0 breaks every tolerance
    unsigned threads = 0;
};

std::vector<OracleCheck> lemma1_suite(const OracleOptions& opt = {});
std::vector<OracleCheck> theorem1_suite(const OracleOptions& opt = {});
std::vector<OracleCheck> theorem2_suite(const OracleOptions& opt = {});
std::vector<OracleCheck> tightness_suite(const OracleOptions& opt = {});

/// name in {lemma1, theorem1, theorem2, tightness, all}.
std::vector<OracleCheck> run_suite(const std::string& name, const OracleOptions& opt = {});

std::string report_json(const std::vector<OracleCheck>& checks);

}  // namespace selrob::oracle
