#pragma once

#include <optional>
#include <string>
#include <vector>

#include "selrob/attacks.hpp"
#include "selrob/common.hpp"

namespace selrob::metrics {

/// Robust error with rejection sampled on an alpha grid. The grid must
/// contain 0 and 1 and the values must be nondecreasing in [0,1].
struct RobustnessCurve {
    std::vector<double> alphas;
    std::vector<double> values;  // s(alpha)
    double epsilon = 0.0;

    void validate() const;

    /// Linear interpolation; grid points return the stored value exactly.
    double at(double alpha) const;
};

/// step(alpha0): loss 1 for perturbation magnitudes r <= alpha0*epsilon.
/// ramp(t): (1 - r/epsilon)^t.
struct RejectionLoss {
    enum class Kind { step, ramp };
    Kind kind = Kind::step;
    double param = 0.0;

    static RejectionLoss step(double alpha0);
    static RejectionLoss ramp(double t);

    double operator()(double r, double epsilon) const;
    std::string describe() const;
};

/// Builds s(alpha) from per-point outcomes: a point errs at alpha when a
/// rejection was found within alpha*epsilon (the clean point alone at
/// alpha = 0) or a misclassification exists within epsilon (including an
/// accepted-but-wrong clean prediction).
RobustnessCurve robustness_curve(const std::vector<attacks::AttackOutcome>& outcomes,
                                 const std::vector<double>& alpha_grid, double epsilon);

/// Total robust loss under step rejection loss: s(alpha0), interpolated.
double total_robust_loss_step(const RobustnessCurve& curve, double alpha0);

/// Total robust loss under ramp rejection loss:
/// t * integral of s(alpha) (1-alpha)^(t-1) d alpha. The curve is densified
/// to spacing 0.01 and the ramp weight is integrated exactly against the
/// piecewise-linear curve on each cell. Requires t >= 1.
double total_robust_loss_ramp(const RobustnessCurve& curve, double t);

/// Riemann-Stieltjes form on the curve grid:
/// s(0) + (l(0)-1)*p_rej + sum_i l(alpha_i*eps) * (s(alpha_i)-s(alpha_i-1)).
/// loss_on_grid holds l(alpha_i*epsilon) per grid point; it must be
/// monotone nonincreasing with values in [0,1].
double total_robust_loss_general(const RobustnessCurve& curve, double p_rej,
                                 const std::vector<double>& loss_on_grid);

/// Fraction of points with clean_rejected and no misclassification found in
/// the epsilon-ball (the p_rej event of the Stieltjes formula).
double estimate_p_rej(const std::vector<attacks::AttackOutcome>& outcomes);

struct TraditionalMetrics {
    std::optional<double> acc_with_rej;  // absent when every point is rejected
    double rej_rate = 0.0;
    std::optional<double> f1_like;       // harmonic mean of acc and 1 - rej_rate
    double robust_acc_with_detection = 0.0;  // 1 - s(0)
};

TraditionalMetrics traditional_metrics(const std::vector<attacks::AttackOutcome>& outcomes);

/// CSV with header alpha,s.
void save_curve_csv(const RobustnessCurve& curve, const std::string& path);

/// Parses a curve CSV; FormatError messages carry the offending line number.
RobustnessCurve load_curve_csv(const std::string& path);

}  // namespace selrob::metrics
