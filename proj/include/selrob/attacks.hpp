#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "selrob/data.hpp"
#include "selrob/nn.hpp"
#include "selrob/selective.hpp"

namespace selrob::attacks {

/// Momentum-PGD solver knobs. Each step size is run with `restarts` random
/// initializations plus one zero initialization; the best objective value
/// seen at any iterate anywhere is returned.
struct PgdConfig {
    int iterations = 200;
    double momentum = 0.9;
    int restarts = 5;                // random restarts; zero-init is always added
    std::vector<double> step_sizes;  // empty => {radius/3, radius/10, radius/30}
    double radius = 0.0;             // rho, l-inf
    uint64_t seed = 0;
    std::optional<Box> domain_clip;

    void validate() const;
    std::vector<double> effective_step_sizes() const;
};

struct ObjectiveEval {
    double value = 0.0;
    Vec grad;
};

/// Differentiable attack objective: value and gradient at a point.
using Objective = std::function<ObjectiveEval(const Vec&)>;

struct PgdResult {
    Vec point;
    double value = 0.0;
};

/// Maximizes the objective over the l-inf ball of cfg.radius around x
/// (intersected with the domain box). The zero-init run guarantees the
/// returned value is >= the objective at x.
PgdResult pgd_optimize(const Objective& objective, const Vec& x, const PgdConfig& cfg);

/// Straight-through gradient for T-dependent objectives: the forward pass
/// evaluates T(x) exactly via cpr_transport; the backward pass treats the
/// Jacobian of T as the identity and passes the downstream gradient through.
Vec bpda_grad(const nn::Mlp& m, const Vec& x, const selective::CprConfig& cfg, const Vec& downstream);

// Attack objective builders (logit-space pieces composed through bpda_grad
// where T appears). temperature is the log-sum-exp sharpness for the
// confidence surrogate.
Objective lcia_objective(const nn::Mlp& m, double temperature);
Objective clcia_objective(const nn::Mlp& m, const selective::CprConfig& cpr, double temperature);
Objective pdia_objective(const nn::Mlp& m, const selective::CprConfig& cpr, int target);
Objective hcmoa_objective(const nn::Mlp& m, int target);
Objective chcmoa_objective(const nn::Mlp& m, const selective::CprConfig& cpr, int target);

/// Finds a low-confidence point within the radius.
PgdResult lcia(const nn::Mlp& m, const Vec& x, double radius, PgdConfig cfg, double temperature = 100.0);

/// Low confidence at both z and T(z).
PgdResult clcia(const nn::Mlp& m, const Vec& x, double radius, PgdConfig cfg,
                const selective::CprConfig& cpr, double temperature = 100.0);

struct TargetedResult {
    Vec point;
    double value = 0.0;
    int target = -1;
};

/// Multi-target prediction-disagreement attack: maximizes
/// log h_j(z) - log h_j(T(z)) for every class j, keeps the best.
TargetedResult pdia(const nn::Mlp& m, const Vec& x, double radius, PgdConfig cfg,
                    const selective::CprConfig& cpr);

/// Multi-target misclassification attack: maximizes log h_j(z) over
/// j != y, keeps the best.
TargetedResult hcmoa(const nn::Mlp& m, const Vec& x, int y, double radius, PgdConfig cfg);

/// As hcmoa with the consistent two-term objective
/// log h_j(z) + log h_j(T(z)).
TargetedResult chcmoa(const nn::Mlp& m, const Vec& x, int y, double radius, PgdConfig cfg,
                      const selective::CprConfig& cpr);

/// conf_outer is the misclassification outer attack used against
/// confidence-rejecting classifiers; its objective coincides with hcmoa.
enum class AttackKind { lcia, clcia, pdia, hcmoa, chcmoa, conf_outer };

const char* attack_name(AttackKind k);
AttackKind attack_from_name(const std::string& name);
bool is_inner(AttackKind k);

/// Per-point evaluation record. inner_success holds one flag per alpha-grid
/// entry and is nondecreasing (a success found at some radius propagates to
/// every larger one).
struct AttackOutcome {
    bool clean_correct = false;
    bool clean_rejected = false;
    bool outer_success = false;
    std::vector<uint8_t> inner_success;
};

struct EnsembleConfig {
    PgdConfig pgd;             // radius is set per alpha; seed is the base seed
    double temperature = 100.0;
    bool early_exit = true;    // stop attacking a point once the radius succeeds
    unsigned threads = 0;      // 0 = hardware concurrency
};

/// Ensemble evaluation result. outcomes is the OR over all attacks;
/// inner_mask/outer_mask record which attack produced each success so that
/// single-attack curves can be derived. With early_exit the masks are
/// as-run: attacks skipped after a success keep a zero entry.
struct EnsembleReport {
    std::vector<double> alphas;
    double epsilon = 0.0;
    std::vector<AttackKind> inner_attacks;
    std::vector<AttackKind> outer_attacks;
    std::vector<AttackOutcome> outcomes;
    std::vector<std::vector<std::vector<uint8_t>>> inner_mask;  // [attack][point][alpha]
    std::vector<std::vector<uint8_t>> outer_mask;               // [attack][point]
};

/// Runs the full inner/outer ensemble on every test point. Per point,
/// outer_success is the OR over outer attacks, step sizes and restarts of
/// "accepted and misclassified"; inner_success[a] is the OR over inner
/// attacks at radius alpha*epsilon of "rejected", with alpha = 0 decided by
/// the clean point alone. Deterministic for a fixed seed regardless of the
/// thread count.
EnsembleReport ensemble_evaluate(const selective::SelectiveClassifier& cls, const data::Dataset& test,
                                 double epsilon, const std::vector<double>& alpha_grid,
                                 const std::vector<AttackKind>& inner, const std::vector<AttackKind>& outer,
                                 const EnsembleConfig& cfg);

/// Outcomes restricted to one inner and/or one outer attack (clean flags
/// kept, masks of the selected attacks only, monotone propagation applied).
std::vector<AttackOutcome> single_attack_outcomes(const EnsembleReport& report,
                                                  std::optional<std::size_t> inner_index,
                                                  std::optional<std::size_t> outer_index);

/// CSV: point_index, clean_correct, clean_rejected, outer_success, then one
/// column per alpha ("inner_a{alpha}").
void save_outcomes_csv(const EnsembleReport& report, const std::string& path);

}  // namespace selrob::attacks
