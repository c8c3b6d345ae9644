#include "selrob/attacks.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace selrob::attacks {

void PgdConfig::validate() const {
    if (iterations < 1) throw std::invalid_argument("PgdConfig: iterations must be >= 1");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("PgdConfig: momentum must be in [0,1)");
    if (restarts < 0) throw std::invalid_argument("PgdConfig: restarts must be >= 0");
    if (radius < 0.0) throw std::invalid_argument("PgdConfig: radius must be >= 0");
    for (double s : step_sizes)
        if (!(s >= 0.0)) throw std::invalid_argument("PgdConfig: step sizes must be >= 0");
}

std::vector<double> PgdConfig::effective_step_sizes() const {
    if (!step_sizes.empty()) return step_sizes;
    if (radius == 0.0) return {0.0};
    return {radius / 3.0, radius / 10.0, radius / 30.0};
}

static double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// One restart: momentum-PGD ascent from a single initialization, returning
// the best iterate seen. zero_init starts at x; otherwise delta is drawn
// uniformly over directions and norm (u * radius * g / ||g||_inf). The
// iteration state is the perturbation, so the ball constraint is exact on
// delta and the materialized point differs from a feasible one by at most
// rounding of x + delta.
static PgdResult run_pgd_single(const Objective& objective, const Vec& x, double radius, double lr,
                                int iterations, double momentum, const std::optional<Box>& box,
                                bool zero_init, uint64_t seed) {
    const std::size_t d = x.size();
    Vec dlo(d, -radius), dhi(d, radius);
    if (box) {
        for (std::size_t j = 0; j < d; ++j) {
            dlo[j] = std::max(dlo[j], box->lo - x[j]);
            dhi[j] = std::min(dhi[j], box->hi - x[j]);
            if (dlo[j] > dhi[j]) dlo[j] = dhi[j] = 0.0;  // x outside the box; stay put
        }
    }
    Vec delta(d, 0.0);
    if (!zero_init && radius > 0.0) {
        Rng rng(seed);
        Vec dir(d);
        for (double& v : dir) v = rng.normal();
        double u = rng.uniform();
        double norm = linf_norm(dir);
        if (norm > 0.0)
            for (std::size_t j = 0; j < d; ++j) delta[j] = u * radius * dir[j] / norm;
    }
    for (std::size_t j = 0; j < d; ++j) delta[j] = clamp(delta[j], dlo[j], dhi[j]);

    Vec z(d), velocity(d, 0.0);
    auto materialize = [&] {
        for (std::size_t j = 0; j < d; ++j) z[j] = x[j] + delta[j];
    };
    PgdResult best{x, -std::numeric_limits<double>::infinity()};
    for (int it = 0; it <= iterations; ++it) {
        materialize();
        ObjectiveEval e = objective(z);
        if (e.value > best.value) {
            best.value = e.value;
            best.point = z;
        }
        if (it == iterations) break;
        for (std::size_t j = 0; j < d; ++j) {
            velocity[j] = momentum * velocity[j] + sign_of(e.grad[j]);
            delta[j] = clamp(delta[j] + lr * velocity[j], dlo[j], dhi[j]);
        }
    }
    const double slack = 1e-12;
    if (linf_dist(best.point, x) > radius + slack) throw NumericError("pgd: candidate left the l-inf ball");
    if (box)
        for (double v : best.point)
            if (v < box->lo - slack || v > box->hi + slack)
                throw NumericError("pgd: candidate left the domain box");
    return best;
}

PgdResult pgd_optimize(const Objective& objective, const Vec& x, const PgdConfig& cfg) {
    cfg.validate();
    std::vector<double> lrs = cfg.effective_step_sizes();
    PgdResult best;
    bool first = true;
    for (std::size_t li = 0; li < lrs.size(); ++li) {
        for (int r = 0; r <= cfg.restarts; ++r) {
            uint64_t seed = derive_seed(cfg.seed, {li, static_cast<uint64_t>(r)});
            PgdResult run = run_pgd_single(objective, x, cfg.radius, lrs[li], cfg.iterations,
                                           cfg.momentum, cfg.domain_clip, r == 0, seed);
            if (first || run.value > best.value) {
                best = std::move(run);
                first = false;
            }
        }
    }
    return best;
}

Vec bpda_grad(const nn::Mlp& m, const Vec& x, const selective::CprConfig& cfg, const Vec& downstream) {
    if (downstream.size() != m.d) throw std::invalid_argument("bpda_grad: downstream gradient size mismatch");
    (void)x;
    (void)cfg;
    return downstream;
}

// value = lse(logits) - lse(tau*logits)/tau, the smooth surrogate of
// -log h_max; dlogits = softmax(logits) - softmax(tau*logits).
static nn::LogitObjective low_confidence_term(const Vec& logits, double tau) {
    Vec scaled(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) scaled[i] = tau * logits[i];
    nn::LogitObjective o;
    o.value = nn::log_sum_exp(logits) - nn::log_sum_exp(scaled) / tau;
    o.dlogits = nn::softmax(logits);
    Vec sharp = nn::softmax(scaled);
    for (std::size_t i = 0; i < logits.size(); ++i) o.dlogits[i] -= sharp[i];
    return o;
}

// value = sign * log h_target; dlogits = sign * (e_target - softmax).
static nn::LogitObjective log_prob_term(const Vec& logits, int target, double sign) {
    nn::LogitObjective o;
    o.value = sign * (logits[target] - nn::log_sum_exp(logits));
    o.dlogits = nn::softmax(logits);
    for (double& v : o.dlogits) v *= -sign;
    o.dlogits[target] += sign;
    return o;
}

static ObjectiveEval eval_term_at(const nn::Mlp& m, const Vec& z,
                                  const std::function<nn::LogitObjective(const Vec&)>& term) {
    nn::Trace t = nn::forward_trace(m, z);
    nn::LogitObjective o = term(t.logits());
    ObjectiveEval e;
    e.value = o.value;
    e.grad = nn::backprop_input(m, t, o.dlogits);
    return e;
}

Objective lcia_objective(const nn::Mlp& m, double temperature) {
    if (!(temperature > 0.0)) throw std::invalid_argument("lcia: temperature must be positive");
    return [model = &m, temperature](const Vec& z) {
        return eval_term_at(*model, z, [&](const Vec& lg) { return low_confidence_term(lg, temperature); });
    };
}

Objective clcia_objective(const nn::Mlp& m, const selective::CprConfig& cpr, double temperature) {
    if (!(temperature > 0.0)) throw std::invalid_argument("clcia: temperature must be positive");
    return [model = &m, cpr, temperature](const Vec& z) {
        auto term = [&](const Vec& lg) { return low_confidence_term(lg, temperature); };
        ObjectiveEval at_z = eval_term_at(*model, z, term);
        Vec tz = selective::cpr_transport(*model, z, cpr);
        ObjectiveEval at_tz = eval_term_at(*model, tz, term);
        ObjectiveEval e;
        e.value = at_z.value + at_tz.value;
        e.grad = at_z.grad;
        Vec through = bpda_grad(*model, z, cpr, at_tz.grad);
        for (std::size_t j = 0; j < e.grad.size(); ++j) e.grad[j] += through[j];
        return e;
    };
}

Objective pdia_objective(const nn::Mlp& m, const selective::CprConfig& cpr, int target) {
    return [model = &m, cpr, target](const Vec& z) {
        ObjectiveEval at_z = eval_term_at(*model, z, [&](const Vec& lg) { return log_prob_term(lg, target, 1.0); });
        Vec tz = selective::cpr_transport(*model, z, cpr);
        ObjectiveEval at_tz = eval_term_at(*model, tz, [&](const Vec& lg) { return log_prob_term(lg, target, -1.0); });
        ObjectiveEval e;
        e.value = at_z.value + at_tz.value;
        e.grad = at_z.grad;
        Vec through = bpda_grad(*model, z, cpr, at_tz.grad);
        for (std::size_t j = 0; j < e.grad.size(); ++j) e.grad[j] += through[j];
        return e;
    };
}

Objective hcmoa_objective(const nn::Mlp& m, int target) {
    return [model = &m, target](const Vec& z) {
        return eval_term_at(*model, z, [&](const Vec& lg) { return log_prob_term(lg, target, 1.0); });
    };
}

Objective chcmoa_objective(const nn::Mlp& m, const selective::CprConfig& cpr, int target) {
    return [model = &m, cpr, target](const Vec& z) {
        ObjectiveEval at_z = eval_term_at(*model, z, [&](const Vec& lg) { return log_prob_term(lg, target, 1.0); });
        Vec tz = selective::cpr_transport(*model, z, cpr);
        ObjectiveEval at_tz = eval_term_at(*model, tz, [&](const Vec& lg) { return log_prob_term(lg, target, 1.0); });
        ObjectiveEval e;
        e.value = at_z.value + at_tz.value;
        e.grad = at_z.grad;
        Vec through = bpda_grad(*model, z, cpr, at_tz.grad);
        for (std::size_t j = 0; j < e.grad.size(); ++j) e.grad[j] += through[j];
        return e;
    };
}

PgdResult lcia(const nn::Mlp& m, const Vec& x, double radius, PgdConfig cfg, double temperature) {
    cfg.radius = radius;
    return pgd_optimize(lcia_objective(m, temperature), x, cfg);
}

PgdResult clcia(const nn::Mlp& m, const Vec& x, double radius, PgdConfig cfg,
                const selective::CprConfig& cpr, double temperature) {
    cfg.radius = radius;
    return pgd_optimize(clcia_objective(m, cpr, temperature), x, cfg);
}

// Targeted selection shared by pdia/hcmoa/chcmoa: run one optimization per
// target class, keep the candidate with the best final objective.
static TargetedResult best_over_targets(const std::vector<int>& targets, const Vec& x, const PgdConfig& cfg,
                                        const std::function<Objective(int)>& make_objective) {
    TargetedResult best;
    bool first = true;
    for (int j : targets) {
        PgdConfig cj = cfg;
        cj.seed = derive_seed(cfg.seed, {static_cast<uint64_t>(j) + 1});
        PgdResult r = pgd_optimize(make_objective(j), x, cj);
        if (first || r.value > best.value) {
            best.point = std::move(r.point);
            best.value = r.value;
            best.target = j;
            first = false;
        }
    }
    return best;
}

TargetedResult pdia(const nn::Mlp& m, const Vec& x, double radius, PgdConfig cfg,
                    const selective::CprConfig& cpr) {
    cfg.radius = radius;
    std::vector<int> targets(m.k);
    for (int j = 0; j < m.k; ++j) targets[j] = j;  // the predicted class is included
    return best_over_targets(targets, x, cfg, [&](int j) { return pdia_objective(m, cpr, j); });
}

TargetedResult hcmoa(const nn::Mlp& m, const Vec& x, int y, double radius, PgdConfig cfg) {
    if (m.k < 2) throw std::invalid_argument("hcmoa: need k >= 2");
    cfg.radius = radius;
    std::vector<int> targets;
    for (int j = 0; j < m.k; ++j)
        if (j != y) targets.push_back(j);
    return best_over_targets(targets, x, cfg, [&](int j) { return hcmoa_objective(m, j); });
}

TargetedResult chcmoa(const nn::Mlp& m, const Vec& x, int y, double radius, PgdConfig cfg,
                      const selective::CprConfig& cpr) {
    if (m.k < 2) throw std::invalid_argument("chcmoa: need k >= 2");
    cfg.radius = radius;
    std::vector<int> targets;
    for (int j = 0; j < m.k; ++j)
        if (j != y) targets.push_back(j);
    return best_over_targets(targets, x, cfg, [&](int j) { return chcmoa_objective(m, cpr, j); });
}

const char* attack_name(AttackKind k) {
    switch (k) {
        case AttackKind::lcia: return "lcia";
        case AttackKind::clcia: return "clcia";
        case AttackKind::pdia: return "pdia";
        case AttackKind::hcmoa: return "hcmoa";
        case AttackKind::chcmoa: return "chcmoa";
        case AttackKind::conf_outer: return "conf_outer";
    }
    return "?";
}

AttackKind attack_from_name(const std::string& name) {
    if (name == "lcia") return AttackKind::lcia;
    if (name == "clcia") return AttackKind::clcia;
    if (name == "pdia") return AttackKind::pdia;
    if (name == "hcmoa") return AttackKind::hcmoa;
    if (name == "chcmoa") return AttackKind::chcmoa;
    if (name == "conf_outer") return AttackKind::conf_outer;
    throw std::invalid_argument("unknown attack: " + name);
}

bool is_inner(AttackKind k) {
    return k == AttackKind::lcia || k == AttackKind::clcia || k == AttackKind::pdia;
}

namespace {

// Target classes and objective for one attack kind at one point.
struct AttackPlan {
    std::vector<int> targets;
    std::function<Objective(int)> objective;
};

AttackPlan plan_attack(AttackKind kind, const nn::Mlp& m, const selective::CprConfig& cpr,
                       int label, double temperature) {
    const nn::Mlp* model = &m;
    const selective::CprConfig* cp = &cpr;
    AttackPlan p;
    switch (kind) {
        case AttackKind::lcia:
            p.targets = {-1};
            p.objective = [model, temperature](int) { return lcia_objective(*model, temperature); };
            break;
        case AttackKind::clcia:
            p.targets = {-1};
            p.objective = [model, cp, temperature](int) { return clcia_objective(*model, *cp, temperature); };
            break;
        case AttackKind::pdia:
            for (int j = 0; j < m.k; ++j) p.targets.push_back(j);
            p.objective = [model, cp](int j) { return pdia_objective(*model, *cp, j); };
            break;
        case AttackKind::hcmoa:
        case AttackKind::conf_outer:
            for (int j = 0; j < m.k; ++j)
                if (j != label) p.targets.push_back(j);
            p.objective = [model](int j) { return hcmoa_objective(*model, j); };
            break;
        case AttackKind::chcmoa:
            for (int j = 0; j < m.k; ++j)
                if (j != label) p.targets.push_back(j);
            p.objective = [model, cp](int j) { return chcmoa_objective(*model, *cp, j); };
            break;
    }
    return p;
}

}  // namespace

EnsembleReport ensemble_evaluate(const selective::SelectiveClassifier& cls, const data::Dataset& test,
                                 double epsilon, const std::vector<double>& alpha_grid,
                                 const std::vector<AttackKind>& inner, const std::vector<AttackKind>& outer,
                                 const EnsembleConfig& cfg) {
    if (inner.empty() || outer.empty()) throw std::invalid_argument("ensemble_evaluate: empty attack list");
    for (AttackKind k : inner)
        if (!is_inner(k)) throw std::invalid_argument(std::string("ensemble_evaluate: ") + attack_name(k) + " is not an inner attack");
    for (AttackKind k : outer)
        if (is_inner(k)) throw std::invalid_argument(std::string("ensemble_evaluate: ") + attack_name(k) + " is not an outer attack");
    if (epsilon < 0.0) throw std::invalid_argument("ensemble_evaluate: epsilon must be >= 0");
    if (alpha_grid.empty()) throw std::invalid_argument("ensemble_evaluate: empty alpha grid");
    for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
        if (alpha_grid[i] < 0.0 || alpha_grid[i] > 1.0)
            throw std::invalid_argument("ensemble_evaluate: alpha grid values must lie in [0,1]");
        if (i > 0 && alpha_grid[i] <= alpha_grid[i - 1])
            throw std::invalid_argument("ensemble_evaluate: alpha grid must be strictly ascending");
    }
    cfg.pgd.validate();

    const nn::Mlp& model = *cls.model;
    selective::CprConfig cpr = (cls.kind == selective::SelectiveKind::cpr) ? cls.cpr : selective::CprConfig{};
    std::size_t n = test.size();
    std::size_t na = alpha_grid.size();

    EnsembleReport report;
    report.alphas = alpha_grid;
    report.epsilon = epsilon;
    report.inner_attacks = inner;
    report.outer_attacks = outer;
    report.outcomes.assign(n, AttackOutcome{});
    for (auto& o : report.outcomes) o.inner_success.assign(na, 0);
    report.inner_mask.assign(inner.size(), std::vector<std::vector<uint8_t>>(n, std::vector<uint8_t>(na, 0)));
    report.outer_mask.assign(outer.size(), std::vector<uint8_t>(n, 0));

    // Step-size defaults scale with each radius, so they are resolved per
    // alpha inside the loop rather than once up front.
    auto run_attack_set = [&](const std::vector<AttackKind>& kinds, const Vec& x, int label, double radius,
                              uint64_t phase, std::size_t point,
                              const std::function<bool(const Vec&)>& succeeded,
                              const std::function<void(std::size_t)>& record) {
        bool any = false;
        for (std::size_t a = 0; a < kinds.size(); ++a) {
            AttackPlan plan = plan_attack(kinds[a], model, cpr, label, cfg.temperature);
            PgdConfig pg = cfg.pgd;
            pg.radius = radius;
            std::vector<double> lrs = pg.effective_step_sizes();
            bool attack_hit = false;
            for (int t : plan.targets) {
                Objective obj = plan.objective(t);
                for (std::size_t li = 0; li < lrs.size() && !attack_hit; ++li) {
                    for (int r = 0; r <= pg.restarts && !attack_hit; ++r) {
                        uint64_t seed = derive_seed(cfg.pgd.seed,
                                                    {point, phase, li, static_cast<uint64_t>(r),
                                                     static_cast<uint64_t>(t) + 1});
                        PgdResult run = run_pgd_single(obj, x, radius, lrs[li], pg.iterations, pg.momentum,
                                                       pg.domain_clip, r == 0, seed);
                        if (succeeded(run.point)) {
                            record(a);
                            attack_hit = true;
                            any = true;
                        }
                    }
                }
                if (attack_hit) break;
            }
            if (any && cfg.early_exit) break;
        }
        return any;
    };

    parallel_for(n, cfg.threads, [&](std::size_t i) {
        const Vec& x = test.xs[i];
        int y = test.ys[i];
        AttackOutcome& out = report.outcomes[i];
        selective::SelectiveDecision clean = cls.decide(x);
        out.clean_rejected = clean.rejected();
        out.clean_correct = !clean.rejected() && clean.label() == y;

        auto accepted_and_wrong = [&](const Vec& z) {
            selective::SelectiveDecision d = cls.decide(z);
            return !d.rejected() && d.label() != y;
        };
        out.outer_success = run_attack_set(outer, x, y, epsilon, 0, i, accepted_and_wrong,
                                           [&](std::size_t a) { report.outer_mask[a][i] = 1; });

        auto rejected = [&](const Vec& z) { return cls.decide(z).rejected(); };
        bool carry = out.clean_rejected;
        for (std::size_t ai = 0; ai < na; ++ai) {
            double alpha = alpha_grid[ai];
            if (alpha <= 0.0) {
                out.inner_success[ai] = carry ? 1 : 0;  // the clean point alone decides alpha = 0
                continue;
            }
            if (carry && cfg.early_exit) {
                out.inner_success[ai] = 1;
                continue;
            }
            bool hit = run_attack_set(inner, x, y, alpha * epsilon, 1 + ai, i, rejected,
                                      [&](std::size_t a) { report.inner_mask[a][i][ai] = 1; });
            carry = carry || hit;
            out.inner_success[ai] = carry ? 1 : 0;
        }
    });
    return report;
}

std::vector<AttackOutcome> single_attack_outcomes(const EnsembleReport& report,
                                                  std::optional<std::size_t> inner_index,
                                                  std::optional<std::size_t> outer_index) {
    if (inner_index && *inner_index >= report.inner_attacks.size())
        throw std::invalid_argument("single_attack_outcomes: inner index out of range");
    if (outer_index && *outer_index >= report.outer_attacks.size())
        throw std::invalid_argument("single_attack_outcomes: outer index out of range");
    std::size_t n = report.outcomes.size();
    std::size_t na = report.alphas.size();
    std::vector<AttackOutcome> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].clean_correct = report.outcomes[i].clean_correct;
        out[i].clean_rejected = report.outcomes[i].clean_rejected;
        out[i].outer_success = outer_index && report.outer_mask[*outer_index][i];
        out[i].inner_success.assign(na, 0);
        bool carry = out[i].clean_rejected;
        for (std::size_t ai = 0; ai < na; ++ai) {
            if (report.alphas[ai] > 0.0 && inner_index)
                carry = carry || report.inner_mask[*inner_index][i][ai];
            out[i].inner_success[ai] = carry ? 1 : 0;
        }
    }
    return out;
}

void save_outcomes_csv(const EnsembleReport& report, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for writing: " + path);
    f << "point_index,clean_correct,clean_rejected,outer_success";
    char buf[40];
    for (double a : report.alphas) {
        std::snprintf(buf, sizeof buf, "%g", a);
        f << ",inner_a" << buf;
    }
    f << '\n';
    for (std::size_t i = 0; i < report.outcomes.size(); ++i) {
        const AttackOutcome& o = report.outcomes[i];
        f << i << ',' << int(o.clean_correct) << ',' << int(o.clean_rejected) << ',' << int(o.outer_success);
        for (uint8_t v : o.inner_success) f << ',' << int(v);
        f << '\n';
    }
}

}  // namespace selrob::attacks
