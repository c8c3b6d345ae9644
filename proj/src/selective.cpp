#include "selrob/selective.hpp"

#include <algorithm>
#include <cmath>

namespace selrob::selective {

void CprConfig::validate() const {
    if (!(consistency_radius >= 0.0)) throw std::invalid_argument("CprConfig: consistency_radius must be >= 0");
    if (pgd_steps < 0) throw std::invalid_argument("CprConfig: pgd_steps must be >= 0");
    if (!(pgd_step_size >= 0.0)) throw std::invalid_argument("CprConfig: pgd_step_size must be >= 0");
}

void ConfidenceConfig::validate() const {
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw std::invalid_argument("ConfidenceConfig: threshold must be in [0,1]");
}

Vec cpr_transport(const nn::Mlp& m, const Vec& x, const CprConfig& cfg) {
    cfg.validate();
    if (cfg.pgd_steps == 0 || cfg.consistency_radius == 0.0) return x;
    int y = argmax(nn::forward(m, x).probs);
    nn::LossSpec ce = nn::LossSpec::cross_entropy(y);
    Vec z = x;
    for (int i = 0; i < cfg.pgd_steps; ++i) {
        Vec g = nn::grad_input(m, z, ce);
        for (std::size_t j = 0; j < z.size(); ++j) {
            double s = g[j] > 0.0 ? 1.0 : (g[j] < 0.0 ? -1.0 : 0.0);
            z[j] += cfg.pgd_step_size * s;
            z[j] = clamp(z[j], x[j] - cfg.consistency_radius, x[j] + cfg.consistency_radius);
        }
        clip_to_box(z, cfg.domain_clip);
    }
    return z;
}

SelectiveDecision cpr_classify(const nn::Mlp& m, const Vec& x, const CprConfig& cfg) {
    int y = argmax(nn::forward(m, x).probs);
    Vec t = cpr_transport(m, x, cfg);
    int yt = argmax(nn::forward(m, t).probs);
    if (yt != y) return SelectiveDecision::reject();
    return SelectiveDecision::classify(y);
}

SelectiveDecision confidence_classify(const nn::Mlp& m, const Vec& x, const ConfidenceConfig& cfg) {
    cfg.validate();
    Vec p = nn::forward(m, x).probs;
    int y = argmax(p);
    if (p[y] < cfg.threshold) return SelectiveDecision::reject();
    return SelectiveDecision::classify(y);
}

SelectiveDecision SelectiveClassifier::decide(const Vec& x) const {
    switch (kind) {
        case SelectiveKind::cpr:
            return cpr_classify(*model, x, cpr);
        case SelectiveKind::confidence:
            return confidence_classify(*model, x, confidence);
        case SelectiveKind::none:
        default:
            return SelectiveDecision::classify(argmax(nn::forward(*model, x).probs));
    }
}

ConfidenceCalibration calibrate_confidence(const nn::Mlp& m, const data::Dataset& val, double p_rej) {
    if (val.size() == 0) throw std::invalid_argument("calibrate: empty validation set");
    if (!(p_rej >= 0.0 && p_rej < 1.0)) throw std::invalid_argument("calibrate: p_rej must be in [0,1)");
    std::vector<double> conf;
    for (std::size_t i = 0; i < val.size(); ++i) {
        Vec p = nn::forward(m, val.xs[i]).probs;
        int y = argmax(p);
        if (y == val.ys[i]) conf.push_back(p[y]);
    }
    if (conf.empty()) throw CalibrationError("calibrate: no correctly classified validation points");
    std::sort(conf.begin(), conf.end());
    std::size_t n = conf.size();
    auto budget = static_cast<std::size_t>(std::floor(p_rej * static_cast<double>(n)));
    // Rejection is strict (< threshold), so placing the threshold at the
    // (budget+1)-th smallest confidence rejects at most `budget` points.
    double tau = conf[std::min(budget, n - 1)];
    std::size_t rejected = 0;
    for (double c : conf)
        if (c < tau) ++rejected;
    ConfidenceCalibration out;
    out.config.threshold = tau;
    out.achieved_rate = static_cast<double>(rejected) / static_cast<double>(n);
    return out;
}

CprCalibration calibrate_cpr(const nn::Mlp& m, const data::Dataset& val, double p_rej,
                             const CprConfig& proto, const std::vector<double>& radius_grid) {
    if (val.size() == 0) throw std::invalid_argument("calibrate: empty validation set");
    if (!(p_rej >= 0.0 && p_rej < 1.0)) throw std::invalid_argument("calibrate: p_rej must be in [0,1)");
    if (radius_grid.empty()) throw std::invalid_argument("calibrate: empty radius grid");
    std::vector<std::size_t> correct;
    for (std::size_t i = 0; i < val.size(); ++i)
        if (argmax(nn::forward(m, val.xs[i]).probs) == val.ys[i]) correct.push_back(i);
    if (correct.empty()) throw CalibrationError("calibrate: no correctly classified validation points");

    std::vector<double> grid = radius_grid;
    std::sort(grid.begin(), grid.end());
    CprCalibration out;
    out.config = proto;
    // Smallest radius reaching the target rate; if none does, the loop ends
    // on the largest candidate, which then sits below the target.
    for (double radius : grid) {
        CprConfig cfg = proto;
        cfg.consistency_radius = radius;
        std::size_t rejected = 0;
        for (std::size_t i : correct)
            if (cpr_classify(m, val.xs[i], cfg).rejected()) ++rejected;
        double rate = static_cast<double>(rejected) / static_cast<double>(correct.size());
        out.config = cfg;
        out.achieved_rate = rate;
        if (rate >= p_rej) break;
    }
    return out;
}

}  // namespace selrob::selective
