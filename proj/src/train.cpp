#include "selrob/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace selrob::train {

void TrainConfig::validate() const {
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive");
    if (!(lr_decay_per_epoch > 0.0)) throw std::invalid_argument("TrainConfig: lr decay must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("TrainConfig: momentum must be in [0,1)");
    if (epsilon < 0.0) throw std::invalid_argument("TrainConfig: epsilon must be >= 0");
    if (pgd_steps < 0) throw std::invalid_argument("TrainConfig: pgd_steps must be >= 0");
    if (pgd_step_size < 0.0) throw std::invalid_argument("TrainConfig: pgd_step_size must be >= 0");
    if (trades_beta < 0.0) throw std::invalid_argument("TrainConfig: trades_beta must be >= 0");
}

static double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Vec adversarial_example_ce(const nn::Mlp& m, const Vec& x, int y, const TrainConfig& cfg, Rng& rng) {
    Vec z = x;
    if (cfg.random_start) {
        for (std::size_t j = 0; j < z.size(); ++j) z[j] += cfg.epsilon * rng.uniform(-1.0, 1.0);
        clip_to_box(z, cfg.domain_clip);
    }
    nn::LossSpec ce = nn::LossSpec::cross_entropy(y);
    for (int i = 0; i < cfg.pgd_steps; ++i) {
        Vec g = nn::grad_input(m, z, ce);
        for (std::size_t j = 0; j < z.size(); ++j) {
            z[j] += cfg.pgd_step_size * sign_of(g[j]);
            z[j] = clamp(z[j], x[j] - cfg.epsilon, x[j] + cfg.epsilon);
        }
        clip_to_box(z, cfg.domain_clip);
    }
    return z;
}

// d KL(p || q) / d v where q = softmax(v) and p is fixed: q - p.
static Vec kl_grad_adv_logits(const Vec& p, const Vec& q) {
    Vec g(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) g[i] = q[i] - p[i];
    return g;
}

static double kl_divergence(const Vec& p, const Vec& log_p, const Vec& log_q) {
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) kl += p[i] * (log_p[i] - log_q[i]);
    return std::max(kl, 0.0);
}

static Vec log_softmax(const Vec& logits) {
    double lse = nn::log_sum_exp(logits);
    Vec out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

// PGD ascent of KL(h(x) || h(z)) over z; starts from a small random offset
// (the KL gradient vanishes exactly at z = x).
static Vec pgd_kl(const nn::Mlp& m, const Vec& x, const TrainConfig& cfg, Rng& rng) {
    Vec p = nn::forward(m, x).probs;
    Vec z = x;
    for (std::size_t j = 0; j < z.size(); ++j) z[j] += 0.001 * cfg.epsilon * rng.normal();
    for (std::size_t j = 0; j < z.size(); ++j) z[j] = clamp(z[j], x[j] - cfg.epsilon, x[j] + cfg.epsilon);
    clip_to_box(z, cfg.domain_clip);
    for (int i = 0; i < cfg.pgd_steps; ++i) {
        nn::Trace t = nn::forward_trace(m, z);
        Vec q = nn::softmax(t.logits());
        Vec g = nn::backprop_input(m, t, kl_grad_adv_logits(p, q));
        for (std::size_t j = 0; j < z.size(); ++j) {
            z[j] += cfg.pgd_step_size * sign_of(g[j]);
            z[j] = clamp(z[j], x[j] - cfg.epsilon, x[j] + cfg.epsilon);
        }
        clip_to_box(z, cfg.domain_clip);
    }
    return z;
}

enum class Mode { standard, adversarial, trades };

static TrainResult train_loop(const data::Dataset& ds, const std::vector<int>& hidden,
                              const TrainConfig& cfg, Mode mode) {
    cfg.validate();
    ds.validate();
    TrainResult result;
    result.model = nn::make_mlp(ds.d, hidden, ds.k, derive_seed(cfg.seed, {0xA111}));
    nn::Mlp& model = result.model;
    nn::SgdState sgd = nn::make_sgd_state(model);
    Rng shuffle_rng(derive_seed(cfg.seed, {0x5FF1}));
    Rng attack_rng(derive_seed(cfg.seed, {0xADF2}));

    std::vector<std::size_t> order(ds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = cfg.lr * std::pow(cfg.lr_decay_per_epoch, epoch);
        shuffle_rng.shuffle(order);
        double clean_sum = 0.0, robust_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::size_t bs = end - start;
            double scale = 1.0 / static_cast<double>(bs);
            nn::ParamGrad grad = nn::zeros_like(model);
            for (std::size_t bi = start; bi < end; ++bi) {
                const Vec& x = ds.xs[order[bi]];
                int y = ds.ys[order[bi]];
                if (mode == Mode::standard) {
                    nn::Trace t = nn::forward_trace(model, x);
                    auto o = nn::eval_loss(nn::LossSpec::cross_entropy(y), t.logits(), model.k);
                    clean_sum += o.value;
                    robust_sum += o.value;
                    nn::backprop_params(model, t, o.dlogits, scale, grad);
                } else if (mode == Mode::adversarial) {
                    Vec xa = adversarial_example_ce(model, x, y, cfg, attack_rng);
                    nn::Trace t = nn::forward_trace(model, xa);
                    auto o = nn::eval_loss(nn::LossSpec::cross_entropy(y), t.logits(), model.k);
                    clean_sum += nn::cross_entropy_loss(model, x, y);
                    robust_sum += o.value;
                    nn::backprop_params(model, t, o.dlogits, scale, grad);
                } else {
                    Vec xa = pgd_kl(model, x, cfg, attack_rng);
                    nn::Trace t_clean = nn::forward_trace(model, x);
                    nn::Trace t_adv = nn::forward_trace(model, xa);
                    Vec p = nn::softmax(t_clean.logits());
                    Vec log_p = log_softmax(t_clean.logits());
                    Vec log_q = log_softmax(t_adv.logits());
                    Vec q = nn::softmax(t_adv.logits());
                    double kl = kl_divergence(p, log_p, log_q);
                    auto ce = nn::eval_loss(nn::LossSpec::cross_entropy(y), t_clean.logits(), model.k);
                    clean_sum += ce.value;
                    robust_sum += kl;
                    // d/du [CE + beta*KL(p(u) || q)] with p = softmax(u):
                    //   (p - onehot) + beta * p .* (log p - log q - KL)
                    Vec dclean = ce.dlogits;
                    for (std::size_t i = 0; i < dclean.size(); ++i)
                        dclean[i] += cfg.trades_beta * p[i] * (log_p[i] - log_q[i] - kl);
                    nn::backprop_params(model, t_clean, dclean, scale, grad);
                    // d/dv beta*KL = beta * (q - p)
                    Vec dadv = kl_grad_adv_logits(p, q);
                    for (double& v : dadv) v *= cfg.trades_beta;
                    nn::backprop_params(model, t_adv, dadv, scale, grad);
                }
                ++seen;
            }
            if (!std::isfinite(clean_sum) || !std::isfinite(robust_sum))
                throw TrainingError("training diverged: non-finite loss");
            nn::sgd_step(model, grad, lr, cfg.momentum, sgd);
        }
        result.log.push_back({epoch, clean_sum / static_cast<double>(seen),
                              robust_sum / static_cast<double>(seen)});
    }
    return result;
}

TrainResult train_standard(const data::Dataset& ds, const std::vector<int>& hidden, const TrainConfig& cfg) {
    return train_loop(ds, hidden, cfg, Mode::standard);
}

TrainResult train_at(const data::Dataset& ds, const std::vector<int>& hidden, const TrainConfig& cfg) {
    return train_loop(ds, hidden, cfg, Mode::adversarial);
}

TrainResult train_trades(const data::Dataset& ds, const std::vector<int>& hidden, const TrainConfig& cfg) {
    return train_loop(ds, hidden, cfg, Mode::trades);
}

double accuracy(const nn::Mlp& m, const data::Dataset& ds) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (argmax(nn::forward(m, ds.xs[i]).probs) == ds.ys[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

void save_log_csv(const std::vector<LogRow>& log, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for writing: " + path);
    f << "epoch,clean_loss,robust_loss_proxy\n";
    char buf[80];
    for (const LogRow& r : log) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", r.epoch, r.clean_loss, r.robust_loss_proxy);
        f << buf;
    }
}

}  // namespace selrob::train
