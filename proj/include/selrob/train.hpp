#pragma once

#include <optional>
#include <string>
#include <vector>

#include "selrob/data.hpp"
#include "selrob/nn.hpp"

namespace selrob::train {

struct TrainConfig {
    int epochs = 20;
    int batch_size = 32;
    double lr = 0.1;
    double lr_decay_per_epoch = 0.95;
    double momentum = 0.9;
    uint64_t seed = 1;

    // Robust-training settings (l-inf attack budget during training).
    double epsilon = 0.0;
    int pgd_steps = 0;
    double pgd_step_size = 0.0;
    bool random_start = true;
    double trades_beta = 0.0;

    std::optional<Box> domain_clip;  // images clip to [0,1]; synthetic data unclipped

    void validate() const;
};

struct LogRow {
    int epoch = 0;
    double clean_loss = 0.0;
    double robust_loss_proxy = 0.0;  // adversarial CE for AT, mean KL for TRADES
};

struct TrainResult {
    nn::Mlp model;
    std::vector<LogRow> log;
};

/// Training-time attack: PGD ascent of the true-label cross-entropy inside
/// the epsilon-ball (uniform random start when cfg.random_start, drawn from
/// rng), clipped to the domain box.
Vec adversarial_example_ce(const nn::Mlp& m, const Vec& x, int y, const TrainConfig& cfg, Rng& rng);

/// Plain SGD on the clean cross-entropy. Deterministic for a fixed seed.
TrainResult train_standard(const data::Dataset& ds, const std::vector<int>& hidden, const TrainConfig& cfg);

/// Adversarial training: every minibatch sample is replaced by its PGD-l-inf
/// adversarial example (random start per cfg) before the gradient step.
TrainResult train_at(const data::Dataset& ds, const std::vector<int>& hidden, const TrainConfig& cfg);

/// TRADES-style objective: clean CE + trades_beta * KL(h(x) || h(x_adv)),
/// with x_adv maximizing the KL via PGD from a small random start.
TrainResult train_trades(const data::Dataset& ds, const std::vector<int>& hidden, const TrainConfig& cfg);

double accuracy(const nn::Mlp& m, const data::Dataset& ds);

/// CSV with header epoch,clean_loss,robust_loss_proxy.
void save_log_csv(const std::vector<LogRow>& log, const std::string& path);

}  // namespace selrob::train
