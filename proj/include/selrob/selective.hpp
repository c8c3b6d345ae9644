#pragma once

#include <optional>
#include <vector>

#include "selrob/data.hpp"
#include "selrob/nn.hpp"

namespace selrob::selective {

/// Either a predicted class label or the reject decision.
class SelectiveDecision {
public:
    static SelectiveDecision reject() { return SelectiveDecision(-1); }
    static SelectiveDecision classify(int label) {
        if (label < 0) throw std::invalid_argument("SelectiveDecision: negative label");
        return SelectiveDecision(label);
    }

    bool rejected() const { return label_ < 0; }
    int label() const {
        if (rejected()) throw std::logic_error("SelectiveDecision: rejected, no label");
        return label_;
    }

private:
    explicit SelectiveDecision(int label) : label_(label) {}
    int label_;
};

/// Consistency-check hyperparameters: reject x when an m-step PGD probe
/// inside the radius flips the base model's prediction. m = 0 or radius = 0
/// degenerate to never rejecting.
struct CprConfig {
    double consistency_radius = 0.0;  // eps-tilde, l-inf
    int pgd_steps = 0;                // m
    double pgd_step_size = 0.0;       // eta
    std::optional<Box> domain_clip;

    void validate() const;
};

struct ConfidenceConfig {
    double threshold = 0.0;  // tau_c in [0,1]; reject when max prob < tau_c

    void validate() const;
};

/// The transport map T: m deterministic PGD steps ascending the
/// cross-entropy of the clean prediction, each iterate projected back into
/// the consistency ball (and the domain box when set). No random start.
Vec cpr_transport(const nn::Mlp& m, const Vec& x, const CprConfig& cfg);

/// Reject iff argmax h(T(x)) != argmax h(x); otherwise the clean prediction.
SelectiveDecision cpr_classify(const nn::Mlp& m, const Vec& x, const CprConfig& cfg);

/// Reject iff max softmax probability < threshold (strict).
SelectiveDecision confidence_classify(const nn::Mlp& m, const Vec& x, const ConfidenceConfig& cfg);

enum class SelectiveKind { none, confidence, cpr };

/// Non-owning view binding a base model to a rejection rule. kind none never
/// rejects. Classification is read-only on the model and safe to run
/// concurrently across inputs.
struct SelectiveClassifier {
    const nn::Mlp* model = nullptr;
    SelectiveKind kind = SelectiveKind::none;
    CprConfig cpr;
    ConfidenceConfig confidence;

    SelectiveDecision decide(const Vec& x) const;
};

struct ConfidenceCalibration {
    ConfidenceConfig config;
    double achieved_rate = 0.0;
};

struct CprCalibration {
    CprConfig config;
    double achieved_rate = 0.0;
};

/// Sets the threshold to the largest empirical confidence value among
/// correctly-classified validation points whose rejection rate on that
/// subset stays <= p_rej.
ConfidenceCalibration calibrate_confidence(const nn::Mlp& m, const data::Dataset& val, double p_rej);

/// Picks the smallest radius on the candidate grid whose rejection rate on
/// correctly-classified validation points reaches p_rej, else the largest
/// candidate. proto supplies pgd_steps / step size / domain clip.
CprCalibration calibrate_cpr(const nn::Mlp& m, const data::Dataset& val, double p_rej,
                             const CprConfig& proto, const std::vector<double>& radius_grid);

}  // namespace selrob::selective
