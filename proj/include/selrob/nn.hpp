#pragma once

#include <functional>
#include <string>
#include <vector>

#include "selrob/common.hpp"

namespace selrob::nn {

enum class Activation { relu, identity };

/// Dense layer, weights row-major (out x in).
struct Layer {
    std::size_t in = 0;
    std::size_t out = 0;
    Vec w;
    Vec b;
    Activation act = Activation::identity;
};

/// Small dense network with k output classes over d-dimensional inputs.
/// Immutable during inference; every evaluation path below is const and safe
/// to call from multiple threads on a shared model.
struct Mlp {
    std::vector<Layer> layers;
    std::size_t d = 0;
    int k = 0;

    /// Throws std::invalid_argument when layer dimensions do not chain, the
    /// final width is not k, or any parameter is non-finite.
    void validate() const;
};

/// Glorot-uniform initialized network: d -> hidden... -> k, relu on hidden
/// layers, identity on the output layer.
Mlp make_mlp(std::size_t d, const std::vector<int>& hidden, int k, uint64_t seed);

struct Forward {
    Vec logits;
    Vec probs;
};

Vec softmax(const Vec& logits);
double log_sum_exp(const Vec& v);

Forward forward(const Mlp& m, const Vec& x);

/// Per-layer activations recorded for backpropagation.
struct Trace {
    Vec input;
    std::vector<Vec> pre;   // z_l = W_l a_{l-1} + b_l
    std::vector<Vec> post;  // a_l = act(z_l); post.back() are the logits
    const Vec& logits() const { return post.back(); }
};

Trace forward_trace(const Mlp& m, const Vec& x);

/// Parameter-shaped buffer (gradients, SGD velocity).
struct LayerGrad {
    Vec w;
    Vec b;
};
struct ParamGrad {
    std::vector<LayerGrad> layers;
};

ParamGrad zeros_like(const Mlp& m);

/// Gradient of a scalar objective wrt the input, given d(objective)/d(logits).
Vec backprop_input(const Mlp& m, const Trace& t, const Vec& dlogits);

/// Accumulates scale * d(objective)/d(params) into out.
void backprop_params(const Mlp& m, const Trace& t, const Vec& dlogits, double scale, ParamGrad& out);

/// Value of an objective together with its gradient wrt the logits.
struct LogitObjective {
    double value = 0.0;
    Vec dlogits;
};

/// Scalar training/attack objective evaluated on the logits: cross-entropy
/// against a target class, or a custom differentiable function supplied by
/// the caller (the attack objectives).
struct LossSpec {
    static LossSpec cross_entropy(int target);
    static LossSpec custom(std::function<LogitObjective(const Vec& logits)> fn);

    bool is_cross_entropy() const { return !fn; }

    int target = -1;
    std::function<LogitObjective(const Vec&)> fn;
};

/// Evaluates the loss at the traced logits (cross-entropy uses spec.target).
LogitObjective eval_loss(const LossSpec& spec, const Vec& logits, int k);

double cross_entropy_loss(const Mlp& m, const Vec& x, int y);

Vec grad_input(const Mlp& m, const Vec& x, const LossSpec& spec);

/// Non-owning batch sample.
struct Sample {
    const Vec* x = nullptr;
    int y = -1;
};

/// Mean parameter gradient over the batch. Cross-entropy uses each sample's
/// own label; custom objectives ignore the labels.
ParamGrad grad_params(const Mlp& m, const std::vector<Sample>& batch, const LossSpec& spec);

struct SgdState {
    ParamGrad velocity;
};

SgdState make_sgd_state(const Mlp& m);

/// v <- momentum*v + grad; params <- params - lr*v.
void sgd_step(Mlp& m, const ParamGrad& grad, double lr, double momentum, SgdState& state);

/// JSON round trip: {layers:[{w,b,act}],k,d}; value-exact for finite doubles.
std::string mlp_to_json(const Mlp& m);
Mlp mlp_from_json(const std::string& text);
void save_mlp(const Mlp& m, const std::string& path);
Mlp load_mlp(const std::string& path);

}  // namespace selrob::nn
