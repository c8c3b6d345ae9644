#include "selrob/nn.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace selrob::nn {

void Mlp::validate() const {
    if (layers.empty()) throw std::invalid_argument("Mlp: no layers");
    if (d == 0) throw std::invalid_argument("Mlp: input dimension must be >= 1");
    if (k < 2) throw std::invalid_argument("Mlp: class count must be >= 2");
    std::size_t cur = d;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Layer& L = layers[l];
        if (L.in != cur)
            throw std::invalid_argument("Mlp: layer " + std::to_string(l) + " input width " +
                                        std::to_string(L.in) + " does not chain with " + std::to_string(cur));
        if (L.w.size() != L.in * L.out || L.b.size() != L.out)
            throw std::invalid_argument("Mlp: layer " + std::to_string(l) + " parameter shapes inconsistent");
        if (!all_finite(L.w) || !all_finite(L.b))
            throw std::invalid_argument("Mlp: layer " + std::to_string(l) + " has non-finite parameters");
        cur = L.out;
    }
    if (cur != static_cast<std::size_t>(k))
        throw std::invalid_argument("Mlp: final layer width " + std::to_string(cur) +
                                    " != class count " + std::to_string(k));
}

Mlp make_mlp(std::size_t d, const std::vector<int>& hidden, int k, uint64_t seed) {
    Mlp m;
    m.d = d;
    m.k = k;
    Rng rng(seed);
    std::vector<std::size_t> widths;
    widths.push_back(d);
    for (int h : hidden) {
        if (h < 1) throw std::invalid_argument("make_mlp: hidden width must be >= 1");
        widths.push_back(static_cast<std::size_t>(h));
    }
    widths.push_back(static_cast<std::size_t>(k));
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        Layer L;
        L.in = widths[l];
        L.out = widths[l + 1];
        L.act = (l + 2 < widths.size()) ? Activation::relu : Activation::identity;
        double a = std::sqrt(6.0 / static_cast<double>(L.in + L.out));
        L.w.resize(L.in * L.out);
        for (double& w : L.w) w = rng.uniform(-a, a);
        L.b.assign(L.out, 0.0);
        m.layers.push_back(std::move(L));
    }
    m.validate();
    return m;
}

double log_sum_exp(const Vec& v) {
    double m = v[0];
    for (double x : v) m = std::max(m, x);
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

Vec softmax(const Vec& logits) {
    double m = logits[0];
    for (double x : logits) m = std::max(m, x);
    Vec p(logits.size());
    double s = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        s += p[i];
    }
    for (double& x : p) x /= s;
    return p;
}

static void apply_layer(const Layer& L, const Vec& in, Vec& pre, Vec& post) {
    pre.assign(L.out, 0.0);
    for (std::size_t i = 0; i < L.out; ++i) {
        double acc = L.b[i];
        const double* row = L.w.data() + i * L.in;
        for (std::size_t j = 0; j < L.in; ++j) acc += row[j] * in[j];
        pre[i] = acc;
    }
    post = pre;
    if (L.act == Activation::relu)
        for (double& v : post) v = v > 0.0 ? v : 0.0;
}

Trace forward_trace(const Mlp& m, const Vec& x) {
    if (x.size() != m.d)
        throw std::invalid_argument("forward: input has size " + std::to_string(x.size()) +
                                    ", expected " + std::to_string(m.d));
    if (!all_finite(x)) throw std::invalid_argument("forward: input has non-finite components");
    Trace t;
    t.input = x;
    t.pre.resize(m.layers.size());
    t.post.resize(m.layers.size());
    const Vec* cur = &t.input;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        apply_layer(m.layers[l], *cur, t.pre[l], t.post[l]);
        cur = &t.post[l];
    }
    return t;
}

Forward forward(const Mlp& m, const Vec& x) {
    Trace t = forward_trace(m, x);
    Forward f;
    f.logits = t.post.back();
    f.probs = softmax(f.logits);
    return f;
}

ParamGrad zeros_like(const Mlp& m) {
    ParamGrad g;
    g.layers.resize(m.layers.size());
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        g.layers[l].w.assign(m.layers[l].w.size(), 0.0);
        g.layers[l].b.assign(m.layers[l].b.size(), 0.0);
    }
    return g;
}

// Shared backward pass: delta starts as d(obj)/d(logits) and is pulled back
// layer by layer. relu subgradient at 0 is 0.
static Vec backprop(const Mlp& m, const Trace& t, const Vec& dlogits, ParamGrad* params, double scale) {
    if (dlogits.size() != static_cast<std::size_t>(m.k))
        throw std::invalid_argument("backprop: dlogits size mismatch");
    Vec delta = dlogits;
    for (std::size_t li = m.layers.size(); li-- > 0;) {
        const Layer& L = m.layers[li];
        if (L.act == Activation::relu)
            for (std::size_t i = 0; i < L.out; ++i)
                if (t.pre[li][i] <= 0.0) delta[i] = 0.0;
        const Vec& below = (li == 0) ? t.input : t.post[li - 1];
        if (params) {
            LayerGrad& lg = params->layers[li];
            for (std::size_t i = 0; i < L.out; ++i) {
                double di = scale * delta[i];
                double* wrow = lg.w.data() + i * L.in;
                for (std::size_t j = 0; j < L.in; ++j) wrow[j] += di * below[j];
                lg.b[i] += di;
            }
        }
        Vec prev(L.in, 0.0);
        for (std::size_t i = 0; i < L.out; ++i) {
            const double* row = L.w.data() + i * L.in;
            double di = delta[i];
            for (std::size_t j = 0; j < L.in; ++j) prev[j] += row[j] * di;
        }
        delta = std::move(prev);
    }
    return delta;
}

Vec backprop_input(const Mlp& m, const Trace& t, const Vec& dlogits) {
    return backprop(m, t, dlogits, nullptr, 0.0);
}

void backprop_params(const Mlp& m, const Trace& t, const Vec& dlogits, double scale, ParamGrad& out) {
    backprop(m, t, dlogits, &out, scale);
}

LossSpec LossSpec::cross_entropy(int target) {
    LossSpec s;
    s.target = target;
    return s;
}

LossSpec LossSpec::custom(std::function<LogitObjective(const Vec&)> fn) {
    LossSpec s;
    s.fn = std::move(fn);
    return s;
}

LogitObjective eval_loss(const LossSpec& spec, const Vec& logits, int k) {
    if (spec.is_cross_entropy()) {
        if (spec.target < 0 || spec.target >= k)
            throw std::invalid_argument("LossSpec: cross-entropy target out of range");
        LogitObjective o;
        o.dlogits = softmax(logits);
        o.value = log_sum_exp(logits) - logits[spec.target];  // -log p_target
        o.dlogits[spec.target] -= 1.0;
        return o;
    }
    return spec.fn(logits);
}

double cross_entropy_loss(const Mlp& m, const Vec& x, int y) {
    Trace t = forward_trace(m, x);
    return eval_loss(LossSpec::cross_entropy(y), t.logits(), m.k).value;
}

Vec grad_input(const Mlp& m, const Vec& x, const LossSpec& spec) {
    Trace t = forward_trace(m, x);
    LogitObjective o = eval_loss(spec, t.logits(), m.k);
    Vec g = backprop_input(m, t, o.dlogits);
    if (!std::isfinite(o.value) || !all_finite(g))
        throw NumericError("grad_input: non-finite intermediate");
    return g;
}

ParamGrad grad_params(const Mlp& m, const std::vector<Sample>& batch, const LossSpec& spec) {
    if (batch.empty()) throw std::invalid_argument("grad_params: empty batch");
    ParamGrad g = zeros_like(m);
    double scale = 1.0 / static_cast<double>(batch.size());
    for (const Sample& s : batch) {
        Trace t = forward_trace(m, *s.x);
        LossSpec eff = spec;
        if (spec.is_cross_entropy()) eff = LossSpec::cross_entropy(s.y);
        LogitObjective o = eval_loss(eff, t.logits(), m.k);
        if (!std::isfinite(o.value)) throw NumericError("grad_params: non-finite loss");
        backprop_params(m, t, o.dlogits, scale, g);
    }
    return g;
}

SgdState make_sgd_state(const Mlp& m) {
    return SgdState{zeros_like(m)};
}

void sgd_step(Mlp& m, const ParamGrad& grad, double lr, double momentum, SgdState& state) {
    if (!(lr > 0.0)) throw std::invalid_argument("sgd_step: lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("sgd_step: momentum must be in [0,1)");
    if (grad.layers.size() != m.layers.size()) throw std::invalid_argument("sgd_step: gradient shape mismatch");
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        Layer& L = m.layers[l];
        const LayerGrad& g = grad.layers[l];
        LayerGrad& v = state.velocity.layers[l];
        if (g.w.size() != L.w.size() || g.b.size() != L.b.size())
            throw std::invalid_argument("sgd_step: gradient shape mismatch at layer " + std::to_string(l));
        for (std::size_t i = 0; i < L.w.size(); ++i) {
            v.w[i] = momentum * v.w[i] + g.w[i];
            L.w[i] -= lr * v.w[i];
        }
        for (std::size_t i = 0; i < L.b.size(); ++i) {
            v.b[i] = momentum * v.b[i] + g.b[i];
            L.b[i] -= lr * v.b[i];
        }
    }
}

std::string mlp_to_json(const Mlp& m) {
    nlohmann::json j;
    j["d"] = m.d;
    j["k"] = m.k;
    j["layers"] = nlohmann::json::array();
    for (const Layer& L : m.layers) {
        nlohmann::json jl;
        jl["w"] = L.w;
        jl["b"] = L.b;
        jl["act"] = (L.act == Activation::relu) ? "relu" : "id";
        j["layers"].push_back(std::move(jl));
    }
    return j.dump();
}

Mlp mlp_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model json: ") + e.what());
    }
    Mlp m;
    try {
        m.d = j.at("d").get<std::size_t>();
        m.k = j.at("k").get<int>();
        std::size_t in = m.d;
        for (const auto& jl : j.at("layers")) {
            Layer L;
            L.w = jl.at("w").get<Vec>();
            L.b = jl.at("b").get<Vec>();
            std::string act = jl.at("act").get<std::string>();
            if (act == "relu") L.act = Activation::relu;
            else if (act == "id") L.act = Activation::identity;
            else throw FormatError("model json: unknown activation '" + act + "'");
            L.out = L.b.size();
            L.in = in;
            in = L.out;
            m.layers.push_back(std::move(L));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model json: ") + e.what());
    }
    m.validate();
    return m;
}

void save_mlp(const Mlp& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path);
    out << mlp_to_json(m) << '\n';
}

Mlp load_mlp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open model file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return mlp_from_json(ss.str());
}

}  // namespace selrob::nn
