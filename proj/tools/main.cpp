// Command-line front end: train models, calibrate and evaluate selective
// classifiers under the adaptive-attack ensemble, run the theory oracle
// suites, and plot robustness curves.
//
// Exit codes: 0 success, 1 check failure, 2 usage/config error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "selrob/attacks.hpp"
#include "selrob/data.hpp"
#include "selrob/metrics.hpp"
#include "selrob/nn.hpp"
#include "selrob/oracle.hpp"
#include "selrob/selective.hpp"
#include "selrob/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace selrob;

namespace {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename T>
T need(const json& j, const std::string& section, const std::string& field) {
    if (!j.contains(field)) throw ConfigError("config: missing field '" + section + "." + field + "'");
    try {
        return j.at(field).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: field '" + section + "." + field + "' has the wrong type");
    }
}

template <typename T>
T get_or(const json& j, const std::string& section, const std::string& field, T fallback) {
    if (!j.contains(field)) return fallback;
    try {
        return j.at(field).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: field '" + section + "." + field + "' has the wrong type");
    }
}

struct ExperimentConfig {
    // dataset
    bool from_idx = false;
    std::string images_path, labels_path;
    data::SyntheticSpec synthetic;
    // split
    double f_train = 0.7, f_val = 0.15, f_test = 0.15;
    uint64_t split_seed = 0;
    // architecture
    std::vector<int> hidden;
    // train
    std::string method = "standard";
    train::TrainConfig train_cfg;
    // selective
    selective::SelectiveKind kind = selective::SelectiveKind::none;
    double p_rej = 0.0;
    selective::CprConfig cpr_proto;
    std::vector<double> cpr_radius_grid;
    // attack
    double epsilon = 0.0, epsilon_unseen = 0.0;
    std::vector<double> alpha_grid;
    std::vector<attacks::AttackKind> inner, outer;
    attacks::PgdConfig pgd;
    double temperature = 100.0;
    // losses
    std::vector<double> step_alpha0;
    std::vector<double> ramp_t;
    // output
    std::string out_dir = "out";
};

ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid json: ") + e.what());
    }
    ExperimentConfig c;

    if (!j.contains("dataset")) throw ConfigError("config: missing field 'dataset'");
    const json& jd = j.at("dataset");
    std::string family = need<std::string>(jd, "dataset", "family");
    if (family == "idx") {
        c.from_idx = true;
        c.images_path = need<std::string>(jd, "dataset", "images");
        c.labels_path = need<std::string>(jd, "dataset", "labels");
    } else {
        c.synthetic.n = need<std::size_t>(jd, "dataset", "n");
        c.synthetic.seed = get_or<uint64_t>(jd, "dataset", "seed", 0);
        if (family == "two_gaussians") {
            c.synthetic.family = data::TwoGaussians{need<double>(jd, "dataset", "separation"),
                                                    need<double>(jd, "dataset", "sigma")};
        } else if (family == "annulus") {
            c.synthetic.family = data::Annulus{need<double>(jd, "dataset", "r_in"),
                                               need<double>(jd, "dataset", "r_out")};
        } else if (family == "tightness") {
            c.synthetic.family = data::Tightness{need<double>(jd, "dataset", "alpha"),
                                                 need<double>(jd, "dataset", "beta"),
                                                 need<double>(jd, "dataset", "epsilon")};
        } else {
            throw ConfigError("config: unknown dataset.family '" + family + "'");
        }
    }

    if (j.contains("split")) {
        const json& js = j.at("split");
        c.f_train = need<double>(js, "split", "train");
        c.f_val = need<double>(js, "split", "val");
        c.f_test = need<double>(js, "split", "test");
        c.split_seed = get_or<uint64_t>(js, "split", "seed", 0);
    }

    if (!j.contains("architecture")) throw ConfigError("config: missing field 'architecture'");
    c.hidden = need<std::vector<int>>(j.at("architecture"), "architecture", "hidden");

    if (!j.contains("train")) throw ConfigError("config: missing field 'train'");
    const json& jt = j.at("train");
    c.method = need<std::string>(jt, "train", "method");
    if (c.method != "standard" && c.method != "at" && c.method != "trades")
        throw ConfigError("config: train.method must be standard|at|trades");
    c.train_cfg.epochs = need<int>(jt, "train", "epochs");
    c.train_cfg.batch_size = get_or<int>(jt, "train", "batch_size", 32);
    c.train_cfg.lr = get_or<double>(jt, "train", "lr", 0.1);
    c.train_cfg.lr_decay_per_epoch = get_or<double>(jt, "train", "lr_decay_per_epoch", 0.95);
    c.train_cfg.momentum = get_or<double>(jt, "train", "momentum", 0.9);
    c.train_cfg.seed = get_or<uint64_t>(jt, "train", "seed", 1);
    c.train_cfg.epsilon = get_or<double>(jt, "train", "epsilon", 0.0);
    c.train_cfg.pgd_steps = get_or<int>(jt, "train", "pgd_steps", 0);
    c.train_cfg.pgd_step_size = get_or<double>(jt, "train", "pgd_step_size", 0.0);
    c.train_cfg.random_start = get_or<bool>(jt, "train", "random_start", true);
    c.train_cfg.trades_beta = get_or<double>(jt, "train", "trades_beta", 0.0);

    if (!j.contains("selective")) throw ConfigError("config: missing field 'selective'");
    const json& jsel = j.at("selective");
    std::string kind = need<std::string>(jsel, "selective", "kind");
    if (kind == "none") {
        c.kind = selective::SelectiveKind::none;
    } else if (kind == "confidence") {
        c.kind = selective::SelectiveKind::confidence;
        c.p_rej = need<double>(jsel, "selective", "p_rej");
    } else if (kind == "cpr") {
        c.kind = selective::SelectiveKind::cpr;
        c.p_rej = need<double>(jsel, "selective", "p_rej");
        c.cpr_proto.pgd_steps = need<int>(jsel, "selective", "pgd_steps");
        c.cpr_proto.pgd_step_size = need<double>(jsel, "selective", "pgd_step_size");
        c.cpr_radius_grid = need<std::vector<double>>(jsel, "selective", "radius_grid");
    } else {
        throw ConfigError("config: selective.kind must be none|confidence|cpr");
    }

    if (!j.contains("attack")) throw ConfigError("config: missing field 'attack'");
    const json& ja = j.at("attack");
    c.epsilon = need<double>(ja, "attack", "epsilon");
    c.epsilon_unseen = get_or<double>(ja, "attack", "epsilon_unseen", c.epsilon);
    if (c.epsilon_unseen < c.epsilon)
        throw ConfigError("config: attack.epsilon_unseen must be >= attack.epsilon");
    c.alpha_grid = get_or<std::vector<double>>(ja, "attack", "alpha_grid",
                                               {0.0, 0.01, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.5, 1.0});
    if (c.alpha_grid.size() < 2 || c.alpha_grid.front() != 0.0 || c.alpha_grid.back() != 1.0)
        throw ConfigError("config: attack.alpha_grid must be ascending and contain 0 and 1");
    auto inner_names = get_or<std::vector<std::string>>(ja, "attack", "inner", {"lcia", "clcia", "pdia"});
    auto outer_names = get_or<std::vector<std::string>>(ja, "attack", "outer", {"hcmoa", "chcmoa"});
    try {
        for (const auto& s : inner_names) c.inner.push_back(attacks::attack_from_name(s));
        for (const auto& s : outer_names) c.outer.push_back(attacks::attack_from_name(s));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: attack lists: ") + e.what());
    }
    c.pgd.iterations = get_or<int>(ja, "attack", "iterations", 200);
    c.pgd.momentum = get_or<double>(ja, "attack", "momentum", 0.9);
    c.pgd.restarts = get_or<int>(ja, "attack", "restarts", 5);
    c.pgd.step_sizes = get_or<std::vector<double>>(ja, "attack", "step_sizes", {});
    c.pgd.seed = get_or<uint64_t>(ja, "attack", "seed", 0);
    c.temperature = get_or<double>(ja, "attack", "temperature", 100.0);

    if (j.contains("losses")) {
        const json& jl = j.at("losses");
        c.step_alpha0 = get_or<std::vector<double>>(jl, "losses", "step_alpha0", {0.0, 0.05, 0.1});
        c.ramp_t = get_or<std::vector<double>>(jl, "losses", "ramp_t", {2.0, 4.0});
    } else {
        c.step_alpha0 = {0.0, 0.05, 0.1};
        c.ramp_t = {2.0, 4.0};
    }

    c.out_dir = get_or<std::string>(j, "config", "output", std::string("out"));
    return c;
}

data::Dataset build_dataset(const ExperimentConfig& c) {
    if (c.from_idx) return data::load_idx(c.images_path, c.labels_path);
    return data::generate(c.synthetic);
}

void apply_domain(const data::Dataset& ds, ExperimentConfig& c) {
    if (ds.image_domain) {
        Box unit{0.0, 1.0};
        c.train_cfg.domain_clip = unit;
        c.cpr_proto.domain_clip = unit;
        c.pgd.domain_clip = unit;
    }
}

int cmd_train(const std::string& config_path, const std::string& out_override, unsigned threads) {
    (void)threads;
    ExperimentConfig c = parse_config(config_path);
    if (!out_override.empty()) c.out_dir = out_override;
    fs::create_directories(c.out_dir);

    data::Dataset full = build_dataset(c);
    apply_domain(full, c);
    data::SplitResult splits = data::split(full, c.f_train, c.f_val, c.f_test, c.split_seed);

    train::TrainResult result;
    if (c.method == "standard")
        result = train::train_standard(splits.train, c.hidden, c.train_cfg);
    else if (c.method == "at")
        result = train::train_at(splits.train, c.hidden, c.train_cfg);
    else
        result = train::train_trades(splits.train, c.hidden, c.train_cfg);

    nn::save_mlp(result.model, (fs::path(c.out_dir) / "model.json").string());
    train::save_log_csv(result.log, (fs::path(c.out_dir) / "train_log.csv").string());
    std::printf("final clean accuracy: %.4f\n", train::accuracy(result.model, splits.test));
    return 0;
}

json loss_entries(const metrics::RobustnessCurve& curve, double p_rej, const ExperimentConfig& c) {
    json out = json::array();
    for (double a0 : c.step_alpha0) {
        json e;
        e["loss"] = metrics::RejectionLoss::step(a0).describe();
        e["value"] = metrics::total_robust_loss_step(curve, a0);
        out.push_back(std::move(e));
    }
    for (double t : c.ramp_t) {
        json e;
        e["loss"] = metrics::RejectionLoss::ramp(t).describe();
        e["value"] = metrics::total_robust_loss_ramp(curve, t);
        out.push_back(std::move(e));
    }
    (void)p_rej;
    return out;
}

json budget_block(const attacks::EnsembleReport& report, const ExperimentConfig& c) {
    metrics::RobustnessCurve curve = metrics::robustness_curve(report.outcomes, report.alphas, report.epsilon);
    metrics::TraditionalMetrics trad = metrics::traditional_metrics(report.outcomes);
    double p_rej = metrics::estimate_p_rej(report.outcomes);
    json b;
    b["epsilon"] = report.epsilon;
    b["p_rej"] = p_rej;
    b["robust_acc_with_detection"] = 1.0 - curve.values.front();
    b["rej_rate"] = trad.rej_rate;
    if (trad.acc_with_rej)
        b["acc_with_rej"] = *trad.acc_with_rej;
    else
        b["acc_with_rej"] = nullptr;
    if (trad.f1_like)
        b["f1_like"] = *trad.f1_like;
    else
        b["f1_like"] = nullptr;
    b["total_robust_loss"] = loss_entries(curve, p_rej, c);
    return b;
}

int cmd_evaluate(const std::string& config_path, const std::string& model_path,
                 const std::string& out_override, unsigned threads) {
    ExperimentConfig c = parse_config(config_path);
    if (!out_override.empty()) c.out_dir = out_override;
    fs::create_directories(c.out_dir);

    nn::Mlp model = nn::load_mlp(model_path);
    data::Dataset full = build_dataset(c);
    apply_domain(full, c);
    if (model.d != full.d || model.k != full.k)
        throw ConfigError("config: model shape (d=" + std::to_string(model.d) + ",k=" +
                          std::to_string(model.k) + ") does not match the dataset");
    data::SplitResult splits = data::split(full, c.f_train, c.f_val, c.f_test, c.split_seed);

    selective::SelectiveClassifier cls;
    cls.model = &model;
    cls.kind = c.kind;
    json calibration;
    if (c.kind == selective::SelectiveKind::confidence) {
        auto cal = selective::calibrate_confidence(model, splits.val, c.p_rej);
        cls.confidence = cal.config;
        calibration["kind"] = "confidence";
        calibration["threshold"] = cal.config.threshold;
        calibration["target_p_rej"] = c.p_rej;
        calibration["achieved_rate"] = cal.achieved_rate;
    } else if (c.kind == selective::SelectiveKind::cpr) {
        auto cal = selective::calibrate_cpr(model, splits.val, c.p_rej, c.cpr_proto, c.cpr_radius_grid);
        cls.cpr = cal.config;
        calibration["kind"] = "cpr";
        calibration["consistency_radius"] = cal.config.consistency_radius;
        calibration["pgd_steps"] = cal.config.pgd_steps;
        calibration["pgd_step_size"] = cal.config.pgd_step_size;
        calibration["target_p_rej"] = c.p_rej;
        calibration["achieved_rate"] = cal.achieved_rate;
    } else {
        calibration["kind"] = "none";
    }

    attacks::EnsembleConfig ecfg;
    ecfg.pgd = c.pgd;
    ecfg.temperature = c.temperature;
    ecfg.threads = threads;

    attacks::EnsembleReport seen =
        attacks::ensemble_evaluate(cls, splits.test, c.epsilon, c.alpha_grid, c.inner, c.outer, ecfg);
    attacks::EnsembleReport unseen =
        attacks::ensemble_evaluate(cls, splits.test, c.epsilon_unseen, c.alpha_grid, c.inner, c.outer, ecfg);

    fs::path out(c.out_dir);
    attacks::save_outcomes_csv(seen, (out / "outcomes.csv").string());
    metrics::RobustnessCurve curve_seen = metrics::robustness_curve(seen.outcomes, seen.alphas, seen.epsilon);
    metrics::RobustnessCurve curve_unseen =
        metrics::robustness_curve(unseen.outcomes, unseen.alphas, unseen.epsilon);
    metrics::save_curve_csv(curve_seen, (out / "curve_seen.csv").string());
    metrics::save_curve_csv(curve_unseen, (out / "curve_unseen.csv").string());

    json m;
    m["calibration"] = calibration;
    m["seen"] = budget_block(seen, c);
    m["unseen"] = budget_block(unseen, c);
    std::ofstream mf(out / "metrics.json", std::ios::binary);
    mf << m.dump(2) << '\n';

    std::printf("seen:   robust acc with detection = %.4f\n",
                m["seen"]["robust_acc_with_detection"].get<double>());
    std::printf("unseen: robust acc with detection = %.4f\n",
                m["unseen"]["robust_acc_with_detection"].get<double>());
    return 0;
}

int cmd_oracle(const std::string& suite, const std::string& out_dir, bool break_tolerances,
               unsigned threads) {
    oracle::OracleOptions opt;
    opt.threads = threads;
    if (break_tolerances) opt.tolerance_scale = 0.0;
    std::vector<oracle::OracleCheck> checks;
    try {
        checks = oracle::run_suite(suite, opt);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream f(fs::path(out_dir) / "oracle.json", std::ios::binary);
        f << oracle::report_json(checks) << '\n';
    }
    bool all_pass = true;
    for (const auto& c : checks) {
        std::printf("[%s] %s: empirical=%.6g theoretical=%.6g tol=%.3g\n", c.pass ? "PASS" : "FAIL",
                    c.name.c_str(), c.empirical, c.theoretical, c.tolerance);
        all_pass = all_pass && c.pass;
    }
    return all_pass ? 0 : 1;
}

struct PlotCurve {
    std::string label;
    metrics::RobustnessCurve curve;
};

int cmd_plot(const std::vector<std::string>& files, const std::string& out_dir) {
    std::vector<PlotCurve> curves;
    for (const auto& f : files)
        curves.push_back({fs::path(f).filename().string(), metrics::load_curve_csv(f)});

    const double W = 640, H = 480, ML = 60, MR = 150, MT = 20, MB = 50;
    const double PW = W - ML - MR, PH = H - MT - MB;
    auto X = [&](double a) { return ML + a * PW; };
    auto Y = [&](double acc) { return MT + (1.0 - acc) * PH; };
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    svg << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    // axes and ticks
    svg << "<line x1=\"" << ML << "\" y1=\"" << MT + PH << "\" x2=\"" << ML + PW << "\" y2=\"" << MT + PH
        << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << ML << "\" y1=\"" << MT << "\" x2=\"" << ML << "\" y2=\"" << MT + PH
        << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        double v = i / 4.0;
        svg << "<text x=\"" << X(v) << "\" y=\"" << MT + PH + 18
            << "\" font-size=\"11\" text-anchor=\"middle\">" << v << "</text>\n";
        svg << "<text x=\"" << ML - 8 << "\" y=\"" << Y(v) + 4
            << "\" font-size=\"11\" text-anchor=\"end\">" << v << "</text>\n";
        svg << "<line x1=\"" << X(v) << "\" y1=\"" << MT + PH << "\" x2=\"" << X(v) << "\" y2=\""
            << MT + PH + 4 << "\" stroke=\"black\"/>\n";
        svg << "<line x1=\"" << ML - 4 << "\" y1=\"" << Y(v) << "\" x2=\"" << ML << "\" y2=\"" << Y(v)
            << "\" stroke=\"black\"/>\n";
    }
    svg << "<text x=\"" << ML + PW / 2 << "\" y=\"" << H - 12
        << "\" font-size=\"13\" text-anchor=\"middle\">alpha</text>\n";
    svg << "<text x=\"16\" y=\"" << MT + PH / 2
        << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << MT + PH / 2
        << ")\">robust accuracy with rejection</text>\n";

    for (std::size_t ci = 0; ci < curves.size(); ++ci) {
        const auto& pc = curves[ci];
        const char* color = palette[ci % 6];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.6\" points=\"";
        for (std::size_t i = 0; i < pc.curve.alphas.size(); ++i)
            svg << X(pc.curve.alphas[i]) << ',' << Y(1.0 - pc.curve.values[i]) << ' ';
        svg << "\"/>\n";
        double ly = MT + 16 + 18 * static_cast<double>(ci);
        svg << "<line x1=\"" << ML + PW + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << ML + PW + 34
            << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"1.6\"/>\n";
        svg << "<text x=\"" << ML + PW + 40 << "\" y=\"" << ly
            << "\" font-size=\"11\">" << pc.label << "</text>\n";
    }
    svg << "</svg>\n";

    fs::create_directories(out_dir);
    std::ofstream f(fs::path(out_dir) / "curves.svg", std::ios::binary);
    if (!f) throw FormatError("cannot open curves.svg for writing");
    f << svg.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"selective robustness toolkit"};
    app.require_subcommand(1);
    unsigned threads = 0;
    app.add_option("--threads", threads, "worker threads (0 = hardware)");

    std::string config_path, model_path, out_dir, suite = "all";
    bool break_tolerances = false;
    std::vector<std::string> plot_files;

    CLI::App* sub_train = app.add_subcommand("train", "train a base model from a config");
    sub_train->add_option("--config", config_path, "experiment config json")->required();
    sub_train->add_option("--out", out_dir, "output directory (overrides config)");

    CLI::App* sub_eval = app.add_subcommand("evaluate", "attack and score a trained model");
    sub_eval->add_option("--config", config_path, "experiment config json")->required();
    sub_eval->add_option("--model", model_path, "model json produced by train")->required();
    sub_eval->add_option("--out", out_dir, "output directory (overrides config)");

    CLI::App* sub_oracle = app.add_subcommand("oracle", "run a theory-check suite");
    sub_oracle->add_option("--suite", suite, "lemma1|theorem1|theorem2|tightness|all");
    sub_oracle->add_option("--out", out_dir, "directory for oracle.json");
    sub_oracle->add_flag("--break-tolerances", break_tolerances)->group("");  // test hook

    CLI::App* sub_plot = app.add_subcommand("plot", "overlay robustness curves as SVG");
    sub_plot->add_option("--out", out_dir, "output directory")->required();
    sub_plot->add_option("files", plot_files, "curve csv files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sub_train->parsed()) return cmd_train(config_path, out_dir, threads);
        if (sub_eval->parsed()) return cmd_evaluate(config_path, model_path, out_dir, threads);
        if (sub_oracle->parsed()) return cmd_oracle(suite, out_dir, break_tolerances, threads);
        if (sub_plot->parsed()) return cmd_plot(plot_files, out_dir);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
