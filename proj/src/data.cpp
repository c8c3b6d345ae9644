#include "selrob/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace selrob::data {

void Dataset::validate() const {
    if (xs.empty()) throw std::invalid_argument("Dataset: empty");
    if (xs.size() != ys.size()) throw std::invalid_argument("Dataset: xs/ys size mismatch");
    if (k < 2) throw std::invalid_argument("Dataset: class count must be >= 2");
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].size() != d) throw std::invalid_argument("Dataset: point dimension mismatch");
        if (!all_finite(xs[i])) throw std::invalid_argument("Dataset: non-finite coordinates");
        if (ys[i] < 0 || ys[i] >= k) throw std::invalid_argument("Dataset: label out of range");
    }
}

static Dataset generate_family(const TwoGaussians& g, std::size_t n, uint64_t seed) {
    if (!(g.separation > 0.0) || !(g.sigma > 0.0))
        throw std::invalid_argument("two_gaussians: separation and sigma must be positive");
    Dataset ds;
    ds.d = 2;
    ds.k = 2;
    Rng rng(seed);
    double half = g.separation / 2.0;
    for (std::size_t i = 0; i < n; ++i) {
        int y = rng.uniform() < 0.5 ? 0 : 1;
        double cx = y == 0 ? -half : half;
        ds.xs.push_back({cx + g.sigma * rng.normal(), g.sigma * rng.normal()});
        ds.ys.push_back(y);
    }
    // Bayes boundary is x0 = 0; l-inf distance to it is |x0|.
    ds.margin = [](const Vec& x) { return x[0]; };
    return ds;
}

static Dataset generate_family(const Annulus& a, std::size_t n, uint64_t seed) {
    if (!(a.r_in > 0.0) || !(a.r_out > a.r_in))
        throw std::invalid_argument("annulus: need 0 < r_in < r_out");
    Dataset ds;
    ds.d = 2;
    ds.k = 2;
    Rng rng(seed);
    double ring_hi = 2.0 * a.r_out - a.r_in;
    for (std::size_t i = 0; i < n; ++i) {
        int y = rng.uniform() < 0.5 ? 0 : 1;
        double r;
        if (y == 0) {
            r = a.r_in * std::sqrt(rng.uniform());  // uniform over the disk
        } else {
            double lo2 = a.r_out * a.r_out, hi2 = ring_hi * ring_hi;
            r = std::sqrt(lo2 + (hi2 - lo2) * rng.uniform());
        }
        double theta = rng.uniform(0.0, 2.0 * kPi);
        ds.xs.push_back({r * std::cos(theta), r * std::sin(theta)});
        ds.ys.push_back(y);
    }
    return ds;  // no analytic l-inf margin for a circular boundary
}

static Dataset generate_family(const Tightness& t, std::size_t n, uint64_t seed) {
    if (!(t.alpha >= 0.0 && t.alpha <= 1.0)) throw std::invalid_argument("tightness: alpha must be in [0,1]");
    if (!(t.beta > 0.0 && t.beta < 0.5)) throw std::invalid_argument("tightness: beta must be in (0,0.5)");
    if (!(t.epsilon > 0.0)) throw std::invalid_argument("tightness: epsilon must be positive");
    Dataset ds;
    ds.d = 1;
    ds.k = 2;
    Rng rng(seed);
    double far_x = 4.0 * t.epsilon;
    double near_x = t.alpha * t.epsilon / 4.0;
    for (std::size_t i = 0; i < n; ++i) {
        double u = rng.uniform();
        double x;
        int y;
        if (u < (1.0 - t.beta) / 2.0) {
            x = -far_x; y = 0;
        } else if (u < 0.5) {
            x = -near_x; y = 0;
        } else if (u < 0.5 + t.beta / 2.0) {
            x = near_x; y = 1;
        } else {
            x = far_x; y = 1;
        }
        ds.xs.push_back({x});
        ds.ys.push_back(y);
    }
    ds.margin = [](const Vec& x) { return x[0]; };
    return ds;
}

Dataset generate(const SyntheticSpec& spec) {
    if (spec.n < 1) throw std::invalid_argument("generate: n must be >= 1");
    Dataset ds = std::visit(
        [&](const auto& fam) { return generate_family(fam, spec.n, spec.seed); },
        spec.family);
    ds.validate();
    return ds;
}

static uint32_t read_be32(std::istream& in, const char* field) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError(std::string("idx: truncated while reading ") + field);
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw FormatError("idx: cannot open images file: " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw FormatError("idx: cannot open labels file: " + labels_path);

    uint32_t img_magic = read_be32(img, "images magic");
    if (img_magic != 0x00000803u)
        throw FormatError("idx: images magic is " + std::to_string(img_magic) + ", expected 2051");
    uint32_t n_img = read_be32(img, "images count");
    uint32_t rows = read_be32(img, "images rows");
    uint32_t cols = read_be32(img, "images cols");

    uint32_t lab_magic = read_be32(lab, "labels magic");
    if (lab_magic != 0x00000801u)
        throw FormatError("idx: labels magic is " + std::to_string(lab_magic) + ", expected 2049");
    uint32_t n_lab = read_be32(lab, "labels count");

    if (n_img != n_lab)
        throw FormatError("idx: image count " + std::to_string(n_img) + " != label count " + std::to_string(n_lab));
    if (n_img == 0) throw FormatError("idx: images count is zero");

    std::size_t dim = std::size_t(rows) * cols;
    Dataset ds;
    ds.d = dim;
    ds.k = 10;
    ds.image_domain = true;
    std::vector<unsigned char> buf(dim);
    for (uint32_t i = 0; i < n_img; ++i) {
        img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(dim));
        if (!img) throw FormatError("idx: truncated while reading images pixel data");
        Vec x(dim);
        for (std::size_t j = 0; j < dim; ++j) x[j] = buf[j] / 255.0;
        char yb;
        lab.read(&yb, 1);
        if (!lab) throw FormatError("idx: truncated while reading labels data");
        int y = static_cast<unsigned char>(yb);
        if (y > 9) throw FormatError("idx: label value " + std::to_string(y) + " out of range");
        ds.xs.push_back(std::move(x));
        ds.ys.push_back(y);
    }
    ds.validate();
    return ds;
}

static void write_be32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path,
              std::size_t rows, std::size_t cols) {
    if (rows * cols != ds.d) throw std::invalid_argument("save_idx: rows*cols must equal d");
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw FormatError("idx: cannot open for writing: " + images_path);
    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw FormatError("idx: cannot open for writing: " + labels_path);
    write_be32(img, 0x00000803u);
    write_be32(img, static_cast<uint32_t>(ds.size()));
    write_be32(img, static_cast<uint32_t>(rows));
    write_be32(img, static_cast<uint32_t>(cols));
    write_be32(lab, 0x00000801u);
    write_be32(lab, static_cast<uint32_t>(ds.size()));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : ds.xs[i]) {
            double q = std::round(clamp(v, 0.0, 1.0) * 255.0);
            unsigned char b = static_cast<unsigned char>(q);
            img.write(reinterpret_cast<const char*>(&b), 1);
        }
        unsigned char y = static_cast<unsigned char>(ds.ys[i]);
        lab.write(reinterpret_cast<const char*>(&y), 1);
    }
}

static Dataset take(const Dataset& ds, const std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi) {
    Dataset out;
    out.d = ds.d;
    out.k = ds.k;
    out.image_domain = ds.image_domain;
    out.margin = ds.margin;
    for (std::size_t i = lo; i < hi; ++i) {
        out.xs.push_back(ds.xs[idx[i]]);
        out.ys.push_back(ds.ys[idx[i]]);
    }
    return out;
}

SplitResult split(const Dataset& ds, double f_train, double f_val, double f_test, uint64_t seed) {
    if (!(f_train > 0.0 && f_val > 0.0 && f_test > 0.0))
        throw std::invalid_argument("split: fractions must be positive");
    if (std::abs(f_train + f_val + f_test - 1.0) > 1e-9)
        throw std::invalid_argument("split: fractions must sum to 1");
    std::size_t n = ds.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(seed);
    rng.shuffle(idx);
    auto n_train = static_cast<std::size_t>(std::llround(f_train * static_cast<double>(n)));
    auto n_val = static_cast<std::size_t>(std::llround(f_val * static_cast<double>(n)));
    n_train = std::min(n_train, n);
    n_val = std::min(n_val, n - n_train);
    SplitResult r;
    r.train = take(ds, idx, 0, n_train);
    r.val = take(ds, idx, n_train, n_train + n_val);
    r.test = take(ds, idx, n_train + n_val, n);
    return r;
}

void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path);
    for (std::size_t j = 0; j < ds.d; ++j) out << 'x' << j << ',';
    out << "y\n";
    char buf[40];
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < ds.d; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", ds.xs[i][j]);
            out << buf << ',';
        }
        out << ds.ys[i] << '\n';
    }
}

}  // namespace selrob::data
