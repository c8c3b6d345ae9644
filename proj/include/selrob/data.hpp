#pragma once

#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "selrob/common.hpp"

namespace selrob::data {

/// Labeled points plus optional analytic geometry. margin, when present, is
/// the signed l-inf distance of x to the true decision boundary (>= 0 maps
/// to class 1); the theory-side oracles build their exact adversaries from
/// it. Immutable after construction.
struct Dataset {
    std::vector<Vec> xs;
    std::vector<int> ys;
    std::size_t d = 0;
    int k = 0;
    bool image_domain = false;  // pixels in [0,1]; enables domain clipping
    std::function<double(const Vec&)> margin;

    std::size_t size() const { return xs.size(); }
    void validate() const;
};

/// Two isotropic Gaussian blobs in 2-D at (-separation/2, 0) and
/// (+separation/2, 0); the true boundary is the vertical axis.
struct TwoGaussians {
    double separation = 4.0;
    double sigma = 1.0;
};

/// 2-D inner disk (class 0, radius <= r_in) and outer ring (class 1, radii
/// in [r_out, 2*r_out - r_in]); the gap (r_in, r_out) is empty.
struct Annulus {
    double r_in = 1.0;
    double r_out = 2.0;
};

/// 1-D four-atom distribution: (-4e, -) w.p. (1-beta)/2, (-ae/4, -) w.p.
/// beta/2, (+ae/4, +) w.p. beta/2, (+4e, +) w.p. (1-beta)/2.
struct Tightness {
    double alpha = 0.5;
    double beta = 0.4;
    double epsilon = 0.3;
};

struct SyntheticSpec {
    std::variant<TwoGaussians, Annulus, Tightness> family;
    std::size_t n = 0;
    uint64_t seed = 0;
};

/// Pure function of the spec (seed included).
Dataset generate(const SyntheticSpec& spec);

/// MNIST-layout IDX pair (big-endian, magics 0x803/0x801); pixels scaled to
/// [0,1]. Malformed input raises FormatError naming the offending field.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Writes an IDX pair (pixels quantized back to bytes); rows x cols must
/// factor d. Mainly for round-trip tests.
void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path,
              std::size_t rows, std::size_t cols);

struct SplitResult {
    Dataset train;
    Dataset val;
    Dataset test;
};

/// Disjoint seeded split; fractions must be positive and sum to 1 (1e-9).
SplitResult split(const Dataset& ds, double f_train, double f_val, double f_test, uint64_t seed);

/// CSV with header x0..x{d-1},y.
void save_csv(const Dataset& ds, const std::string& path);

}  // namespace selrob::data
