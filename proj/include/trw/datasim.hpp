// datasim.hpp — synthetic originals and a simulated augmentation method.
//
// The generator's failure mode is the noise model the risk analysis
// assumes: with probability gamma a generated sample comes from an extra
// class that is not of interest. Which samples those are is recorded in
// hidden fields that only the verification side may read.
#pragma once

#include <cstdint>
#include <vector>

#include "trw/rng.hpp"
#include "trw/tensor.hpp"

namespace trw::sim {

struct SimConfig {
    std::int64_t input_dim = 16;        // D
    std::int64_t classes = 5;           // c, classes of interest
    std::int64_t n_per_class = 40;
    std::int64_t expansion = 5;         // m, generated samples per original
    double gamma = 0.3;                 // noise fraction
    double perturb_sigma = 0.5;
    double class_separation = 4.5;
    double extra_class_offset = 3.5;    // distance from the nearest class mean
    double extra_class_sigma = 3.0;     // spread of the extra cluster; wide enough to
                                        // interleave with the class clusters
    std::uint64_t seed = 1;

    void validate() const;  // throws ConfigError
};

struct LabeledSample {
    std::vector<double> features;
    std::int64_t label;  // 0-based, in [0, classes)
};

struct OriginalDataset {
    std::int64_t input_dim = 0;
    std::int64_t classes = 0;
    std::vector<LabeledSample> samples;

    std::int64_t size() const { return static_cast<std::int64_t>(samples.size()); }
};

struct GeneratedSample {
    std::vector<double> features;
    std::int64_t origin_index = 0;
    std::int64_t gen_index = 0;
    // hidden ground truth, for verification only: true class in [0, classes],
    // where `classes` itself marks the extra class
    std::int64_t hidden_true_class = 0;
    bool hidden_noisy = false;
};

struct GeneratedPool {
    std::int64_t input_dim = 0;
    std::int64_t classes = 0;
    std::int64_t expansion = 0;
    std::vector<GeneratedSample> samples;

    std::int64_t size() const { return static_cast<std::int64_t>(samples.size()); }
};

struct Triplet {
    std::int64_t anchor_pool_index;  // into GeneratedPool
    std::int64_t positive_index;     // anchor's origin, into originals
    std::int64_t negative_index;     // original of a different class
};

// Class means: mutually >= class_separation apart, deterministic, no RNG.
std::vector<std::vector<double>> class_means(const SimConfig& cfg);
// Mean of the extra (not-of-interest) cluster, extra_class_offset from its
// nearest class mean.
std::vector<double> extra_class_mean(const SimConfig& cfg);

OriginalDataset make_original(const SimConfig& cfg);
// A clean evaluation set from the same mixture, drawn from a separate stream.
OriginalDataset make_test(const SimConfig& cfg, std::int64_t n_per_class);

GeneratedPool augment(const OriginalDataset& originals, const SimConfig& cfg);

std::vector<double> perturb(const std::vector<double>& x, double sigma, StreamRng& rng);
std::vector<double> perturb(const std::vector<double>& x, double sigma, std::uint64_t seed,
                            std::uint64_t c0 = 0, std::uint64_t c1 = 0);

// One triplet per pool index in `batch`; the negative is uniform among
// originals whose label differs from the anchor's origin.
std::vector<Triplet> sample_triplets(const std::vector<std::int64_t>& batch,
                                     const GeneratedPool& pool, const OriginalDataset& originals,
                                     std::uint64_t seed, std::uint64_t iteration = 0);

// Fraction of generated samples strictly closer to their origin than to
// every other original, in raw feature space.
double measure_triplet_assumption_rate(const GeneratedPool& pool, const OriginalDataset& originals);

// Samplers for Monte-Carlo verification of the risk identities.
class MixtureSampler {
public:
    explicit MixtureSampler(const SimConfig& cfg);
    LabeledSample sample_clean(StreamRng& rng) const;            // uniform class, unit-variance cluster
    std::vector<double> sample_extra(StreamRng& rng) const;      // extra-class cluster

private:
    SimConfig cfg_;
    std::vector<std::vector<double>> means_;
    std::vector<double> extra_mean_;
};

}  // namespace trw::sim
