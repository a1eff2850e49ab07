// datasim.cpp
#include "trw/datasim.hpp"

#include <cmath>

#include "trw/errors.hpp"

namespace trw::sim {

void SimConfig::validate() const {
    if (input_dim < 2) throw ConfigError("input_dim must be >= 2");
    if (classes < 2) throw ConfigError("classes must be >= 2");
    if (n_per_class < 1) throw ConfigError("n_per_class must be >= 1");
    if (expansion < 1) throw ConfigError("expansion must be >= 1");
    // 0 and 1 are accepted as degenerate cases
    if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must lie in [0, 1]");
    if (perturb_sigma < 0.0) throw ConfigError("perturb_sigma must be >= 0");
    if (class_separation <= 0.0) throw ConfigError("class_separation must be > 0");
    if (extra_class_sigma <= 0.0) throw ConfigError("extra_class_sigma must be > 0");
}

std::vector<std::vector<double>> class_means(const SimConfig& cfg) {
    const std::int64_t d = cfg.input_dim;
    const std::int64_t c = cfg.classes;
    std::vector<std::vector<double>> means(static_cast<std::size_t>(c),
                                           std::vector<double>(static_cast<std::size_t>(d), 0.0));
    if (c <= d) {
        // scaled axes: pairwise distance is exactly class_separation
        const double s = cfg.class_separation / std::sqrt(2.0);
        for (std::int64_t k = 0; k < c; ++k) means[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)] = s;
    } else {
        // circle in the first two dimensions
        const double pi = 3.14159265358979323846;
        const double r = cfg.class_separation / (2.0 * std::sin(pi / static_cast<double>(c)));
        for (std::int64_t k = 0; k < c; ++k) {
            double angle = 2.0 * pi * static_cast<double>(k) / static_cast<double>(c);
            means[static_cast<std::size_t>(k)][0] = r * std::cos(angle);
            means[static_cast<std::size_t>(k)][1] = r * std::sin(angle);
        }
    }
    return means;
}

std::vector<double> extra_class_mean(const SimConfig& cfg) {
    auto means = class_means(cfg);
    std::vector<double> extra = means[0];
    if (cfg.classes < cfg.input_dim) {
        // unused axis: distance to means[0] is exactly extra_class_offset,
        // and means[0] is the nearest class mean
        extra[static_cast<std::size_t>(cfg.classes)] += cfg.extra_class_offset;
        return extra;
    }
    // point away from the centroid of the class means
    std::vector<double> centroid(extra.size(), 0.0);
    for (const auto& m : means)
        for (std::size_t i = 0; i < m.size(); ++i) centroid[i] += m[i] / static_cast<double>(means.size());
    std::vector<double> dir(extra.size());
    double norm = 0.0;
    for (std::size_t i = 0; i < dir.size(); ++i) {
        dir[i] = means[0][i] - centroid[i];
        norm += dir[i] * dir[i];
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) {
        dir.assign(dir.size(), 0.0);
        dir[0] = 1.0;
        norm = 1.0;
    }
    for (std::size_t i = 0; i < dir.size(); ++i) extra[i] += cfg.extra_class_offset * dir[i] / norm;
    return extra;
}

namespace {

OriginalDataset draw_dataset(const SimConfig& cfg, Stream stream, std::int64_t n_per_class) {
    OriginalDataset out;
    out.input_dim = cfg.input_dim;
    out.classes = cfg.classes;
    auto means = class_means(cfg);
    out.samples.reserve(static_cast<std::size_t>(cfg.classes * n_per_class));
    for (std::int64_t k = 0; k < cfg.classes; ++k) {
        for (std::int64_t i = 0; i < n_per_class; ++i) {
            StreamRng rng(cfg.seed, stream, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i));
            LabeledSample s;
            s.label = k;
            s.features.resize(static_cast<std::size_t>(cfg.input_dim));
            for (std::size_t d = 0; d < s.features.size(); ++d)
                s.features[d] = means[static_cast<std::size_t>(k)][d] + rng.next_normal();
            out.samples.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace

OriginalDataset make_original(const SimConfig& cfg) {
    cfg.validate();
    return draw_dataset(cfg, Stream::kOriginalData, cfg.n_per_class);
}

OriginalDataset make_test(const SimConfig& cfg, std::int64_t n_per_class) {
    cfg.validate();
    return draw_dataset(cfg, Stream::kTestData, n_per_class);
}

GeneratedPool augment(const OriginalDataset& originals, const SimConfig& cfg) {
    cfg.validate();
    if (originals.samples.empty()) throw ConfigError("augment: empty original dataset");
    GeneratedPool pool;
    pool.input_dim = originals.input_dim;
    pool.classes = originals.classes;
    pool.expansion = cfg.expansion;
    pool.samples.reserve(static_cast<std::size_t>(originals.size() * cfg.expansion));
    const auto extra_mean = extra_class_mean(cfg);
    for (std::int64_t i = 0; i < originals.size(); ++i) {
        const auto& origin = originals.samples[static_cast<std::size_t>(i)];
        for (std::int64_t j = 0; j < cfg.expansion; ++j) {
            StreamRng rng(cfg.seed, Stream::kAugment, static_cast<std::uint64_t>(i),
                          static_cast<std::uint64_t>(j));
            GeneratedSample g;
            g.origin_index = i;
            g.gen_index = j;
            g.features.resize(static_cast<std::size_t>(pool.input_dim));
            const bool noisy = rng.next_unit() < cfg.gamma;
            if (noisy) {
                for (std::size_t d = 0; d < g.features.size(); ++d)
                    g.features[d] = extra_mean[d] + cfg.extra_class_sigma * rng.next_normal();
                g.hidden_true_class = pool.classes;  // the extra class
                g.hidden_noisy = true;
            } else {
                for (std::size_t d = 0; d < g.features.size(); ++d)
                    g.features[d] = origin.features[d] + cfg.perturb_sigma * rng.next_normal();
                g.hidden_true_class = origin.label;
                g.hidden_noisy = false;
            }
            pool.samples.push_back(std::move(g));
        }
    }
    return pool;
}

std::vector<double> perturb(const std::vector<double>& x, double sigma, StreamRng& rng) {
    if (sigma < 0.0) throw ConfigError("perturb: sigma must be >= 0");
    if (sigma == 0.0) return x;
    std::vector<double> out(x.size());
    for (std::size_t d = 0; d < x.size(); ++d) out[d] = x[d] + sigma * rng.next_normal();
    return out;
}

std::vector<double> perturb(const std::vector<double>& x, double sigma, std::uint64_t seed,
                            std::uint64_t c0, std::uint64_t c1) {
    StreamRng rng(seed, Stream::kPerturb, c0, c1);
    return perturb(x, sigma, rng);
}

std::vector<Triplet> sample_triplets(const std::vector<std::int64_t>& batch,
                                     const GeneratedPool& pool, const OriginalDataset& originals,
                                     std::uint64_t seed, std::uint64_t iteration) {
    // per-label index lists, to draw negatives uniformly from the complement
    std::vector<std::vector<std::int64_t>> by_label(static_cast<std::size_t>(originals.classes));
    for (std::int64_t i = 0; i < originals.size(); ++i)
        by_label[static_cast<std::size_t>(originals.samples[static_cast<std::size_t>(i)].label)].push_back(i);
    std::int64_t nonempty = 0;
    for (const auto& v : by_label) nonempty += v.empty() ? 0 : 1;
    if (nonempty < 2)
        throw InsufficientClassesError("sample_triplets: need originals from at least 2 classes");

    std::vector<Triplet> out;
    out.reserve(batch.size());
    for (std::size_t slot = 0; slot < batch.size(); ++slot) {
        const auto& anchor = pool.samples[static_cast<std::size_t>(batch[slot])];
        const std::int64_t origin = anchor.origin_index;
        const std::int64_t origin_label = originals.samples[static_cast<std::size_t>(origin)].label;
        const std::int64_t same = static_cast<std::int64_t>(by_label[static_cast<std::size_t>(origin_label)].size());
        const std::int64_t eligible = originals.size() - same;
        StreamRng rng(seed, Stream::kTriplet, iteration, static_cast<std::uint64_t>(slot));
        std::int64_t pick = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(eligible)));
        // walk the labels, skipping the anchor's class
        std::int64_t negative = -1;
        for (std::size_t lbl = 0; lbl < by_label.size(); ++lbl) {
            if (static_cast<std::int64_t>(lbl) == origin_label) continue;
            const auto& v = by_label[lbl];
            if (pick < static_cast<std::int64_t>(v.size())) {
                negative = v[static_cast<std::size_t>(pick)];
                break;
            }
            pick -= static_cast<std::int64_t>(v.size());
        }
        out.push_back({batch[slot], origin, negative});
    }
    return out;
}

double measure_triplet_assumption_rate(const GeneratedPool& pool, const OriginalDataset& originals) {
    if (pool.samples.empty()) throw ConfigError("measure_triplet_assumption_rate: empty pool");
    std::int64_t satisfied = 0;
    for (const auto& g : pool.samples) {
        const double d_origin =
            squared_distance(g.features, originals.samples[static_cast<std::size_t>(g.origin_index)].features);
        bool ok = true;
        for (std::int64_t j = 0; j < originals.size(); ++j) {
            if (j == g.origin_index) continue;
            if (squared_distance(g.features, originals.samples[static_cast<std::size_t>(j)].features) <= d_origin) {
                ok = false;
                break;
            }
        }
        satisfied += ok ? 1 : 0;
    }
    return static_cast<double>(satisfied) / static_cast<double>(pool.size());
}

MixtureSampler::MixtureSampler(const SimConfig& cfg)
    : cfg_(cfg), means_(class_means(cfg)), extra_mean_(extra_class_mean(cfg)) {
    cfg.validate();
}

LabeledSample MixtureSampler::sample_clean(StreamRng& rng) const {
    LabeledSample s;
    s.label = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(cfg_.classes)));
    s.features.resize(static_cast<std::size_t>(cfg_.input_dim));
    const auto& m = means_[static_cast<std::size_t>(s.label)];
    for (std::size_t d = 0; d < s.features.size(); ++d) s.features[d] = m[d] + rng.next_normal();
    return s;
}

std::vector<double> MixtureSampler::sample_extra(StreamRng& rng) const {
    std::vector<double> x(static_cast<std::size_t>(cfg_.input_dim));
    for (std::size_t d = 0; d < x.size(); ++d)
        x[d] = extra_mean_[d] + cfg_.extra_class_sigma * rng.next_normal();
    return x;
}

}  // namespace trw::sim
