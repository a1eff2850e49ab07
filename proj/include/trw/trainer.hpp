// trainer.hpp — the alternating bi-level optimizer and its baselines.
//
// Per iteration: sample an original batch and a generated batch, build
// triplets, take one SGD step on the inner objective (theta), then update
// the weight net by the meta-gradient of the outer loss through that very
// step (alpha), projecting alpha back onto its ball.
//
// The graphs for fixed batch sizes are compiled once; iterations only
// rebind leaf values. SL is the same loop with an empty pool; NSL fixes
// every weight at one and trains on inherited labels.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "trw/datasim.hpp"
#include "trw/losses.hpp"
#include "trw/models.hpp"

namespace trw::train {

struct TrainerConfig {
    std::int64_t iterations = 2000;  // T
    double eta_theta = 0.05;
    double eta_alpha = 2.0;
    std::int64_t batch_original = 32;
    std::int64_t batch_generated = 64;
    loss::LossConfig loss;
    model::ModelConfig model;
    std::uint64_t seed = 1;
    double meta_split_fraction = 0.0;  // 0: outer batches drawn from the training originals
    std::int64_t eval_every = 25;
    double perturb_sigma = 0.7;  // scale of the consistency perturbation
    bool full_batch = false;     // every batch is the whole set (convergence checks)
    bool force_weight_zero = false;

    std::int64_t checkpoint_every() const { return eval_every * 10; }
    void validate() const;
};

struct MetricsRecord {
    std::int64_t t = 0;
    double l_cls = 0.0;     // inner batch loss at this iteration
    double l_weight = 0.0;  // mean clamped CE over all training originals, after the update
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double mean_weight_clean = 0.0;  // over the pool; requires an annotation
    double mean_weight_noisy = 0.0;
    bool has_weight_stats = false;
};

struct WeightRow {
    std::int64_t origin_index = 0;
    std::int64_t gen_index = 0;
    double weight = 0.0;
};

struct RunMetrics {
    double initial_l_weight = 0.0;  // L^weight(theta_0), before any update
    std::vector<MetricsRecord> records;
    std::vector<WeightRow> final_weights;  // weight-net runs only, at t = T
};

// Clean/noisy flags for metrics only. Built by callers that are allowed to
// read the pool's hidden fields; the trainer itself never touches them.
struct PoolAnnotation {
    std::vector<bool> noisy;
};

struct TrainResult {
    model::ClassifierParams theta;
    model::WeightNetParams alpha;
    RunMetrics metrics;
};

struct ResumeState {
    model::ClassifierParams theta;
    model::WeightNetParams alpha;
    std::int64_t iteration = 0;
    RunMetrics metrics_so_far;
};

struct TrainHooks {
    // called every checkpoint_every() iterations and once at t = T
    std::function<void(std::int64_t t, const model::ClassifierParams&, const model::WeightNetParams&,
                       const RunMetrics&)>
        on_checkpoint;
};

// ---- single steps (compiled once per batch-size configuration) -----------------

class BilevelStepper {
public:
    BilevelStepper(const TrainerConfig& cfg, std::int64_t n_orig, std::int64_t n_gen,
                   std::int64_t n_meta, loss::WeightMode weight_mode);

    struct Batch {
        std::vector<const std::vector<double>*> x_orig;
        std::vector<std::int64_t> y_orig;
        std::vector<const std::vector<double>*> x_anchor, x_positive, x_negative;
        std::vector<std::vector<double>> x_perturbed;
        std::vector<std::int64_t> y_strong;
        std::vector<const std::vector<double>*> x_meta;
        std::vector<std::int64_t> y_meta;
    };

    struct StepResult {
        double l_cls = 0.0;
        double l_weight_after = 0.0;  // outer loss at theta_{t+1} on the meta batch
        model::ClassifierParams theta_next;
        model::WeightNetParams alpha_next;  // projected
        std::vector<double> weights;        // per generated slot at (theta_t, alpha_t)
        std::vector<Tensor> alpha_grads;    // meta-gradient per alpha tensor (zeros when detachedless)
        double alpha_grad_norm = 0.0;       // l2 over all alpha entries
    };

    StepResult step(const model::ClassifierParams& theta, const model::WeightNetParams& alpha,
                    const Batch& batch);

    std::int64_t n_generated() const { return n_gen_; }

private:
    TrainerConfig cfg_;
    loss::WeightMode weight_mode_;
    std::int64_t n_orig_, n_gen_, n_meta_;
    std::unique_ptr<ad::CompiledGraph> graph_;
    // slots
    std::vector<int> xo_, yo_, ga_, gp_, gn_, gq_, gy_, xm_, ym_;
    std::vector<int> theta_slots_, alpha_slots_;
    // outputs: [l_cls, l_weight, theta_next..., alpha_grad..., weights...]
    std::size_t out_theta_begin_, out_alpha_grad_begin_, out_weights_begin_;
    bool has_alpha_ = false;
};

// One inner update (Eq.-13 step); the stepper retains the update graph, so a
// following outer_step can differentiate through it.
model::ClassifierParams inner_step(BilevelStepper& stepper, const model::ClassifierParams& theta,
                                   const model::WeightNetParams& alpha,
                                   const BilevelStepper::Batch& batch);
// The alpha update (Eq.-14 step) paired with the same stepper/batch.
model::WeightNetParams outer_step(BilevelStepper& stepper, const model::ClassifierParams& theta,
                                  const model::WeightNetParams& alpha,
                                  const BilevelStepper::Batch& batch);

// ---- full runs ------------------------------------------------------------------

TrainResult train_trireweight(const sim::OriginalDataset& originals, const sim::GeneratedPool& pool,
                              const sim::OriginalDataset& test_set, const TrainerConfig& cfg,
                              const PoolAnnotation* annotation = nullptr,
                              const ResumeState* resume = nullptr, const TrainHooks* hooks = nullptr);

TrainResult train_baseline_sl(const sim::OriginalDataset& originals, const sim::OriginalDataset& test_set,
                              const TrainerConfig& cfg, const TrainHooks* hooks = nullptr);

TrainResult train_baseline_nsl(const sim::OriginalDataset& originals, const sim::GeneratedPool& pool,
                               const sim::OriginalDataset& test_set, const TrainerConfig& cfg,
                               const TrainHooks* hooks = nullptr);

// ---- evaluation and ablation -------------------------------------------------------

struct EvalResult {
    double accuracy = 0.0;
    double risk = 0.0;  // mean clamped CE
};

EvalResult evaluate(const model::ClassifierParams& theta, const sim::OriginalDataset& dataset,
                    const model::ModelConfig& mcfg, double prob_floor);

struct SupervisionCombo {
    bool strong = false;
    bool pairwise = false;
    bool no_connection = false;

    std::string name() const;
};

// the seven nonempty flag combinations, in ablation-table order
std::vector<SupervisionCombo> all_supervision_combos();

struct AblationCell {
    SupervisionCombo combo;
    std::vector<double> per_seed_accuracy;
    double mean_accuracy = 0.0;
    double sd_accuracy = 0.0;
    bool failed = false;
    std::string error;
};

std::vector<AblationCell> run_ablation_matrix(const sim::OriginalDataset& originals,
                                              const sim::GeneratedPool& pool,
                                              const sim::OriginalDataset& test_set,
                                              const TrainerConfig& base_cfg,
                                              const std::vector<SupervisionCombo>& combos,
                                              const std::vector<std::uint64_t>& seeds, int jobs = 2);

// per-sample weights for the whole pool at given parameters
std::vector<WeightRow> weight_table(const model::ClassifierParams& theta,
                                    const model::WeightNetParams& alpha,
                                    const sim::OriginalDataset& originals, const sim::GeneratedPool& pool,
                                    const model::ModelConfig& mcfg);

}  // namespace trw::train
