#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "decompl/data.hpp"
#include "decompl/model.hpp"

namespace decompl {

struct TrainConfig {
    std::size_t epochs = 120;
    std::size_t batch_size = 8;
    double base_lr = 1e-4;
    std::size_t decay_period = 30;
    double decay_factor = 2.0;
    double flip_prob = 0.5;
    std::uint64_t seed = 0;
    std::string variant = "full";
    double beta = 1.0;
    double holdout_fraction = 0.2;  // best-checkpoint selection split
    std::size_t eval_every = 10;    // epochs between holdout evaluations

    void validate() const;
};

struct EpochLog {
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss_total = 0.0, loss_individual = 0.0, loss_group = 0.0;
    double loss_side = 0.0, loss_team = 0.0;
    double gate_side = 0.0, gate_group = 0.0, gate_team = 0.0;
    double holdout_accuracy = -1.0;  // < 0 when not evaluated this epoch
};

struct TrainResult {
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
    double best_holdout_accuracy = 0.0;
};

// One uniformly sampled frame per clip per epoch, flip augmentation with
// probability flip_prob, the combined loss averaged over each batch, one
// Adam step per batch at the scheduled rate. The model is left holding the
// parameters of the best holdout epoch. Fully deterministic given the seed.
TrainResult train(const Dataset& data, Model& model, const TrainConfig& cfg);

struct EvalReport {
    double group_accuracy = 0.0;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
    std::vector<double> precision, recall;
    double side_accuracy = -1.0, team_accuracy = -1.0;    // volleyball only
    double individual_accuracy = -1.0;                    // over labeled actors
    // Fraction of clips whose (side, team) argmaxes compose to the group
    // argmax. A diagnostic only; the group head alone decides.
    double decomposition_agreement = -1.0;
    double gate_side = -1.0, gate_group = -1.0, gate_team = -1.0;
    std::size_t clip_count = 0;

    std::string to_text(const TaskConfig& task) const;
};

EvalReport evaluate(const Dataset& data, const Model& model);

struct AblationRow {
    std::string variant;
    double mean_accuracy = 0.0;
    std::vector<double> per_seed;
};

// Trains and evaluates each variant once per seed and reports mean
// held-out accuracy per variant.
std::vector<AblationRow> run_ablations(const Dataset& train_data, const Dataset& test_data,
                                       const ModelConfig& base, const TrainConfig& tcfg,
                                       const std::vector<std::string>& variants,
                                       std::size_t num_seeds = 5);

std::string ablation_table(const std::vector<AblationRow>& rows);

// ---- profiler ---------------------------------------------------------------

// Closed-form forward-pass cost model, mirroring the tensor ops the model
// executes one for one (MAC = 2 FLOPs, 1 FLOP per nonlinearity element,
// softmax 4 per element, data movement free). These formulas are checked
// against the instrumented tensor-core counter.
namespace flopmodel {

std::uint64_t attention_pool(std::size_t n, std::size_t d, std::size_t hidden);
std::uint64_t multi_head_pool(std::size_t n, std::size_t d, std::size_t hidden, std::size_t heads);
std::uint64_t baseline_pool(std::size_t n, std::size_t d, PoolKind kind);
std::uint64_t coordinate_features(std::size_t n, std::size_t channels, std::size_t ref_actors,
                                  std::size_t d);
std::uint64_t linear(std::size_t rows, std::size_t in, std::size_t out);
std::uint64_t fusion(std::size_t classes);
std::uint64_t embedding(std::size_t n, std::size_t feature_dim, std::size_t d);

// Whole forward pass for one frame with n actors, excluding the feature
// embedding (the headline figure) unless include_embedding.
std::uint64_t forward_frame(const Model& model, std::size_t n, bool include_embedding = false);

}  // namespace flopmodel

struct ProfileEntry {
    std::string component;
    std::size_t params = 0;
    std::uint64_t flops = 0;
};

struct ProfileReport {
    std::vector<ProfileEntry> breakdown;
    std::size_t params_total = 0;          // excluding the embedding layer
    std::size_t params_with_embedding = 0;
    std::uint64_t flops_frame = 0;         // per forward frame, excluding embedding
    std::uint64_t flops_clip = 0;          // times frames_per_clip (the comparable figure)
    std::size_t actors = 0;
    std::size_t frames_per_clip = 0;

    std::string to_text() const;
};

// Parameter and FLOP accounting at the given actor count, excluding the
// ingest embedding layer from the headline totals.
ProfileReport profile(const Model& model, std::size_t actors = 12, std::size_t frames_per_clip = 10);

}  // namespace decompl
