#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "decompl/attention.hpp"
#include "decompl/coordinate.hpp"
#include "decompl/data.hpp"
#include "decompl/task.hpp"
#include "decompl/tensor.hpp"

namespace decompl {

// Which branch feeds the task logits.
enum class FusionRoute { fused, visual_only, coordinate_only };

struct ModelConfig {
    std::size_t feature_dim = 128;       // F, ingested feature width
    std::size_t embed_dim = 128;         // D
    std::size_t attn_hidden = 512;       // L
    std::size_t visual_heads = 2;        // H (visual branch)
    std::size_t relation_channels = 8;   // C (coordinate module)
    std::size_t ref_actors = 12;         // coordinate embedding reference N
    PoolKind pool = PoolKind::attention;
    FusionRoute route = FusionRoute::fused;
    double beta = 1.0;                   // auxiliary loss weight
    bool share_team_pool = false;
    bool strict_actor_count = true;      // volleyball: reject N != fixed_actors
};

// Named substitutions used by the ablation study: "full",
// "only-coordinate", "no-coordinate", "no-aux-losses", "max-pool",
// "mean-pool", "heads(H)". ConfigError on anything else.
ModelConfig ablation_variant(ModelConfig base, const std::string& variant);

struct LinearHead {
    Tensor weight;  // [out x in]
    Tensor bias;    // [out]

    static LinearHead init(std::size_t in, std::size_t out, Rng& rng);
    bool defined() const { return weight.defined(); }
};

struct FramePrediction {
    Tensor group_logits;  // routed/fused
    Tensor side_logits;   // volleyball only
    Tensor team_logits;   // volleyball only
    // Branch logits kept for diagnostics and ablation checks; undefined
    // when the route skips a branch.
    Tensor visual_group_logits, visual_side_logits, visual_team_logits;
    Tensor coord_group_logits, coord_side_logits, coord_team_logits;
    Tensor individual_logits;  // [N x |individual|], original actor order
    std::vector<std::size_t> sort_order;
};

struct FrameLabels {
    std::size_t group = 0;
    std::vector<int> actions;  // -1 entries are masked out
};

struct LossBreakdown {
    Tensor total;
    double individual = 0.0;
    double group = 0.0;
    double side = 0.0;
    double team = 0.0;
};

struct ClipPrediction {
    std::size_t group = 0;
    std::vector<double> group_probs;
    std::size_t side = 0, team = 0;
    std::vector<double> side_probs, team_probs;
};

// The full two-branch head: feature embedding, team-split multi-head
// attention pooling, coordinate branch, per-task classifier pairs,
// sigmoid-gated fusion scalars and the per-actor action head.
class Model {
public:
    static Model init(TaskConfig task, ModelConfig cfg, std::uint64_t seed);

    const TaskConfig& task() const { return task_; }
    const ModelConfig& config() const { return cfg_; }

    // Mutable handles in a fixed order; backbone of the optimizer,
    // checkpointing and the profiler.
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::vector<Tensor> parameters() const;
    std::size_t parameter_count(bool include_embedding = true) const;
    void zero_grad();

    FramePrediction forward_frame(const BoxList& boxes, const Tensor& features) const;
    FramePrediction forward_frame(const FrameRecord& frame) const;

    LossBreakdown total_loss(const FramePrediction& pred, const FrameLabels& labels) const;

    ClipPrediction predict_clip(const ClipRecord& clip) const;

    // Current fusion gate values sigma(lambda); {side, group, team}.
    double gate_side() const;
    double gate_group() const;
    double gate_team() const;

    void save(const std::string& path) const;
    static Model load(const std::string& path);

    // Parameter groups, exposed for the forward pass and the profiler.
    LinearHead embedding;
    std::vector<MultiHeadPoolParams> visual_pools;  // volleyball: {left, right} or {shared}; generic: {main}
    CoordinateModuleParams coord;
    AttentionPoolParams coord_pool;
    LinearHead vis_side, vis_team, vis_group;
    LinearHead coord_side, coord_team, coord_group;
    LinearHead individual;
    Tensor lambda_side, lambda_group, lambda_team;

private:
    TaskConfig task_;
    ModelConfig cfg_;
};

// Floor split of sorted actors into left / right team features.
std::pair<Tensor, Tensor> split_teams(const Tensor& sorted_features);

// Softmax probabilities of a 1-D logit tensor, as plain doubles.
std::vector<double> softmax_probs(const Tensor& logits);

// Mean of per-frame probability vectors followed by argmax; ties break to
// the lowest class id. Shared by predict_clip and its test oracle.
std::pair<std::size_t, std::vector<double>> average_probs_argmax(
    const std::vector<std::vector<double>>& frame_probs);

}  // namespace decompl
