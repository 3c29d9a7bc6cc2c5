#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "decompl/attention.hpp"
#include "decompl/rng.hpp"
#include "decompl/tensor.hpp"

namespace decompl {

// Normalized [x1, y1, x2, y2] boxes, one per actor.
using BoxList = std::vector<std::array<double, 4>>;

// Checks every box: coordinates in [0, 1], x1 < x2, y1 < y2. Throws
// ValidationError naming the offending row.
void validate_boxes(const BoxList& boxes);

double box_center_x(const std::array<double, 4>& box);
double box_center_y(const std::array<double, 4>& box);

// Left-to-right rank: ascending center-x, ties by ascending center-y, then
// original index. Deterministic for a given input.
std::vector<std::size_t> sort_order(const BoxList& boxes);

struct SortedActors {
    BoxList boxes;
    Tensor features;                 // rows reordered to match
    std::vector<std::size_t> order;  // order[k] = original index of rank k
};

SortedActors sort_actors(const BoxList& boxes, const Tensor& features);

// X_pd[i][j] = boxes[i] - boxes[j], componentwise. [N x N x 4], no gradient
// (boxes are inputs, not parameters).
Tensor pairwise_diffs(const BoxList& boxes);

// Shared-weight projection of each pairwise difference to one relation
// value (size-4 stride-4 kernel), a small convolution over the sorted
// relation axis, and a linear embedding of each actor's relation pattern
// into D dimensions.
struct CoordinateModuleParams {
    Tensor diff_kernel;      // [1 x 1 x 4]
    Tensor diff_bias;        // [1]
    Tensor relation_weight;  // [C x 1 x 3], stride 1, padding 1
    Tensor relation_bias;    // [C]
    Tensor embed_weight;     // [D x (C * ref_actors)]
    Tensor embed_bias;       // [D]
    std::size_t relation_channels = 8;
    std::size_t ref_actors = 12;

    static CoordinateModuleParams init(std::size_t channels, std::size_t ref_actors,
                                       std::size_t dim, Rng& rng);

    std::size_t embed_dim() const { return embed_weight.dim(0); }
};

// Relation scalars before the convolution stage: entry (i, j) is the
// shared-kernel projection of boxes[i] - boxes[j]. [N x N].
Tensor diff_projection(const BoxList& sorted_boxes, const CoordinateModuleParams& p);

// Per-actor location features. [N x D] for any N >= 1; actor counts other
// than ref_actors are zero-padded (or truncated) at the embedding input.
Tensor coordinate_features(const BoxList& sorted_boxes, const CoordinateModuleParams& p);

// Location features pooled to a single D-vector. One head, no team split.
Tensor coordinate_branch(const BoxList& sorted_boxes, const CoordinateModuleParams& p,
                         const AttentionPoolParams& pool,
                         PoolKind kind = PoolKind::attention);

}  // namespace decompl
