#pragma once

#include <cstddef>
#include <vector>

#include "decompl/rng.hpp"
#include "decompl/tensor.hpp"

namespace decompl {

// Learnable attention pooling over a set of D-dimensional embeddings:
// a_i = softmax_i(w' tanh(V x_i')), pooled = sum_i a_i x_i. Permutation
// invariant by construction.
struct AttentionPoolParams {
    Tensor V;  // [L x D]
    Tensor w;  // [L]

    static AttentionPoolParams init(std::size_t hidden, std::size_t dim, Rng& rng);

    std::size_t hidden_dim() const { return V.dim(0); }
    std::size_t embed_dim() const { return V.dim(1); }
};

// H independent pooling heads; their outputs are stacked and linearly
// projected back to D.
struct MultiHeadPoolParams {
    std::vector<AttentionPoolParams> heads;
    Tensor proj_weight;  // [D x (H*D)]
    Tensor proj_bias;    // [D]

    static MultiHeadPoolParams init(std::size_t head_count, std::size_t hidden, std::size_t dim,
                                    Rng& rng);

    std::size_t head_count() const { return heads.size(); }
    std::size_t embed_dim() const { return proj_weight.dim(0); }
};

enum class PoolKind { attention, max, mean };

// Pre-softmax scores w' tanh(V x_i') for each row of X. [N x D] -> [N].
Tensor attention_scores(const Tensor& X, const AttentionPoolParams& p);

// Normalized attention weights; nonnegative, sum to 1.
Tensor attention_weights(const Tensor& X, const AttentionPoolParams& p);

// Convex combination of the rows of X under attention_weights.
Tensor attention_pool(const Tensor& X, const AttentionPoolParams& p);

Tensor multi_head_pool(const Tensor& X, const MultiHeadPoolParams& p);

// Coordinatewise max or mean over rows; the non-learnable baselines.
Tensor baseline_pool(const Tensor& X, PoolKind kind);

}  // namespace decompl
