#include "decompl/attention.hpp"

#include <cmath>
#include <string>

#include "decompl/errors.hpp"

namespace decompl {

namespace {

Tensor uniform_init(Shape shape, double bound, Rng& rng) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    std::vector<double> values(n);
    for (auto& v : values) v = rng.uniform(-bound, bound);
    return Tensor::from_data(std::move(shape), std::move(values), true);
}

void check_input(const Tensor& X, std::size_t dim) {
    if (X.rank() != 2) throw DimensionError("attention pool: input must be [N x D]");
    if (X.dim(0) == 0) throw ValidationError("attention pool: empty set of embeddings");
    if (X.dim(1) != dim) {
        throw DimensionError("attention pool: embedding dimension " + std::to_string(X.dim(1)) +
                             " does not match parameters (D=" + std::to_string(dim) + ")");
    }
}

}  // namespace

AttentionPoolParams AttentionPoolParams::init(std::size_t hidden, std::size_t dim, Rng& rng) {
    AttentionPoolParams p;
    p.V = uniform_init({hidden, dim}, 1.0 / std::sqrt(static_cast<double>(dim)), rng);
    p.w = uniform_init({hidden}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    return p;
}

MultiHeadPoolParams MultiHeadPoolParams::init(std::size_t head_count, std::size_t hidden,
                                              std::size_t dim, Rng& rng) {
    if (head_count == 0) throw ConfigError("multi-head pool: needs at least one head");
    MultiHeadPoolParams p;
    p.heads.reserve(head_count);
    for (std::size_t h = 0; h < head_count; ++h) {
        p.heads.push_back(AttentionPoolParams::init(hidden, dim, rng));
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(head_count * dim));
    p.proj_weight = uniform_init({dim, head_count * dim}, bound, rng);
    p.proj_bias = Tensor::zeros({dim}, true);
    return p;
}

Tensor attention_scores(const Tensor& X, const AttentionPoolParams& p) {
    check_input(X, p.embed_dim());
    const std::size_t n = X.dim(0);
    // tanh(X V') w, one score per set element.
    Tensor hidden = tanh(matmul(X, transpose(p.V)));            // [N x L]
    Tensor scores = matmul(hidden, reshape(p.w, {p.hidden_dim(), 1}));  // [N x 1]
    return reshape(scores, {n});
}

Tensor attention_weights(const Tensor& X, const AttentionPoolParams& p) {
    return softmax(attention_scores(X, p));
}

Tensor attention_pool(const Tensor& X, const AttentionPoolParams& p) {
    const std::size_t n = X.dim(0), d = X.dim(1);
    Tensor weights = attention_weights(X, p);
    Tensor pooled = matmul(reshape(weights, {1, n}), X);  // [1 x D]
    return reshape(pooled, {d});
}

Tensor multi_head_pool(const Tensor& X, const MultiHeadPoolParams& p) {
    if (p.heads.empty()) throw ConfigError("multi-head pool: no heads configured");
    std::vector<Tensor> pooled;
    pooled.reserve(p.heads.size());
    for (const auto& head : p.heads) pooled.push_back(attention_pool(X, head));
    Tensor stacked = p.heads.size() == 1 ? pooled[0] : concat(pooled);  // [H*D]
    return linear(stacked, p.proj_weight, p.proj_bias);                 // [D]
}

Tensor baseline_pool(const Tensor& X, PoolKind kind) {
    if (X.rank() != 2) throw DimensionError("baseline pool: input must be [N x D]");
    if (X.dim(0) == 0) throw ValidationError("baseline pool: empty set of embeddings");
    switch (kind) {
        case PoolKind::max:
            return colwise_max(X);
        case PoolKind::mean:
            return colwise_mean(X);
        case PoolKind::attention:
            break;
    }
    throw ConfigError("baseline pool: kind must be max or mean");
}

}  // namespace decompl
