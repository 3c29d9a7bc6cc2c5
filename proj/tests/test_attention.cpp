#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "decompl/attention.hpp"
#include "decompl/errors.hpp"
#include "gradcheck.hpp"

using namespace decompl;

namespace {

AttentionPoolParams hand_params() {
    // D = 2, L = 1, V = [[1, 0]], w = [1]
    AttentionPoolParams p;
    p.V = Tensor::from_data({1, 2}, {1, 0}, true);
    p.w = Tensor::from_data({1}, {1}, true);
    return p;
}

Tensor permuted(const Tensor& X, Rng& rng) {
    std::vector<std::size_t> order(X.dim(0));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    return gather_rows(X, order);
}

}  // namespace

TEST_CASE("attention weights on a singleton and on equal rows") {
    Rng rng(3);
    AttentionPoolParams p = AttentionPoolParams::init(8, 4, rng);
    Tensor one = gradcheck::random_tensor({1, 4}, rng, false);
    CHECK(attention_weights(one, p).data() == std::vector<double>{1.0});
    CHECK(attention_pool(one, p).data() == one.data());

    std::vector<double> row_values{0.3, -0.7, 0.2, 1.1};
    std::vector<double> repeated;
    for (int i = 0; i < 5; ++i) repeated.insert(repeated.end(), row_values.begin(), row_values.end());
    Tensor equal_rows = Tensor::from_data({5, 4}, repeated);
    Tensor uniform = attention_weights(equal_rows, p);
    for (double w : uniform.data()) {
        CHECK(w == doctest::Approx(0.2).epsilon(1e-12));
    }
}

TEST_CASE("attention weights match the hand-evaluated example") {
    AttentionPoolParams p = hand_params();
    Tensor X = Tensor::from_data({2, 2}, {0, 5, 10, 3});
    Tensor scores = attention_scores(X, p);
    CHECK(scores.data()[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(scores.data()[1] == doctest::Approx(std::tanh(10.0)).epsilon(1e-12));

    Tensor weights = attention_weights(X, p);
    CHECK(weights.data()[0] == doctest::Approx(0.2689).epsilon(1e-3));
    CHECK(weights.data()[1] == doctest::Approx(0.7311).epsilon(1e-3));

    Tensor pooled = attention_pool(X, p);
    CHECK(pooled.data()[0] == doctest::Approx(7.311).epsilon(1e-3));
    CHECK(pooled.data()[1] == doctest::Approx(3.538).epsilon(1e-3));
}

TEST_CASE("attention pool input contracts") {
    Rng rng(5);
    AttentionPoolParams p = AttentionPoolParams::init(8, 4, rng);
    CHECK_THROWS_AS(attention_pool(Tensor::zeros({0, 4}), p), ValidationError);
    CHECK_THROWS_AS(attention_pool(Tensor::zeros({3, 5}), p), DimensionError);
    CHECK_THROWS_AS(baseline_pool(Tensor::zeros({0, 4}), PoolKind::mean), ValidationError);
}

TEST_CASE("pooling is permutation invariant") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng.index(12);
        const std::size_t d = 1 + rng.index(6);
        AttentionPoolParams p = AttentionPoolParams::init(1 + rng.index(8), d, rng);
        MultiHeadPoolParams mh = MultiHeadPoolParams::init(1 + rng.index(3), 4, d, rng);
        Tensor X = gradcheck::random_tensor({n, d}, rng, false, -2.0, 2.0);
        Tensor Xp = permuted(X, rng);
        for (auto [a, b] : {std::pair{attention_pool(X, p), attention_pool(Xp, p)},
                            std::pair{multi_head_pool(X, mh), multi_head_pool(Xp, mh)},
                            std::pair{baseline_pool(X, PoolKind::max), baseline_pool(Xp, PoolKind::max)},
                            std::pair{baseline_pool(X, PoolKind::mean),
                                      baseline_pool(Xp, PoolKind::mean)}}) {
            for (std::size_t i = 0; i < a.size(); ++i) {
                CHECK(std::abs(a.data()[i] - b.data()[i]) <= 1e-9);
            }
        }
    }
}

TEST_CASE("attention weights normalize and the pool stays in the convex hull") {
    Rng rng(9);
    for (std::size_t n = 1; n <= 24; ++n) {
        const std::size_t d = 3;
        AttentionPoolParams p = AttentionPoolParams::init(6, d, rng);
        Tensor X = gradcheck::random_tensor({n, d}, rng, false, -3.0, 3.0);
        const auto weights = attention_weights(X, p).data();
        const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
        CHECK(std::abs(total - 1.0) <= 1e-6);

        const auto pooled = attention_pool(X, p).data();
        for (std::size_t j = 0; j < d; ++j) {
            double lo = X.at(0, j), hi = X.at(0, j);
            for (std::size_t i = 1; i < n; ++i) {
                lo = std::min(lo, X.at(i, j));
                hi = std::max(hi, X.at(i, j));
            }
            CHECK(pooled[j] >= lo - 1e-12);
            CHECK(pooled[j] <= hi + 1e-12);
        }
    }
}

TEST_CASE("weights are covariant under a constant score shift") {
    // attention_weights is softmax of attention_scores, so adding any
    // constant to all scores must leave the weights unchanged
    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + rng.index(8), d = 1 + rng.index(4);
        AttentionPoolParams p = AttentionPoolParams::init(3, d, rng);
        Tensor X = gradcheck::random_tensor({n, d}, rng, false);
        Tensor scores = attention_scores(X, p);
        Tensor weights = attention_weights(X, p);
        Tensor shifted = softmax(add(scores, Tensor::full({n}, rng.uniform(-50.0, 50.0))));
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(shifted.data()[i] == doctest::Approx(weights.data()[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("multi-head degenerate configurations") {
    Rng rng(11);
    const std::size_t d = 3;
    // H = 1 with identity projection and zero bias equals plain pooling.
    MultiHeadPoolParams mh = MultiHeadPoolParams::init(1, 5, d, rng);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) mh.proj_weight.data()[i * d + j] = i == j ? 1.0 : 0.0;
    }
    for (auto& b : mh.proj_bias.data()) b = 0.0;
    Tensor X = gradcheck::random_tensor({6, d}, rng, false);
    const auto single = attention_pool(X, mh.heads[0]).data();
    const auto multi = multi_head_pool(X, mh).data();
    for (std::size_t i = 0; i < d; ++i) CHECK(multi[i] == doctest::Approx(single[i]).epsilon(1e-12));

    // H = 2 identical heads with a [I | 0] projection equals head 0.
    MultiHeadPoolParams two = MultiHeadPoolParams::init(2, 5, d, rng);
    two.heads[1] = two.heads[0];
    std::fill(two.proj_weight.data().begin(), two.proj_weight.data().end(), 0.0);
    for (std::size_t i = 0; i < d; ++i) two.proj_weight.data()[i * (2 * d) + i] = 1.0;
    std::fill(two.proj_bias.data().begin(), two.proj_bias.data().end(), 0.0);
    const auto head0 = attention_pool(X, two.heads[0]).data();
    const auto fused = multi_head_pool(X, two).data();
    for (std::size_t i = 0; i < d; ++i) CHECK(fused[i] == doctest::Approx(head0[i]).epsilon(1e-12));
}

TEST_CASE("baseline pooling examples") {
    Tensor X = Tensor::from_data({2, 2}, {0, 0, 2, 4});
    CHECK(baseline_pool(X, PoolKind::mean).data() == std::vector<double>{1, 2});
    Tensor Y = Tensor::from_data({2, 2}, {0, 9, 2, 4});
    CHECK(baseline_pool(Y, PoolKind::max).data() == std::vector<double>{2, 9});
    Tensor one = Tensor::from_data({1, 2}, {5, -1});
    CHECK(baseline_pool(one, PoolKind::max).data() == std::vector<double>{5, -1});
    CHECK(baseline_pool(one, PoolKind::mean).data() == std::vector<double>{5, -1});
}

TEST_CASE("duplicating every row leaves the attention pool unchanged") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng.index(8), d = 2 + rng.index(4);
        AttentionPoolParams p = AttentionPoolParams::init(5, d, rng);
        Tensor X = gradcheck::random_tensor({n, d}, rng, false);
        std::vector<std::size_t> doubled;
        for (std::size_t i = 0; i < n; ++i) {
            doubled.push_back(i);
            doubled.push_back(i);
        }
        Tensor X2 = gather_rows(X, doubled);
        const auto a = attention_pool(X, p).data();
        const auto b = attention_pool(X2, p).data();
        for (std::size_t i = 0; i < d; ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
    }
}

TEST_CASE("pooling gradients pass the finite-difference oracle") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 2 + rng.index(5), d = 2 + rng.index(3);
        AttentionPoolParams p = AttentionPoolParams::init(4, d, rng);
        Tensor X = gradcheck::random_tensor({n, d}, rng, true);
        CHECK(gradcheck::check([&]() { return sum(tanh(attention_pool(X, p))); }, {X, p.V, p.w}));

        MultiHeadPoolParams mh = MultiHeadPoolParams::init(2, 3, d, rng);
        std::vector<Tensor> leaves{X, mh.proj_weight, mh.proj_bias};
        for (auto& head : mh.heads) {
            leaves.push_back(head.V);
            leaves.push_back(head.w);
        }
        CHECK(gradcheck::check([&]() { return sum(tanh(multi_head_pool(X, mh))); }, leaves));
    }
}
