#include <doctest.h>

#include <cmath>

#include "decompl/coordinate.hpp"
#include "decompl/errors.hpp"
#include "gradcheck.hpp"

using namespace decompl;

namespace {

BoxList random_boxes(std::size_t n, Rng& rng) {
    BoxList boxes;
    boxes.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double cx = rng.uniform(0.1, 0.9), cy = rng.uniform(0.1, 0.9);
        const double hw = rng.uniform(0.01, 0.05), hh = rng.uniform(0.01, 0.05);
        boxes.push_back({cx - hw, cy - hh, cx + hw, cy + hh});
    }
    return boxes;
}

BoxList box_at(std::initializer_list<double> centers_x) {
    BoxList boxes;
    for (double cx : centers_x) boxes.push_back({cx - 0.05, 0.4, cx + 0.05, 0.6});
    return boxes;
}

}  // namespace

TEST_CASE("sort order by center-x with documented tie-breaks") {
    BoxList boxes = box_at({0.9, 0.1, 0.5});
    CHECK(sort_order(boxes) == std::vector<std::size_t>{1, 2, 0});

    BoxList sorted = box_at({0.1, 0.5, 0.9});
    CHECK(sort_order(sorted) == std::vector<std::size_t>{0, 1, 2});

    // equal center-x: ascending center-y wins
    BoxList ties{{0.4, 0.7, 0.6, 0.9}, {0.4, 0.1, 0.6, 0.3}};
    CHECK(sort_order(ties) == std::vector<std::size_t>{1, 0});
}

TEST_CASE("sort_actors validates and reorders features consistently") {
    Rng rng(3);
    BoxList boxes = box_at({0.8, 0.2});
    Tensor features = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    SortedActors sorted = sort_actors(boxes, features);
    CHECK(sorted.order == std::vector<std::size_t>{1, 0});
    CHECK(sorted.features.at(0, 0) == 4.0);
    CHECK(sorted.features.at(1, 0) == 1.0);
    CHECK(sorted.boxes[0][0] == doctest::Approx(0.15));

    BoxList bad = boxes;
    bad[1] = {0.6, 0.4, 0.4, 0.6};  // x1 > x2
    try {
        sort_actors(bad, features);
        FAIL("expected validation error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("box 1") != std::string::npos);
    }
}

TEST_CASE("pairwise diffs: diagonal, antisymmetry, hand value") {
    Rng rng(5);
    for (std::size_t n = 1; n <= 12; ++n) {
        BoxList boxes = random_boxes(n, rng);
        Tensor diffs = pairwise_diffs(boxes);
        CHECK(diffs.shape() == Shape{n, n, 4});
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < 4; ++c) CHECK(diffs.at(i, i, c) == 0.0);
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t c = 0; c < 4; ++c) {
                    CHECK(diffs.at(i, j, c) == -diffs.at(j, i, c));
                }
            }
        }
    }

    BoxList pair{{0.1, 0.2, 0.2, 0.3}, {0.5, 0.5, 0.6, 0.7}};
    Tensor diffs = pairwise_diffs(pair);
    CHECK(diffs.at(0, 1, 0) == doctest::Approx(-0.4).epsilon(1e-12));
    CHECK(diffs.at(0, 1, 1) == doctest::Approx(-0.3).epsilon(1e-12));
    CHECK(diffs.at(0, 1, 2) == doctest::Approx(-0.4).epsilon(1e-12));
    CHECK(diffs.at(0, 1, 3) == doctest::Approx(-0.4).epsilon(1e-12));
}

TEST_CASE("selector diff kernel isolates the x1 differences") {
    Rng rng(7);
    const std::size_t n = 5;
    CoordinateModuleParams p = CoordinateModuleParams::init(4, n, 6, rng);
    p.diff_kernel = Tensor::from_data({1, 1, 4}, {1, 0, 0, 0}, true);
    p.diff_bias = Tensor::zeros({1}, true);
    BoxList boxes = random_boxes(n, rng);
    Tensor relation = diff_projection(boxes, p);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            CHECK(relation.at(i, j) == doctest::Approx(boxes[i][0] - boxes[j][0]).epsilon(1e-12));
        }
    }
}

TEST_CASE("identical boxes give identical feature rows driven by the bias") {
    Rng rng(9);
    const std::size_t n = 4;
    CoordinateModuleParams p = CoordinateModuleParams::init(3, n, 5, rng);
    p.diff_bias.data()[0] = 0.37;
    BoxList boxes(n, {0.4, 0.4, 0.5, 0.6});
    Tensor relation = diff_projection(boxes, p);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            CHECK(relation.at(i, j) == doctest::Approx(0.37).epsilon(1e-12));
        }
    }
    Tensor features = coordinate_features(boxes, p);
    for (std::size_t i = 1; i < n; ++i) {
        for (std::size_t d = 0; d < 5; ++d) {
            CHECK(features.at(i, d) == doctest::Approx(features.at(0, d)).epsilon(1e-12));
        }
    }
}

TEST_CASE("translation invariance of features and branch output") {
    Rng rng(11);
    const std::size_t n = 6;
    CoordinateModuleParams p = CoordinateModuleParams::init(4, n, 5, rng);
    AttentionPoolParams pool = AttentionPoolParams::init(7, 5, rng);
    BoxList boxes = random_boxes(n, rng);
    BoxList moved = boxes;
    for (auto& b : moved) {
        for (auto& c : b) c += 0.05;
    }
    Tensor base = coordinate_features(boxes, p);
    Tensor shifted = coordinate_features(moved, p);
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK(std::abs(base.data()[i] - shifted.data()[i]) <= 1e-12);
    }
    Tensor pooled = coordinate_branch(boxes, p, pool);
    Tensor pooled_shifted = coordinate_branch(moved, p, pool);
    for (std::size_t i = 0; i < pooled.size(); ++i) {
        CHECK(std::abs(pooled.data()[i] - pooled_shifted.data()[i]) <= 1e-12);
    }
}

TEST_CASE("output shape is N x D for any actor count") {
    Rng rng(13);
    CoordinateModuleParams p = CoordinateModuleParams::init(4, 12, 5, rng);
    AttentionPoolParams pool = AttentionPoolParams::init(7, 5, rng);
    for (std::size_t n : {1u, 3u, 12u, 15u}) {
        BoxList boxes = random_boxes(n, rng);
        Tensor features = coordinate_features(boxes, p);
        CHECK(features.shape() == Shape{n, 5});
        CHECK(coordinate_branch(boxes, p, pool).shape() == Shape{5});
    }
}

TEST_CASE("single actor pools to its own coordinate feature") {
    Rng rng(15);
    CoordinateModuleParams p = CoordinateModuleParams::init(4, 1, 5, rng);
    AttentionPoolParams pool = AttentionPoolParams::init(7, 5, rng);
    BoxList boxes = random_boxes(1, rng);
    Tensor features = coordinate_features(boxes, p);
    Tensor pooled = coordinate_branch(boxes, p, pool);
    for (std::size_t d = 0; d < 5; ++d) {
        CHECK(pooled.data()[d] == doctest::Approx(features.at(0, d)).epsilon(1e-12));
    }
}

TEST_CASE("coordinate gradients pass the finite-difference oracle") {
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t n = 2 + rng.index(4);
        CoordinateModuleParams p = CoordinateModuleParams::init(3, n, 4, rng);
        AttentionPoolParams pool = AttentionPoolParams::init(5, 4, rng);
        BoxList boxes = random_boxes(n, rng);
        std::vector<Tensor> leaves{p.diff_kernel, p.diff_bias,   p.relation_weight,
                                   p.relation_bias, p.embed_weight, p.embed_bias,
                                   pool.V,          pool.w};
        CHECK(gradcheck::check(
            [&]() { return sum(tanh(coordinate_branch(boxes, p, pool))); }, leaves));
    }
}
