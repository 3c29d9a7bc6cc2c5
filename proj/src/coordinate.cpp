#include "decompl/coordinate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "decompl/errors.hpp"
#include "decompl/flops.hpp"

namespace decompl {

void validate_boxes(const BoxList& boxes) {
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const auto& b = boxes[i];
        for (double c : b) {
            if (!(c >= 0.0 && c <= 1.0)) {
                throw ValidationError("box " + std::to_string(i) +
                                      ": coordinate outside [0, 1]: " + std::to_string(c));
            }
        }
        if (!(b[0] < b[2])) {
            throw ValidationError("box " + std::to_string(i) + ": x1 >= x2");
        }
        if (!(b[1] < b[3])) {
            throw ValidationError("box " + std::to_string(i) + ": y1 >= y2");
        }
    }
}

double box_center_x(const std::array<double, 4>& box) { return 0.5 * (box[0] + box[2]); }
double box_center_y(const std::array<double, 4>& box) { return 0.5 * (box[1] + box[3]); }

std::vector<std::size_t> sort_order(const BoxList& boxes) {
    std::vector<std::size_t> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double ax = box_center_x(boxes[a]), bx = box_center_x(boxes[b]);
        if (ax != bx) return ax < bx;
        const double ay = box_center_y(boxes[a]), by = box_center_y(boxes[b]);
        if (ay != by) return ay < by;
        return a < b;
    });
    return order;
}

SortedActors sort_actors(const BoxList& boxes, const Tensor& features) {
    if (boxes.empty()) throw ValidationError("sort_actors: no actors");
    if (features.rank() != 2 || features.dim(0) != boxes.size()) {
        throw DimensionError("sort_actors: features must have one row per box");
    }
    validate_boxes(boxes);
    SortedActors out;
    out.order = sort_order(boxes);
    out.boxes.reserve(boxes.size());
    for (std::size_t idx : out.order) out.boxes.push_back(boxes[idx]);
    out.features = gather_rows(features, out.order);
    return out;
}

Tensor pairwise_diffs(const BoxList& boxes) {
    if (boxes.empty()) throw ValidationError("pairwise_diffs: no boxes");
    const std::size_t n = boxes.size();
    std::vector<double> data(n * n * 4);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t c = 0; c < 4; ++c) data[pos++] = boxes[i][c] - boxes[j][c];
        }
    }
    if (flops::enabled()) flops::add(4ull * n * n);
    return Tensor::from_data({n, n, 4}, std::move(data));
}

CoordinateModuleParams CoordinateModuleParams::init(std::size_t channels, std::size_t ref_actors,
                                                    std::size_t dim, Rng& rng) {
    if (channels == 0 || ref_actors == 0 || dim == 0) {
        throw ConfigError("coordinate module: channels, ref_actors and dim must be positive");
    }
    auto uniform = [&rng](Shape shape, double bound) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        std::vector<double> values(n);
        for (auto& v : values) v = rng.uniform(-bound, bound);
        return Tensor::from_data(std::move(shape), std::move(values), true);
    };
    CoordinateModuleParams p;
    p.relation_channels = channels;
    p.ref_actors = ref_actors;
    p.diff_kernel = uniform({1, 1, 4}, 0.5);  // fan_in 4
    p.diff_bias = Tensor::zeros({1}, true);
    p.relation_weight = uniform({channels, 1, 3}, 1.0 / std::sqrt(3.0));
    p.relation_bias = Tensor::zeros({channels}, true);
    const std::size_t embed_in = channels * ref_actors;
    p.embed_weight = uniform({dim, embed_in}, 1.0 / std::sqrt(static_cast<double>(embed_in)));
    p.embed_bias = Tensor::zeros({dim}, true);
    return p;
}

Tensor diff_projection(const BoxList& sorted_boxes, const CoordinateModuleParams& p) {
    const std::size_t n = sorted_boxes.size();
    Tensor diffs = pairwise_diffs(sorted_boxes);          // [N x N x 4]
    Tensor flat = reshape(diffs, {n, n * 4});             // row i: diffs of actor i
    std::vector<Tensor> rows;
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor projected = conv1d(row(flat, i), p.diff_kernel, p.diff_bias, 4, 0);  // [1 x N]
        rows.push_back(reshape(projected, {n}));
    }
    return stack_rows(rows);  // [N x N]
}

Tensor coordinate_features(const BoxList& sorted_boxes, const CoordinateModuleParams& p) {
    if (sorted_boxes.empty()) throw ValidationError("coordinate_features: no actors");
    const std::size_t n = sorted_boxes.size();
    const std::size_t c = p.relation_channels;
    const std::size_t embed_in = c * p.ref_actors;
    if (p.embed_weight.dim(1) != embed_in) {
        throw DimensionError("coordinate_features: embedding expects " +
                             std::to_string(p.embed_weight.dim(1)) + " inputs, parameters give " +
                             std::to_string(embed_in));
    }

    Tensor diffs = pairwise_diffs(sorted_boxes);
    Tensor flat = reshape(diffs, {n, n * 4});
    std::vector<Tensor> actor_rows;
    actor_rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        // One relation scalar per (i, j) pair via the shared size-4 stride-4
        // kernel, then a channel-expanding convolution over the sorted
        // neighbor axis.
        Tensor relation = conv1d(row(flat, i), p.diff_kernel, p.diff_bias, 4, 0);     // [1 x N]
        Tensor conv = relu(conv1d(relation, p.relation_weight, p.relation_bias, 1, 1));  // [C x N]
        if (n == p.ref_actors) {
            actor_rows.push_back(reshape(conv, {c * n}));
        } else {
            // pad or truncate per channel so the embedding always sees the
            // same channel-aligned layout regardless of the actor count
            std::vector<Tensor> channels;
            channels.reserve(c);
            for (std::size_t ch = 0; ch < c; ++ch) {
                channels.push_back(pad_to(row(conv, ch), p.ref_actors));
            }
            actor_rows.push_back(concat(channels));
        }
    }
    Tensor stacked = stack_rows(actor_rows);             // [N x C*ref]
    return linear(stacked, p.embed_weight, p.embed_bias);  // [N x D]
}

Tensor coordinate_branch(const BoxList& sorted_boxes, const CoordinateModuleParams& p,
                         const AttentionPoolParams& pool, PoolKind kind) {
    Tensor features = coordinate_features(sorted_boxes, p);
    if (kind == PoolKind::attention) return attention_pool(features, pool);
    return baseline_pool(features, kind);
}

}  // namespace decompl
