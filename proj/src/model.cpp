#include "decompl/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "decompl/errors.hpp"

namespace decompl {

using nlohmann::json;

ModelConfig ablation_variant(ModelConfig base, const std::string& variant) {
    if (variant == "full") return base;
    if (variant == "only-coordinate") {
        base.route = FusionRoute::coordinate_only;
        return base;
    }
    if (variant == "no-coordinate") {
        base.route = FusionRoute::visual_only;
        return base;
    }
    if (variant == "no-aux-losses") {
        base.beta = 0.0;
        return base;
    }
    if (variant == "max-pool") {
        base.pool = PoolKind::max;
        return base;
    }
    if (variant == "mean-pool") {
        base.pool = PoolKind::mean;
        return base;
    }
    if (variant.rfind("heads(", 0) == 0 && variant.back() == ')') {
        const std::string inner = variant.substr(6, variant.size() - 7);
        std::size_t heads = 0;
        try {
            heads = static_cast<std::size_t>(std::stoul(inner));
        } catch (...) {
            throw ConfigError("bad head count in variant \"" + variant + "\"");
        }
        if (heads == 0) throw ConfigError("head count must be positive in \"" + variant + "\"");
        base.visual_heads = heads;
        return base;
    }
    throw ConfigError("unknown ablation variant \"" + variant + "\"");
}

LinearHead LinearHead::init(std::size_t in, std::size_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::vector<double> w(in * out);
    for (auto& v : w) v = rng.uniform(-bound, bound);
    LinearHead head;
    head.weight = Tensor::from_data({out, in}, std::move(w), true);
    head.bias = Tensor::zeros({out}, true);
    return head;
}

Model Model::init(TaskConfig task, ModelConfig cfg, std::uint64_t seed) {
    task.validate();
    if (cfg.feature_dim == 0 || cfg.embed_dim == 0 || cfg.attn_hidden == 0) {
        throw ConfigError("model: feature_dim, embed_dim and attn_hidden must be positive");
    }
    if (task.mode == Mode::volleyball && cfg.ref_actors != task.fixed_actors && task.fixed_actors != 0) {
        cfg.ref_actors = task.fixed_actors;
    }

    Model model;
    model.task_ = std::move(task);
    model.cfg_ = cfg;
    Rng rng(seed);

    const std::size_t d = cfg.embed_dim;
    model.embedding = LinearHead::init(cfg.feature_dim, d, rng);

    const bool volleyball = model.task_.mode == Mode::volleyball;
    const std::size_t pool_count = volleyball ? (cfg.share_team_pool ? 1 : 2) : 1;
    for (std::size_t i = 0; i < pool_count; ++i) {
        model.visual_pools.push_back(
            MultiHeadPoolParams::init(cfg.visual_heads, cfg.attn_hidden, d, rng));
    }

    model.coord = CoordinateModuleParams::init(cfg.relation_channels, cfg.ref_actors, d, rng);
    model.coord_pool = AttentionPoolParams::init(cfg.attn_hidden, d, rng);

    const std::size_t visual_dim = volleyball ? 2 * d : d;
    model.vis_group = LinearHead::init(visual_dim, model.task_.group_count(), rng);
    model.coord_group = LinearHead::init(d, model.task_.group_count(), rng);
    model.lambda_group = Tensor::zeros({1}, true);
    if (volleyball) {
        model.vis_side = LinearHead::init(visual_dim, model.task_.side_count(), rng);
        model.vis_team = LinearHead::init(visual_dim, model.task_.team_count(), rng);
        model.coord_side = LinearHead::init(d, model.task_.side_count(), rng);
        model.coord_team = LinearHead::init(d, model.task_.team_count(), rng);
        model.lambda_side = Tensor::zeros({1}, true);
        model.lambda_team = Tensor::zeros({1}, true);
    }
    model.individual = LinearHead::init(d, model.task_.individual_count(), rng);
    return model;
}

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    auto head = [&out](const std::string& name, const LinearHead& h) {
        if (!h.defined()) return;
        out.emplace_back(name + ".weight", h.weight);
        out.emplace_back(name + ".bias", h.bias);
    };
    head("embedding", embedding);
    const bool volleyball = task_.mode == Mode::volleyball;
    for (std::size_t i = 0; i < visual_pools.size(); ++i) {
        std::string base = "visual." +
            (visual_pools.size() == 1 ? std::string(volleyball ? "teams" : "main")
                                      : (i == 0 ? std::string("left") : std::string("right")));
        const auto& pool = visual_pools[i];
        for (std::size_t h = 0; h < pool.heads.size(); ++h) {
            out.emplace_back(base + ".head" + std::to_string(h) + ".V", pool.heads[h].V);
            out.emplace_back(base + ".head" + std::to_string(h) + ".w", pool.heads[h].w);
        }
        out.emplace_back(base + ".proj.weight", pool.proj_weight);
        out.emplace_back(base + ".proj.bias", pool.proj_bias);
    }
    out.emplace_back("coord.diff_kernel.weight", coord.diff_kernel);
    out.emplace_back("coord.diff_kernel.bias", coord.diff_bias);
    out.emplace_back("coord.relation_conv.weight", coord.relation_weight);
    out.emplace_back("coord.relation_conv.bias", coord.relation_bias);
    out.emplace_back("coord.embed.weight", coord.embed_weight);
    out.emplace_back("coord.embed.bias", coord.embed_bias);
    out.emplace_back("coord.pool.V", coord_pool.V);
    out.emplace_back("coord.pool.w", coord_pool.w);
    head("heads.visual.group", vis_group);
    head("heads.visual.side", vis_side);
    head("heads.visual.team", vis_team);
    head("heads.coord.group", coord_group);
    head("heads.coord.side", coord_side);
    head("heads.coord.team", coord_team);
    head("heads.individual", individual);
    out.emplace_back("fusion.lambda_group", lambda_group);
    if (lambda_side.defined()) out.emplace_back("fusion.lambda_side", lambda_side);
    if (lambda_team.defined()) out.emplace_back("fusion.lambda_team", lambda_team);
    return out;
}

std::vector<Tensor> Model::parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
}

std::size_t Model::parameter_count(bool include_embedding) const {
    std::size_t total = 0;
    for (const auto& [name, t] : named_parameters()) {
        if (!include_embedding && name.rfind("embedding.", 0) == 0) continue;
        total += t.size();
    }
    return total;
}

void Model::zero_grad() {
    for (auto& t : parameters()) t.zero_grad();
}

std::pair<Tensor, Tensor> split_teams(const Tensor& sorted_features) {
    if (sorted_features.rank() != 2) {
        throw DimensionError("split_teams: expects [N x D] features");
    }
    const std::size_t n = sorted_features.dim(0);
    if (n < 2) throw ContractError("split_teams: needs at least two actors");
    const std::size_t half = n / 2;
    return {slice_rows(sorted_features, 0, half), slice_rows(sorted_features, half, n)};
}

namespace {

// sigma(lambda) * visual + (1 - sigma(lambda)) * coordinate.
Tensor fuse_logits(const Tensor& visual, const Tensor& coordinate, const Tensor& lambda) {
    Tensor gate = sigmoid(lambda);
    Tensor counter = sub(Tensor::scalar(1.0), gate);
    return add(mul_scalar(visual, gate), mul_scalar(coordinate, counter));
}

}  // namespace

FramePrediction Model::forward_frame(const BoxList& boxes, const Tensor& features) const {
    const std::size_t n = boxes.size();
    if (n == 0) throw ValidationError("forward_frame: no actors");
    if (features.rank() != 2 || features.dim(0) != n) {
        throw DimensionError("forward_frame: features must be [N x F] with one row per box");
    }
    if (features.dim(1) != cfg_.feature_dim) {
        throw DimensionError("forward_frame: feature dimension " + std::to_string(features.dim(1)) +
                             " does not match the configured " + std::to_string(cfg_.feature_dim));
    }
    const bool volleyball = task_.mode == Mode::volleyball;
    if (volleyball && cfg_.strict_actor_count && task_.fixed_actors != 0 &&
        n != task_.fixed_actors) {
        throw ValidationError("forward_frame: expected " + std::to_string(task_.fixed_actors) +
                              " actors, got " + std::to_string(n));
    }

    FramePrediction pred;
    Tensor embedded = linear(features, embedding.weight, embedding.bias);  // [N x D]
    pred.individual_logits = linear(embedded, individual.weight, individual.bias);

    SortedActors sorted = sort_actors(boxes, embedded);
    pred.sort_order = sorted.order;

    const bool want_visual = cfg_.route != FusionRoute::coordinate_only;
    const bool want_coord = cfg_.route != FusionRoute::visual_only;

    Tensor visual_scene;
    if (want_visual) {
        if (volleyball) {
            auto [left, right] = split_teams(sorted.features);
            const auto& left_pool = visual_pools.front();
            const auto& right_pool = visual_pools.back();
            Tensor xl = cfg_.pool == PoolKind::attention ? multi_head_pool(left, left_pool)
                                                         : baseline_pool(left, cfg_.pool);
            Tensor xr = cfg_.pool == PoolKind::attention ? multi_head_pool(right, right_pool)
                                                         : baseline_pool(right, cfg_.pool);
            visual_scene = concat({xl, xr});  // [2D]
        } else {
            visual_scene = cfg_.pool == PoolKind::attention
                               ? multi_head_pool(sorted.features, visual_pools.front())
                               : baseline_pool(sorted.features, cfg_.pool);
        }
        pred.visual_group_logits = linear(visual_scene, vis_group.weight, vis_group.bias);
        if (volleyball) {
            pred.visual_side_logits = linear(visual_scene, vis_side.weight, vis_side.bias);
            pred.visual_team_logits = linear(visual_scene, vis_team.weight, vis_team.bias);
        }
    }

    if (want_coord) {
        Tensor coord_scene = coordinate_branch(sorted.boxes, coord, coord_pool, cfg_.pool);
        pred.coord_group_logits = linear(coord_scene, coord_group.weight, coord_group.bias);
        if (volleyball) {
            pred.coord_side_logits = linear(coord_scene, coord_side.weight, coord_side.bias);
            pred.coord_team_logits = linear(coord_scene, coord_team.weight, coord_team.bias);
        }
    }

    switch (cfg_.route) {
        case FusionRoute::fused:
            pred.group_logits = fuse_logits(pred.visual_group_logits, pred.coord_group_logits,
                                            lambda_group);
            if (volleyball) {
                pred.side_logits = fuse_logits(pred.visual_side_logits, pred.coord_side_logits,
                                               lambda_side);
                pred.team_logits = fuse_logits(pred.visual_team_logits, pred.coord_team_logits,
                                               lambda_team);
            }
            break;
        case FusionRoute::visual_only:
            pred.group_logits = pred.visual_group_logits;
            pred.side_logits = pred.visual_side_logits;
            pred.team_logits = pred.visual_team_logits;
            break;
        case FusionRoute::coordinate_only:
            pred.group_logits = pred.coord_group_logits;
            pred.side_logits = pred.coord_side_logits;
            pred.team_logits = pred.coord_team_logits;
            break;
    }
    return pred;
}

FramePrediction Model::forward_frame(const FrameRecord& frame) const {
    const std::size_t n = frame.actor_count();
    if (n == 0) throw ValidationError("forward_frame: frame has no actors");
    std::vector<double> flat;
    flat.reserve(n * cfg_.feature_dim);
    for (const auto& f : frame.features) {
        if (f.size() != cfg_.feature_dim) {
            throw DimensionError("forward_frame: feature row width " + std::to_string(f.size()) +
                                 " does not match the configured " +
                                 std::to_string(cfg_.feature_dim));
        }
        flat.insert(flat.end(), f.begin(), f.end());
    }
    return forward_frame(frame.boxes, Tensor::from_data({n, cfg_.feature_dim}, std::move(flat)));
}

LossBreakdown Model::total_loss(const FramePrediction& pred, const FrameLabels& labels) const {
    const bool volleyball = task_.mode == Mode::volleyball;
    if (labels.group >= task_.group_count()) {
        throw LabelError("total_loss: group label out of range");
    }
    const std::size_t n = pred.individual_logits.dim(0);
    if (labels.actions.size() != n) {
        throw LabelError("total_loss: expected " + std::to_string(n) + " action labels, got " +
                         std::to_string(labels.actions.size()));
    }

    LossBreakdown out;
    // Mean cross-entropy over the labeled actors; unlabeled (-1) are masked.
    Tensor individual_loss;
    std::size_t labeled = 0;
    for (std::size_t a = 0; a < n; ++a) {
        const int action = labels.actions[a];
        if (action < 0) continue;
        Tensor ce = cross_entropy(row(pred.individual_logits, a), static_cast<std::size_t>(action));
        individual_loss = labeled == 0 ? ce : add(individual_loss, ce);
        ++labeled;
    }
    if (labeled > 0) {
        individual_loss = scale(individual_loss, 1.0 / static_cast<double>(labeled));
    } else {
        individual_loss = Tensor::scalar(0.0);
    }

    Tensor group_loss = cross_entropy(pred.group_logits, labels.group);
    out.individual = individual_loss.value();
    out.group = group_loss.value();
    Tensor total = add(individual_loss, group_loss);

    if (volleyball) {
        auto [side_id, team_id] = task_.decompose(labels.group);
        Tensor side_loss = cross_entropy(pred.side_logits, side_id);
        Tensor team_loss = cross_entropy(pred.team_logits, team_id);
        out.side = side_loss.value();
        out.team = team_loss.value();
        total = add(total, scale(add(side_loss, team_loss), cfg_.beta));
    }
    out.total = total;
    return out;
}

std::vector<double> softmax_probs(const Tensor& logits) {
    Tensor p = softmax(logits);
    return p.data();
}

std::pair<std::size_t, std::vector<double>> average_probs_argmax(
    const std::vector<std::vector<double>>& frame_probs) {
    if (frame_probs.empty()) throw ValidationError("average_probs_argmax: no frames");
    const std::size_t classes = frame_probs.front().size();
    std::vector<double> avg(classes, 0.0);
    for (const auto& probs : frame_probs) {
        if (probs.size() != classes) {
            throw DimensionError("average_probs_argmax: inconsistent class counts");
        }
        for (std::size_t c = 0; c < classes; ++c) avg[c] += probs[c];
    }
    for (auto& v : avg) v /= static_cast<double>(frame_probs.size());
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
        if (avg[c] > avg[best]) best = c;  // strict: ties keep the lowest id
    }
    return {best, std::move(avg)};
}

ClipPrediction Model::predict_clip(const ClipRecord& clip) const {
    if (clip.frames.empty()) {
        throw ValidationError("predict_clip: clip \"" + clip.clip_id + "\" has no frames");
    }
    const bool volleyball = task_.mode == Mode::volleyball;
    std::vector<std::vector<double>> group_probs, side_probs, team_probs;
    for (const FrameRecord& frame : clip.frames) {
        FramePrediction pred = forward_frame(frame);
        group_probs.push_back(softmax_probs(pred.group_logits));
        if (volleyball) {
            side_probs.push_back(softmax_probs(pred.side_logits));
            team_probs.push_back(softmax_probs(pred.team_logits));
        }
    }
    ClipPrediction out;
    std::tie(out.group, out.group_probs) = average_probs_argmax(group_probs);
    if (volleyball) {
        std::tie(out.side, out.side_probs) = average_probs_argmax(side_probs);
        std::tie(out.team, out.team_probs) = average_probs_argmax(team_probs);
    }
    return out;
}

namespace {

double gate_value(const Tensor& lambda) {
    if (!lambda.defined()) return std::numeric_limits<double>::quiet_NaN();
    const double x = lambda.value();
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

double Model::gate_side() const { return gate_value(lambda_side); }
double Model::gate_group() const { return gate_value(lambda_group); }
double Model::gate_team() const { return gate_value(lambda_team); }

// ---- checkpoints -------------------------------------------------------------

namespace {

constexpr char kCkptMagic[8] = {'D', 'C', 'P', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    return v;
}

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

void write_doubles(std::ostream& out, const std::vector<double>& values) {
    for (double d : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, sizeof(bits));
        write_u64(out, bits);
    }
}

void read_doubles(std::istream& in, std::vector<double>& values) {
    for (double& d : values) {
        std::uint64_t bits = read_u64(in);
        std::memcpy(&d, &bits, sizeof(bits));
    }
}

json task_to_json(const TaskConfig& task) {
    json j;
    j["mode"] = mode_name(task.mode);
    j["group_labels"] = task.group_labels;
    j["individual_labels"] = task.individual_labels;
    j["side_labels"] = task.side_labels;
    j["team_labels"] = task.team_labels;
    j["fixed_actors"] = task.fixed_actors;
    return j;
}

TaskConfig task_from_json(const json& j) {
    TaskConfig task;
    task.mode = mode_from_name(j.at("mode").get<std::string>());
    task.group_labels = j.at("group_labels").get<std::vector<std::string>>();
    task.individual_labels = j.at("individual_labels").get<std::vector<std::string>>();
    task.side_labels = j.at("side_labels").get<std::vector<std::string>>();
    task.team_labels = j.at("team_labels").get<std::vector<std::string>>();
    task.fixed_actors = j.at("fixed_actors").get<std::size_t>();
    task.validate();
    return task;
}

std::string route_name(FusionRoute r) {
    switch (r) {
        case FusionRoute::fused: return "fused";
        case FusionRoute::visual_only: return "visual_only";
        case FusionRoute::coordinate_only: return "coordinate_only";
    }
    return "fused";
}

FusionRoute route_from_name(const std::string& name) {
    if (name == "fused") return FusionRoute::fused;
    if (name == "visual_only") return FusionRoute::visual_only;
    if (name == "coordinate_only") return FusionRoute::coordinate_only;
    throw ConfigError("unknown fusion route: " + name);
}

std::string pool_name(PoolKind k) {
    switch (k) {
        case PoolKind::attention: return "attention";
        case PoolKind::max: return "max";
        case PoolKind::mean: return "mean";
    }
    return "attention";
}

PoolKind pool_from_name(const std::string& name) {
    if (name == "attention") return PoolKind::attention;
    if (name == "max") return PoolKind::max;
    if (name == "mean") return PoolKind::mean;
    throw ConfigError("unknown pool kind: " + name);
}

json model_config_to_json(const ModelConfig& cfg) {
    json j;
    j["feature_dim"] = cfg.feature_dim;
    j["embed_dim"] = cfg.embed_dim;
    j["attn_hidden"] = cfg.attn_hidden;
    j["visual_heads"] = cfg.visual_heads;
    j["relation_channels"] = cfg.relation_channels;
    j["ref_actors"] = cfg.ref_actors;
    j["pool"] = pool_name(cfg.pool);
    j["route"] = route_name(cfg.route);
    j["beta"] = cfg.beta;
    j["share_team_pool"] = cfg.share_team_pool;
    j["strict_actor_count"] = cfg.strict_actor_count;
    return j;
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.feature_dim = j.at("feature_dim").get<std::size_t>();
    cfg.embed_dim = j.at("embed_dim").get<std::size_t>();
    cfg.attn_hidden = j.at("attn_hidden").get<std::size_t>();
    cfg.visual_heads = j.at("visual_heads").get<std::size_t>();
    cfg.relation_channels = j.at("relation_channels").get<std::size_t>();
    cfg.ref_actors = j.at("ref_actors").get<std::size_t>();
    cfg.pool = pool_from_name(j.at("pool").get<std::string>());
    cfg.route = route_from_name(j.at("route").get<std::string>());
    cfg.beta = j.at("beta").get<double>();
    cfg.share_team_pool = j.at("share_team_pool").get<bool>();
    cfg.strict_actor_count = j.at("strict_actor_count").get<bool>();
    return cfg;
}

}  // namespace

void Model::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write checkpoint: " + path);
    out.write(kCkptMagic, sizeof(kCkptMagic));
    write_u32(out, kCkptVersion);

    json header;
    header["task"] = task_to_json(task_);
    header["model"] = model_config_to_json(cfg_);
    const std::string header_text = header.dump();
    write_u64(out, header_text.size());
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));

    const auto params = named_parameters();
    write_u64(out, params.size());
    for (const auto& [name, tensor] : params) {
        write_u64(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        const Shape& shape = tensor.shape();
        write_u32(out, static_cast<std::uint32_t>(shape.size()));
        for (std::size_t d : shape) write_u64(out, d);
        write_doubles(out, tensor.data());
    }
    if (!out) throw ValidationError("write failed for checkpoint: " + path);
}

Model Model::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint: " + path);
    char magic[sizeof(kCkptMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0) {
        throw ValidationError("not a checkpoint file: " + path);
    }
    const std::uint32_t version = read_u32(in);
    if (version != kCkptVersion) {
        throw ValidationError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint64_t header_len = read_u64(in);
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(header_len));
    json header = json::parse(header_text);

    Model model = Model::init(task_from_json(header.at("task")),
                              model_config_from_json(header.at("model")), 0);

    const std::uint64_t count = read_u64(in);
    auto params = model.named_parameters();
    if (count != params.size()) {
        throw ValidationError("checkpoint holds " + std::to_string(count) + " tensors, model has " +
                              std::to_string(params.size()));
    }
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint64_t name_len = read_u64(in);
        std::string name(name_len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(name_len));
        const std::uint32_t order = read_u32(in);
        Shape shape(order);
        for (auto& d : shape) d = read_u64(in);
        if (name != params[i].first) {
            throw ValidationError("checkpoint tensor \"" + name + "\" does not match expected \"" +
                                  params[i].first + "\"");
        }
        Tensor& t = params[i].second;
        if (shape != t.shape()) {
            throw ValidationError("checkpoint tensor \"" + name + "\" has shape " + shape_str(shape) +
                                  ", model expects " + shape_str(t.shape()));
        }
        read_doubles(in, t.data());
    }
    if (!in) throw ValidationError("truncated checkpoint: " + path);
    return model;
}

}  // namespace decompl
