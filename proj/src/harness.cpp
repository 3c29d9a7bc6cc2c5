#include "decompl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "decompl/errors.hpp"
#include "decompl/flops.hpp"
#include "decompl/optim.hpp"

namespace decompl {

void TrainConfig::validate() const {
    if (epochs == 0 || batch_size == 0) throw ConfigError("train: epochs and batch size must be positive");
    if (base_lr <= 0.0) throw ConfigError("train: base learning rate must be positive");
    if (decay_period == 0 || decay_factor <= 0.0) throw ConfigError("train: bad decay schedule");
    if (flip_prob < 0.0 || flip_prob > 1.0) throw ConfigError("train: flip probability must lie in [0, 1]");
    if (holdout_fraction < 0.0 || holdout_fraction >= 1.0) {
        throw ConfigError("train: holdout fraction must lie in [0, 1)");
    }
    if (eval_every == 0) throw ConfigError("train: eval_every must be positive");
}

namespace {

double holdout_accuracy(const Model& model, const Dataset& data,
                        const std::vector<std::size_t>& indices) {
    if (indices.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t idx : indices) {
        if (model.predict_clip(data.clips[idx]).group == data.clips[idx].group_label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(indices.size());
}

std::vector<std::vector<double>> snapshot(const std::vector<Tensor>& params) {
    std::vector<std::vector<double>> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.data());
    return out;
}

void restore(std::vector<Tensor>& params, const std::vector<std::vector<double>>& values) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].data() = values[i];
}

}  // namespace

TrainResult train(const Dataset& data, Model& model, const TrainConfig& cfg) {
    cfg.validate();
    if (data.clips.empty()) throw ValidationError("train: empty dataset");
    if (data.task.mode != model.task().mode) {
        throw ConfigError("train: dataset mode does not match the model");
    }
    const bool volleyball = model.task().mode == Mode::volleyball;

    Rng rng(cfg.seed);

    // Seeded holdout split for best-checkpoint selection.
    std::vector<std::size_t> indices(data.clips.size());
    std::iota(indices.begin(), indices.end(), 0);
    rng.shuffle(indices);
    const std::size_t holdout = static_cast<std::size_t>(
        std::floor(cfg.holdout_fraction * static_cast<double>(indices.size())));
    std::vector<std::size_t> val_idx(indices.begin(), indices.begin() + holdout);
    std::vector<std::size_t> train_idx(indices.begin() + holdout, indices.end());
    if (train_idx.empty()) throw ConfigError("train: holdout fraction leaves no training clips");

    auto params = model.parameters();
    AdamState adam(params, cfg.base_lr);

    TrainResult result;
    std::vector<std::vector<double>> best_params = snapshot(params);
    double best_acc = -1.0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_schedule(static_cast<long long>(epoch), cfg.base_lr,
                                      cfg.decay_period, cfg.decay_factor);
        rng.shuffle(train_idx);

        EpochLog log;
        log.epoch = epoch;
        log.lr = lr;
        std::size_t frames_seen = 0;

        for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, train_idx.size());
            model.zero_grad();
            Tensor batch_loss;
            for (std::size_t b = start; b < stop; ++b) {
                const ClipRecord& clip = data.clips[train_idx[b]];
                const FrameRecord& picked = sample_frame(clip, rng);
                std::size_t label = clip.group_label;
                FrameRecord flipped;
                const FrameRecord* frame = &picked;
                if (volleyball && cfg.flip_prob > 0.0 && rng.coin(cfg.flip_prob)) {
                    std::tie(flipped, label) = flip_augment(picked, label, model.task());
                    frame = &flipped;
                }
                FrameLabels labels;
                labels.group = label;
                labels.actions = frame->actions;
                FramePrediction pred = model.forward_frame(*frame);
                LossBreakdown loss = model.total_loss(pred, labels);
                log.loss_individual += loss.individual;
                log.loss_group += loss.group;
                log.loss_side += loss.side;
                log.loss_team += loss.team;
                log.loss_total += loss.total.value();
                ++frames_seen;
                batch_loss = b == start ? loss.total : add(batch_loss, loss.total);
            }
            Tensor objective = scale(batch_loss, 1.0 / static_cast<double>(stop - start));
            objective.backward();
            adam.step(params, lr);
        }

        if (frames_seen > 0) {
            const double inv = 1.0 / static_cast<double>(frames_seen);
            log.loss_total *= inv;
            log.loss_individual *= inv;
            log.loss_group *= inv;
            log.loss_side *= inv;
            log.loss_team *= inv;
        }
        log.gate_side = model.gate_side();
        log.gate_group = model.gate_group();
        log.gate_team = model.gate_team();

        const bool last = epoch + 1 == cfg.epochs;
        if (!val_idx.empty() && ((epoch + 1) % cfg.eval_every == 0 || last)) {
            log.holdout_accuracy = holdout_accuracy(model, data, val_idx);
            if (log.holdout_accuracy > best_acc) {
                best_acc = log.holdout_accuracy;
                best_params = snapshot(params);
                result.best_epoch = epoch;
            }
        }
        result.log.push_back(log);
    }

    if (val_idx.empty()) {
        best_params = snapshot(params);
        best_acc = 0.0;
        result.best_epoch = cfg.epochs == 0 ? 0 : cfg.epochs - 1;
    }
    restore(params, best_params);
    result.best_holdout_accuracy = std::max(best_acc, 0.0);
    return result;
}

EvalReport evaluate(const Dataset& data, const Model& model) {
    if (data.clips.empty()) throw ValidationError("evaluate: empty dataset");
    if (data.task.mode != model.task().mode) {
        throw ConfigError("evaluate: dataset mode does not match the model");
    }
    const TaskConfig& task = model.task();
    const bool volleyball = task.mode == Mode::volleyball;
    const std::size_t classes = task.group_count();

    EvalReport report;
    report.clip_count = data.clips.size();
    report.confusion.assign(classes, std::vector<std::size_t>(classes, 0));

    std::size_t group_correct = 0, side_correct = 0, team_correct = 0;
    std::size_t individual_correct = 0, individual_total = 0, composed_agree = 0;

    for (const ClipRecord& clip : data.clips) {
        // One forward pass per frame feeds both the clip-level decision
        // (identical math to predict_clip) and the per-actor diagnostics.
        std::vector<std::vector<double>> group_probs, side_probs, team_probs;
        for (const FrameRecord& frame : clip.frames) {
            FramePrediction fp = model.forward_frame(frame);
            group_probs.push_back(softmax_probs(fp.group_logits));
            if (volleyball) {
                side_probs.push_back(softmax_probs(fp.side_logits));
                team_probs.push_back(softmax_probs(fp.team_logits));
            }
            const Tensor& logits = fp.individual_logits;
            const std::size_t ind_classes = logits.dim(1);
            for (std::size_t a = 0; a < frame.actor_count(); ++a) {
                if (frame.actions[a] < 0) continue;
                std::size_t best = 0;
                for (std::size_t c = 1; c < ind_classes; ++c) {
                    if (logits.at(a, c) > logits.at(a, best)) best = c;
                }
                if (best == static_cast<std::size_t>(frame.actions[a])) ++individual_correct;
                ++individual_total;
            }
        }
        const std::size_t predicted = average_probs_argmax(group_probs).first;
        ++report.confusion[clip.group_label][predicted];
        if (predicted == clip.group_label) ++group_correct;
        if (volleyball) {
            const auto [side, team] = task.decompose(clip.group_label);
            const std::size_t side_pred = average_probs_argmax(side_probs).first;
            const std::size_t team_pred = average_probs_argmax(team_probs).first;
            if (side_pred == side) ++side_correct;
            if (team_pred == team) ++team_correct;
            if (task.compose(side_pred, team_pred) == predicted) ++composed_agree;
        }
    }

    const double n = static_cast<double>(data.clips.size());
    report.group_accuracy = static_cast<double>(group_correct) / n;
    if (volleyball) {
        report.side_accuracy = static_cast<double>(side_correct) / n;
        report.team_accuracy = static_cast<double>(team_correct) / n;
        report.decomposition_agreement = static_cast<double>(composed_agree) / n;
    }
    if (individual_total > 0) {
        report.individual_accuracy =
            static_cast<double>(individual_correct) / static_cast<double>(individual_total);
    }

    report.precision.assign(classes, 0.0);
    report.recall.assign(classes, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
        std::size_t predicted = 0, support = 0;
        for (std::size_t r = 0; r < classes; ++r) {
            predicted += report.confusion[r][c];
            support += report.confusion[c][r];
        }
        report.precision[c] = predicted ? static_cast<double>(report.confusion[c][c]) /
                                              static_cast<double>(predicted)
                                        : 0.0;
        report.recall[c] = support ? static_cast<double>(report.confusion[c][c]) /
                                         static_cast<double>(support)
                                   : 0.0;
    }
    report.gate_side = model.gate_side();
    report.gate_group = model.gate_group();
    report.gate_team = model.gate_team();
    return report;
}

std::string EvalReport::to_text(const TaskConfig& task) const {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << "clips: " << clip_count << "\n";
    out << "group accuracy: " << group_accuracy << "\n";
    if (side_accuracy >= 0.0) out << "side accuracy: " << side_accuracy << "\n";
    if (team_accuracy >= 0.0) out << "team accuracy: " << team_accuracy << "\n";
    if (individual_accuracy >= 0.0) out << "individual accuracy: " << individual_accuracy << "\n";
    if (decomposition_agreement >= 0.0) {
        out << "side+team compose to the group argmax on " << decomposition_agreement
            << " of clips\n";
    }
    if (!std::isnan(gate_group)) {
        out << "fusion gates (side, group, team): " << gate_side << ", " << gate_group << ", "
            << gate_team << "\n";
    }
    std::size_t width = 12;
    for (const auto& name : task.group_labels) width = std::max(width, name.size() + 2);
    out << "per-class precision / recall:\n";
    for (std::size_t c = 0; c < task.group_count(); ++c) {
        out << "  " << std::left << std::setw(static_cast<int>(width)) << task.group_labels[c]
            << std::right << std::setprecision(4) << std::setw(8) << precision[c] << std::setw(8)
            << recall[c] << "\n";
    }
    out << "confusion matrix (rows = truth):\n";
    for (std::size_t r = 0; r < confusion.size(); ++r) {
        out << "  ";
        for (std::size_t c = 0; c < confusion[r].size(); ++c) {
            out << std::setw(5) << confusion[r][c];
        }
        out << "\n";
    }
    return out.str();
}

std::vector<AblationRow> run_ablations(const Dataset& train_data, const Dataset& test_data,
                                       const ModelConfig& base, const TrainConfig& tcfg,
                                       const std::vector<std::string>& variants,
                                       std::size_t num_seeds) {
    if (variants.empty()) throw ConfigError("run_ablations: no variants requested");
    if (num_seeds == 0) throw ConfigError("run_ablations: need at least one seed");
    std::vector<AblationRow> rows;
    for (const std::string& variant : variants) {
        ModelConfig cfg = ablation_variant(base, variant);  // validates the name
        AblationRow row;
        row.variant = variant;
        for (std::size_t seed = 0; seed < num_seeds; ++seed) {
            Model model = Model::init(train_data.task, cfg, seed);
            TrainConfig run_cfg = tcfg;
            run_cfg.seed = seed;
            train(train_data, model, run_cfg);
            row.per_seed.push_back(evaluate(test_data, model).group_accuracy);
        }
        row.mean_accuracy = std::accumulate(row.per_seed.begin(), row.per_seed.end(), 0.0) /
                            static_cast<double>(row.per_seed.size());
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
    std::size_t width = 10;
    for (const auto& row : rows) width = std::max(width, row.variant.size() + 2);
    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(width)) << "Ablation" << "Accuracy\n";
    out << std::fixed << std::setprecision(2);
    for (const auto& row : rows) {
        out << std::left << std::setw(static_cast<int>(width)) << row.variant
            << 100.0 * row.mean_accuracy << "\n";
    }
    return out.str();
}

// ---- profiler -----------------------------------------------------------------

namespace flopmodel {

std::uint64_t attention_pool(std::size_t n, std::size_t d, std::size_t hidden) {
    // matmul [n x d][d x L] + tanh + matmul [n x L][L x 1] + softmax + matmul [1 x n][n x d]
    return 2ull * n * d * hidden + n * hidden + 2ull * n * hidden + 4ull * n + 2ull * n * d;
}

std::uint64_t multi_head_pool(std::size_t n, std::size_t d, std::size_t hidden, std::size_t heads) {
    return heads * attention_pool(n, d, hidden) + linear(1, heads * d, d);
}

std::uint64_t baseline_pool(std::size_t n, std::size_t d, PoolKind kind) {
    return kind == PoolKind::mean ? static_cast<std::uint64_t>(n) * d + d
                                  : static_cast<std::uint64_t>(n) * d;
}

std::uint64_t linear(std::size_t rows, std::size_t in, std::size_t out) {
    return 2ull * rows * in * out + static_cast<std::uint64_t>(rows) * out;
}

std::uint64_t coordinate_features(std::size_t n, std::size_t channels, std::size_t ref_actors,
                                  std::size_t d) {
    const std::uint64_t diffs = 4ull * n * n;
    const std::uint64_t projection = n * (2ull * 1 * n * 1 * 4 + n);           // conv k=4 s=4
    const std::uint64_t relation = n * (2ull * channels * n * 1 * 3 + channels * n  // conv k=3 p=1
                                        + channels * n);                           // relu
    const std::uint64_t embed = linear(n, channels * ref_actors, d);
    return diffs + projection + relation + embed;
}

std::uint64_t fusion(std::size_t classes) {
    // sigmoid(lambda) + gate*visual + (1 - gate) + counter*coordinate + add
    return 1 + classes + 1 + classes + classes;
}

std::uint64_t embedding(std::size_t n, std::size_t feature_dim, std::size_t d) {
    return linear(n, feature_dim, d);
}

std::uint64_t forward_frame(const Model& model, std::size_t n, bool include_embedding) {
    const ModelConfig& cfg = model.config();
    const TaskConfig& task = model.task();
    const bool volleyball = task.mode == Mode::volleyball;
    const std::size_t d = cfg.embed_dim;

    std::uint64_t total = 0;
    if (include_embedding) total += embedding(n, cfg.feature_dim, d);
    total += linear(n, d, task.individual_count());

    const bool want_visual = cfg.route != FusionRoute::coordinate_only;
    const bool want_coord = cfg.route != FusionRoute::visual_only;
    const std::size_t visual_dim = volleyball ? 2 * d : d;

    if (want_visual) {
        if (volleyball) {
            const std::size_t left = n / 2, right = n - n / 2;
            if (cfg.pool == PoolKind::attention) {
                total += multi_head_pool(left, d, cfg.attn_hidden, cfg.visual_heads);
                total += multi_head_pool(right, d, cfg.attn_hidden, cfg.visual_heads);
            } else {
                total += baseline_pool(left, d, cfg.pool) + baseline_pool(right, d, cfg.pool);
            }
        } else {
            total += cfg.pool == PoolKind::attention
                         ? multi_head_pool(n, d, cfg.attn_hidden, cfg.visual_heads)
                         : baseline_pool(n, d, cfg.pool);
        }
        total += linear(1, visual_dim, task.group_count());
        if (volleyball) {
            total += linear(1, visual_dim, task.side_count());
            total += linear(1, visual_dim, task.team_count());
        }
    }
    if (want_coord) {
        total += coordinate_features(n, cfg.relation_channels, cfg.ref_actors, d);
        total += cfg.pool == PoolKind::attention ? attention_pool(n, d, cfg.attn_hidden)
                                                 : baseline_pool(n, d, cfg.pool);
        total += linear(1, d, task.group_count());
        if (volleyball) {
            total += linear(1, d, task.side_count());
            total += linear(1, d, task.team_count());
        }
    }
    if (cfg.route == FusionRoute::fused) {
        total += fusion(task.group_count());
        if (volleyball) total += fusion(task.side_count()) + fusion(task.team_count());
    }
    return total;
}

}  // namespace flopmodel

ProfileReport profile(const Model& model, std::size_t actors, std::size_t frames_per_clip) {
    const ModelConfig& cfg = model.config();
    const TaskConfig& task = model.task();
    const bool volleyball = task.mode == Mode::volleyball;
    const std::size_t d = cfg.embed_dim;
    const std::size_t n = actors;

    ProfileReport report;
    report.actors = n;
    report.frames_per_clip = frames_per_clip;

    // Parameter counts per component, from the named tensors.
    auto param_sum = [&model](const std::string& prefix) {
        std::size_t total = 0;
        for (const auto& [name, tensor] : model.named_parameters()) {
            if (name.rfind(prefix, 0) == 0) total += tensor.size();
        }
        return total;
    };

    const bool want_visual = cfg.route != FusionRoute::coordinate_only;
    const bool want_coord = cfg.route != FusionRoute::visual_only;

    if (want_visual) {
        std::uint64_t pool_flops;
        if (volleyball) {
            const std::size_t left = n / 2, right = n - n / 2;
            pool_flops = cfg.pool == PoolKind::attention
                             ? flopmodel::multi_head_pool(left, d, cfg.attn_hidden, cfg.visual_heads) +
                                   flopmodel::multi_head_pool(right, d, cfg.attn_hidden, cfg.visual_heads)
                             : flopmodel::baseline_pool(left, d, cfg.pool) +
                                   flopmodel::baseline_pool(right, d, cfg.pool);
        } else {
            pool_flops = cfg.pool == PoolKind::attention
                             ? flopmodel::multi_head_pool(n, d, cfg.attn_hidden, cfg.visual_heads)
                             : flopmodel::baseline_pool(n, d, cfg.pool);
        }
        report.breakdown.push_back({"visual pooling", param_sum("visual."), pool_flops});
        const std::size_t visual_dim = volleyball ? 2 * d : d;
        std::uint64_t head_flops = flopmodel::linear(1, visual_dim, task.group_count());
        if (volleyball) {
            head_flops += flopmodel::linear(1, visual_dim, task.side_count()) +
                          flopmodel::linear(1, visual_dim, task.team_count());
        }
        report.breakdown.push_back({"visual classifiers", param_sum("heads.visual."), head_flops});
    }
    if (want_coord) {
        report.breakdown.push_back(
            {"coordinate module", param_sum("coord.") - param_sum("coord.pool."),
             flopmodel::coordinate_features(n, cfg.relation_channels, cfg.ref_actors, d)});
        report.breakdown.push_back(
            {"coordinate pooling", param_sum("coord.pool."),
             cfg.pool == PoolKind::attention ? flopmodel::attention_pool(n, d, cfg.attn_hidden)
                                             : flopmodel::baseline_pool(n, d, cfg.pool)});
        std::uint64_t head_flops = flopmodel::linear(1, d, task.group_count());
        if (volleyball) {
            head_flops += flopmodel::linear(1, d, task.side_count()) +
                          flopmodel::linear(1, d, task.team_count());
        }
        report.breakdown.push_back({"coordinate classifiers", param_sum("heads.coord."), head_flops});
    }
    report.breakdown.push_back(
        {"individual classifier", param_sum("heads.individual."),
         flopmodel::linear(n, d, task.individual_count())});
    if (cfg.route == FusionRoute::fused) {
        std::uint64_t fusion_flops = flopmodel::fusion(task.group_count());
        if (volleyball) {
            fusion_flops += flopmodel::fusion(task.side_count()) + flopmodel::fusion(task.team_count());
        }
        report.breakdown.push_back({"fusion gates", param_sum("fusion."), fusion_flops});
    }

    for (const auto& entry : report.breakdown) {
        report.params_total += entry.params;
        report.flops_frame += entry.flops;
    }
    report.params_with_embedding = report.params_total + param_sum("embedding.");
    report.flops_clip = report.flops_frame * frames_per_clip;
    return report;
}

std::string ProfileReport::to_text() const {
    std::ostringstream out;
    std::size_t width = 24;
    for (const auto& e : breakdown) width = std::max(width, e.component.size() + 2);
    out << std::left << std::setw(static_cast<int>(width)) << "Component" << std::right
        << std::setw(12) << "#Params" << std::setw(16) << "FLOPs/frame" << "\n";
    for (const auto& e : breakdown) {
        out << std::left << std::setw(static_cast<int>(width)) << e.component << std::right
            << std::setw(12) << e.params << std::setw(16) << e.flops << "\n";
    }
    out << std::left << std::setw(static_cast<int>(width)) << "total (excl. embedding)" << std::right
        << std::setw(12) << params_total << std::setw(16) << flops_frame << "\n";
    out << "\n";
    out << std::fixed << std::setprecision(3);
    out << "#Params " << static_cast<double>(params_total) / 1e6 << "M    FLOPs "
        << static_cast<double>(flops_clip) / 1e9 << "G"
        << "  (" << frames_per_clip << "-frame clip decision at N=" << actors << ")\n";
    return out.str();
}

}  // namespace decompl
