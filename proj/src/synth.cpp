#include "decompl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "decompl/coordinate.hpp"
#include "decompl/errors.hpp"
#include "decompl/rng.hpp"

namespace decompl {

namespace {

// Geometry rule table. The coordinate branch only sees pairwise box
// differences, so every class marker is relative: a tight pair (set), a
// large gap in front of the team (spike), a large gap behind it (pass) or
// the whole team collapsing into a cluster (win). The team that carries
// the marker identifies the side through the sorted actor ranks. Values
// are for a left-side acting team; the right side mirrors x -> 1 - x.
constexpr double kZoneLo = 0.08, kZoneHi = 0.42;      // team zone
constexpr double kSlotJitter = 0.012;                 // grid slot placement noise
constexpr double kYLo = 0.15, kYHi = 0.85;
constexpr double kPairGapMax = 0.010;                 // set: pair x-distance
constexpr double kPairYGap = 0.010;
constexpr double kSpikeKeyLo = 0.425, kSpikeKeyHi = 0.445;  // near the midline
constexpr double kSpikeZoneHi = 0.28;                 // teammates pushed back
constexpr double kPassKeyLo = 0.045, kPassKeyHi = 0.065;    // deep back-court
constexpr double kPassZoneLo = 0.22;                  // teammates pushed forward
constexpr double kWinCenterXLo = 0.18, kWinCenterXHi = 0.32;
constexpr double kWinCenterYLo = 0.35, kWinCenterYHi = 0.65;
constexpr double kWinRadius = 0.04;                   // cluster half-extent

constexpr double kHalfWidthMin = 0.018, kHalfWidthMax = 0.030;
constexpr double kHalfHeightMin = 0.035, kHalfHeightMax = 0.060;

constexpr std::uint64_t kPrototypeSeed = 0x5e7d3c0ffee12ull;

double mirror_x(double x, bool right) { return right ? 1.0 - x : x; }

double clamp(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

struct TeamIds {
    std::size_t set, spike, pass, win;
};

TeamIds team_ids(const TaskConfig& task) {
    auto find = [&task](const char* name) {
        auto it = std::find(task.team_labels.begin(), task.team_labels.end(), name);
        if (it == task.team_labels.end()) {
            throw ConfigError(std::string("synth: team vocabulary lacks \"") + name + "\"");
        }
        return static_cast<std::size_t>(it - task.team_labels.begin());
    };
    return {find("set"), find("spike"), find("pass"), find("win-point")};
}

std::size_t individual_id(const TaskConfig& task, const char* name) {
    auto it = std::find(task.individual_labels.begin(), task.individual_labels.end(), name);
    if (it == task.individual_labels.end()) {
        throw ConfigError(std::string("synth: individual vocabulary lacks \"") + name + "\"");
    }
    return static_cast<std::size_t>(it - task.individual_labels.begin());
}

}  // namespace

std::vector<std::vector<double>> action_prototypes(std::size_t feature_dim, std::size_t count) {
    Rng rng(kPrototypeSeed);
    std::vector<std::vector<double>> protos(count);
    for (auto& p : protos) {
        p.resize(feature_dim);
        double norm2 = 0.0;
        for (auto& v : p) {
            v = rng.gaussian();
            norm2 += v * v;
        }
        const double inv = 1.0 / std::sqrt(norm2);
        for (auto& v : p) v *= inv;
    }
    return protos;
}

std::size_t signature_action(std::size_t team_id) {
    const TaskConfig task = TaskConfig::volleyball();
    const TeamIds teams = team_ids(task);
    if (team_id == teams.set) return individual_id(task, "setting");
    if (team_id == teams.spike) return individual_id(task, "spiking");
    if (team_id == teams.pass) return individual_id(task, "digging");
    if (team_id == teams.win) return individual_id(task, "standing");
    throw LabelError("signature_action: unknown team id " + std::to_string(team_id));
}

namespace {

struct ActorPlan {
    double cx = 0.0, cy = 0.0;  // base center before per-frame jitter
    double hw = 0.0, hh = 0.0;  // half extents
    std::size_t action = 0;
};

// Grid slots across [lo, hi] with slight placement noise; keeps team
// spacing regular so the class markers stand out from sampling noise.
std::vector<double> grid_positions(std::size_t count, double lo, double hi, Rng& rng) {
    std::vector<double> xs(count);
    const double step = (hi - lo) / static_cast<double>(count);
    for (std::size_t k = 0; k < count; ++k) {
        xs[k] = lo + (static_cast<double>(k) + 0.5) * step + rng.uniform(-kSlotJitter, kSlotJitter);
    }
    return xs;
}

// Places one team's base positions. Marker layout depends on whether this
// side acts and on the team activity.
std::vector<ActorPlan> plan_side(bool right, bool acting, std::size_t team_id,
                                 const TeamIds& teams, std::size_t per_side,
                                 std::size_t key_slot, Rng& rng) {
    std::vector<ActorPlan> side(per_side);
    std::vector<double> xs;
    std::vector<double> ys(per_side);
    for (auto& y : ys) y = rng.uniform(kYLo, kYHi);

    if (!acting) {
        xs = grid_positions(per_side, kZoneLo, kZoneHi, rng);
    } else if (team_id == teams.win) {
        const double cx = rng.uniform(kWinCenterXLo, kWinCenterXHi);
        const double cy = rng.uniform(kWinCenterYLo, kWinCenterYHi);
        xs.resize(per_side);
        for (std::size_t k = 0; k < per_side; ++k) {
            xs[k] = cx + rng.uniform(-kWinRadius, kWinRadius);
            ys[k] = cy + rng.uniform(-kWinRadius, kWinRadius);
        }
    } else if (team_id == teams.spike) {
        xs = grid_positions(per_side - 1, kZoneLo, kSpikeZoneHi, rng);
        xs.insert(xs.begin() + static_cast<std::ptrdiff_t>(key_slot),
                  rng.uniform(kSpikeKeyLo, kSpikeKeyHi));
    } else if (team_id == teams.pass) {
        xs = grid_positions(per_side - 1, kPassZoneLo, kZoneHi, rng);
        xs.insert(xs.begin() + static_cast<std::ptrdiff_t>(key_slot),
                  rng.uniform(kPassKeyLo, kPassKeyHi));
    } else {  // set: a tight mid-court pair, same height
        xs = grid_positions(per_side - 1, kZoneLo, kZoneHi, rng);
        const std::size_t partner_slot = (per_side - 1) / 2;  // mid-court
        const std::size_t partner = partner_slot >= key_slot ? partner_slot + 1 : partner_slot;
        xs.insert(xs.begin() + static_cast<std::ptrdiff_t>(key_slot),
                  xs[partner_slot] + rng.uniform(-kPairGapMax, kPairGapMax));
        ys[partner] = rng.uniform(0.35, 0.65);
        ys[key_slot] = clamp(ys[partner] + rng.uniform(-kPairYGap, kPairYGap), kYLo, kYHi);
    }

    for (std::size_t k = 0; k < per_side; ++k) {
        side[k].cx = mirror_x(xs[k], right);
        side[k].cy = ys[k];
        side[k].hw = rng.uniform(kHalfWidthMin, kHalfWidthMax);
        side[k].hh = rng.uniform(kHalfHeightMin, kHalfHeightMax);
    }
    return side;
}

std::vector<ActorPlan> plan_clip(std::size_t side_id, std::size_t team_id, const SynthConfig& cfg,
                                 const TaskConfig& task, const TeamIds& teams,
                                 const std::vector<std::size_t>& neutral_pool, Rng& rng) {
    const std::size_t per_side = cfg.actors / 2;
    const bool acting_right = task.side_labels[side_id] == "right";
    const std::size_t key_slot = rng.index(per_side);

    std::vector<ActorPlan> plan;
    plan.reserve(cfg.actors);
    for (int side_pass = 0; side_pass < 2; ++side_pass) {
        const bool right = side_pass == 1;
        const bool acting = right == acting_right;
        auto side = plan_side(right, acting, team_id, teams, per_side, key_slot, rng);
        for (std::size_t k = 0; k < per_side; ++k) {
            side[k].action = acting && k == key_slot
                                 ? signature_action(team_id)
                                 : neutral_pool[rng.index(neutral_pool.size())];
            plan.push_back(side[k]);
        }
    }
    // Present actors in a scrambled order so nothing downstream can rely on
    // generation order; the same order is used for every frame of the clip.
    std::vector<std::size_t> order(plan.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<ActorPlan> shuffled;
    shuffled.reserve(plan.size());
    for (std::size_t idx : order) shuffled.push_back(plan[idx]);
    return shuffled;
}

FrameRecord render_frame(const std::vector<ActorPlan>& plan, const SynthConfig& cfg,
                         const std::vector<std::vector<double>>& protos, Rng& rng) {
    FrameRecord frame;
    frame.boxes.reserve(plan.size());
    frame.features.reserve(plan.size());
    frame.actions.reserve(plan.size());
    for (const ActorPlan& actor : plan) {
        double cx = actor.cx + rng.uniform(-cfg.position_jitter, cfg.position_jitter);
        double cy = actor.cy + rng.uniform(-cfg.position_jitter, cfg.position_jitter);
        cx = clamp(cx, actor.hw + 1e-3, 1.0 - actor.hw - 1e-3);
        cy = clamp(cy, actor.hh + 1e-3, 1.0 - actor.hh - 1e-3);
        frame.boxes.push_back({quantize_coord(cx - actor.hw), quantize_coord(cy - actor.hh),
                               quantize_coord(cx + actor.hw), quantize_coord(cy + actor.hh)});

        std::vector<double> feat(cfg.feature_dim);
        const auto& proto = protos[actor.action];
        for (std::size_t i = 0; i < cfg.feature_dim; ++i) {
            feat[i] = cfg.signal_strength * proto[i] + cfg.feature_noise * rng.gaussian();
        }
        frame.features.push_back(std::move(feat));
        frame.actions.push_back(static_cast<int>(actor.action));
    }
    return frame;
}

}  // namespace

Dataset generate(const SynthConfig& cfg, const TaskConfig& task) {
    if (task.mode != Mode::volleyball) {
        throw ConfigError("synth: generation is defined for volleyball mode");
    }
    task.validate();
    if (cfg.actors < 4 || cfg.actors % 2 != 0) {
        throw ConfigError("synth: actor count must be even and at least 4");
    }
    if (cfg.clips_per_class == 0 || cfg.frames == 0 || cfg.feature_dim == 0) {
        throw ConfigError("synth: clips_per_class, frames and feature_dim must be positive");
    }
    if (cfg.feature_noise < 0.0 || cfg.position_jitter < 0.0 || cfg.signal_strength <= 0.0) {
        throw ConfigError("synth: noise and jitter must be nonnegative, signal strength positive");
    }

    const TeamIds teams = team_ids(task);
    std::vector<std::size_t> signatures = {signature_action(teams.set), signature_action(teams.spike),
                                           signature_action(teams.pass), signature_action(teams.win)};
    std::vector<std::size_t> neutral_pool;
    for (std::size_t a = 0; a < task.individual_count(); ++a) {
        if (std::find(signatures.begin(), signatures.end(), a) == signatures.end()) {
            neutral_pool.push_back(a);
        }
    }
    if (neutral_pool.empty()) throw ConfigError("synth: no neutral individual actions available");

    const auto protos = action_prototypes(cfg.feature_dim, task.individual_count());
    Rng rng(cfg.seed);

    Dataset dataset;
    dataset.task = task;
    dataset.task.fixed_actors = cfg.actors;
    dataset.header.feature_dim = cfg.feature_dim;

    std::size_t serial = 0;
    for (std::size_t g = 0; g < task.group_count(); ++g) {
        const auto [side_id, team_id] = task.decompose(g);
        for (std::size_t k = 0; k < cfg.clips_per_class; ++k) {
            ClipRecord clip;
            std::ostringstream cid;
            cid << "clip_" << std::setfill('0') << std::setw(5) << serial++;
            clip.clip_id = cid.str();
            clip.video_id = "synthvid_" + std::to_string(g);
            clip.group_label = g;
            const auto plan = plan_clip(side_id, team_id, cfg, task, teams, neutral_pool, rng);
            clip.frames.reserve(cfg.frames);
            for (std::size_t f = 0; f < cfg.frames; ++f) {
                clip.frames.push_back(render_frame(plan, cfg, protos, rng));
            }
            dataset.clips.push_back(std::move(clip));
        }
    }
    return dataset;
}

double oracle_accuracy(const Dataset& dataset) {
    if (dataset.clips.empty()) throw ValidationError("oracle_accuracy: empty dataset");
    const TaskConfig& task = dataset.task;
    const TeamIds teams = team_ids(task);
    const std::vector<std::size_t> team_order = {teams.set, teams.spike, teams.pass, teams.win};
    const auto protos = action_prototypes(dataset.header.feature_dim, task.individual_count());
    const auto left_it = std::find(task.side_labels.begin(), task.side_labels.end(), "left");
    if (left_it == task.side_labels.end()) {
        throw ConfigError("oracle_accuracy: side vocabulary lacks \"left\"");
    }
    const std::size_t left_id = static_cast<std::size_t>(left_it - task.side_labels.begin());
    const std::size_t right_id = 1 - left_id;

    std::size_t correct = 0;
    for (const ClipRecord& clip : dataset.clips) {
        std::vector<double> votes(task.group_count(), 0.0);
        for (const FrameRecord& frame : clip.frames) {
            double best = -1e300;
            std::size_t best_actor = 0, best_team = team_order[0];
            for (std::size_t a = 0; a < frame.actor_count(); ++a) {
                for (std::size_t t : team_order) {
                    const auto& proto = protos[signature_action(t)];
                    double dot = 0.0;
                    for (std::size_t i = 0; i < proto.size(); ++i) {
                        dot += frame.features[a][i] * proto[i];
                    }
                    if (dot > best) {
                        best = dot;
                        best_actor = a;
                        best_team = t;
                    }
                }
            }
            const bool left = box_center_x(frame.boxes[best_actor]) < 0.5;
            votes[task.compose(left ? left_id : right_id, best_team)] += 1.0;
        }
        std::size_t pred = 0;
        for (std::size_t g = 1; g < votes.size(); ++g) {
            if (votes[g] > votes[pred]) pred = g;
        }
        if (pred == clip.group_label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(dataset.clips.size());
}

bool geometry_consistent(const FrameRecord& frame, std::size_t side_id, std::size_t team_id,
                         const TaskConfig& task, double tolerance) {
    const TeamIds teams = team_ids(task);
    const bool acting_right = task.side_labels.at(side_id) == "right";
    const std::size_t signature = signature_action(team_id);

    std::vector<std::size_t> keys;
    for (std::size_t a = 0; a < frame.actor_count(); ++a) {
        if (frame.actions[a] == static_cast<int>(signature)) keys.push_back(a);
    }
    if (keys.size() != 1) return false;
    const double key_x = box_center_x(frame.boxes[keys[0]]);
    const double key_y = box_center_y(frame.boxes[keys[0]]);
    if ((key_x > 0.5) != acting_right) return false;

    // The acting team's positions, front = toward the midline.
    std::vector<std::pair<double, double>> team;  // (distance from own baseline, y)
    double key_depth = 0.0;
    for (std::size_t a = 0; a < frame.actor_count(); ++a) {
        const double cx = box_center_x(frame.boxes[a]);
        if ((cx > 0.5) != acting_right) continue;
        const double depth = acting_right ? 1.0 - cx : cx;  // larger = closer to the net
        team.push_back({depth, box_center_y(frame.boxes[a])});
        if (a == keys[0]) key_depth = depth;
    }
    if (team.size() < 2) return false;
    std::sort(team.begin(), team.end());

    if (team_id == teams.win) {
        const double limit = 2.0 * kWinRadius + 2.0 * tolerance;
        for (std::size_t i = 0; i < team.size(); ++i) {
            for (std::size_t j = i + 1; j < team.size(); ++j) {
                if (std::abs(team[i].first - team[j].first) > limit) return false;
                if (std::abs(team[i].second - team[j].second) > limit) return false;
            }
        }
        return true;
    }
    if (team_id == teams.spike) {
        // key in front with a clear gap to the rest of the team
        if (std::abs(team.back().first - key_depth) > 1e-9) return false;
        const double gap = team.back().first - team[team.size() - 2].first;
        return gap >= (kSpikeKeyLo - kSpikeZoneHi - kSlotJitter) - 2.0 * tolerance;
    }
    if (team_id == teams.pass) {
        // key at the back with a clear gap
        if (std::abs(team.front().first - key_depth) > 1e-9) return false;
        const double gap = team[1].first - team.front().first;
        return gap >= (kPassZoneLo - kPassKeyHi - kSlotJitter) - 2.0 * tolerance;
    }
    if (team_id == teams.set) {
        // key forms a tight pair with its nearest teammate, same height
        double best = 1e9, best_x = 1e9, best_y = 1e9;
        for (std::size_t a = 0; a < frame.actor_count(); ++a) {
            if (a == keys[0]) continue;
            const double cx = box_center_x(frame.boxes[a]);
            if ((cx > 0.5) != acting_right) continue;
            const double dx = std::abs(cx - key_x);
            const double dy = std::abs(box_center_y(frame.boxes[a]) - key_y);
            if (std::max(dx, dy) < best) {
                best = std::max(dx, dy);
                best_x = dx;
                best_y = dy;
            }
        }
        return best_x <= kPairGapMax + 2.0 * tolerance && best_y <= kPairYGap + 2.0 * tolerance;
    }
    return false;
}

}  // namespace decompl
