#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "decompl/data.hpp"
#include "decompl/task.hpp"

namespace decompl {

// Desk-scale synthetic volleyball-like data with a known generative rule,
// so training, ablation ordering and both branches' signal can be verified
// without external datasets. Geometry encodes (side, activity); features
// encode individual actions via fixed class prototypes.
struct SynthConfig {
    std::uint64_t seed = 7;
    std::size_t clips_per_class = 50;
    std::size_t actors = 12;      // N, even
    std::size_t frames = 10;      // T
    std::size_t feature_dim = 128;
    double feature_noise = 0.5;   // sigma of the isotropic feature noise
    double position_jitter = 0.05;
    double signal_strength = 2.0; // prototype scale
};

// Unit-norm prototype directions, one per individual action. Derived from a
// fixed master seed (not cfg.seed) so independently generated datasets of
// the same feature width share feature semantics.
std::vector<std::vector<double>> action_prototypes(std::size_t feature_dim, std::size_t count);

// The signature individual action of a team activity (vocabulary ids):
// set -> setting, spike -> spiking, pass -> digging, win-point -> standing.
std::size_t signature_action(std::size_t team_id);

Dataset generate(const SynthConfig& cfg, const TaskConfig& task);

// Accuracy of the generative-rule oracle (nearest signature prototype picks
// the key actor and the activity; the key actor's court half gives the
// side; frame votes are averaged). Upper-bounds any model on this data.
double oracle_accuracy(const Dataset& dataset);

// True when the frame's boxes satisfy the class-conditioned geometry rules
// for (side, team) within `tolerance` (use position jitter plus slack).
bool geometry_consistent(const FrameRecord& frame, std::size_t side_id, std::size_t team_id,
                         const TaskConfig& task, double tolerance);

}  // namespace decompl
