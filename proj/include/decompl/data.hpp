#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "decompl/coordinate.hpp"
#include "decompl/rng.hpp"
#include "decompl/task.hpp"

namespace decompl {

// One frame of one clip: boxes, precomputed per-actor features and
// per-actor action ids (-1 = unlabeled).
struct FrameRecord {
    BoxList boxes;
    std::vector<std::vector<double>> features;
    std::vector<int> actions;

    std::size_t actor_count() const { return boxes.size(); }
};

struct ClipRecord {
    std::string clip_id;
    std::string video_id;
    std::size_t group_label = 0;
    std::vector<FrameRecord> frames;
};

struct DatasetHeader {
    int version = 1;
    std::string format = "decompl-clips";
    std::size_t feature_dim = 0;
    // "normalized" (canonical) or "pixel"; pixel boxes are divided by the
    // declared image dimensions at load time.
    std::string coords = "normalized";
    double image_width = 0.0;
    double image_height = 0.0;
};

struct Dataset {
    DatasetHeader header;
    TaskConfig task;
    std::vector<ClipRecord> clips;

    std::size_t size() const { return clips.size(); }
};

// Box coordinates are snapped to this dyadic grid (about 1e-6, far finer
// than pixel precision) at ingestion and generation; on the grid 1 - x is
// exactly representable, which makes the horizontal flip a bit-exact
// involution.
double quantize_coord(double v);

// Throws ValidationError naming clip, frame and actor of the first
// violation.
void validate_clip(const ClipRecord& clip, const TaskConfig& task, std::size_t feature_dim);

// Newline-delimited JSON, header record first. strict mode aborts on the
// first malformed record; lenient mode skips it and appends a message to
// *warnings.
Dataset load_dataset(const std::string& path, bool strict = true,
                     std::vector<std::string>* warnings = nullptr);

// Canonical writer: normalized coordinates, stable key order. Feeding its
// output back through load_dataset and save_dataset reproduces the file
// byte for byte.
void save_dataset(const Dataset& dataset, const std::string& path);

// ---- annotation diffs -----------------------------------------------------

struct DiffEntry {
    std::string video_id;
    std::string clip_id;
    std::string op;  // "relabel" | "remove"
    std::string old_label;
    std::string new_label;  // relabel only
};

struct AnnotationDiff {
    std::vector<DiffEntry> entries;
};

// CSV with header "video_id,clip_id,op,old_label,new_label".
AnnotationDiff load_diff(const std::string& path);
void save_diff(const AnnotationDiff& diff, const std::string& path);

struct ChangeReport {
    std::map<std::pair<std::string, std::string>, std::size_t> relabels;  // (old, new) -> count
    std::size_t relabel_total = 0;
    std::size_t removal_total = 0;
};

// Validates every entry against the current dataset before touching it:
// unknown (video_id, clip_id) raises DiffError, an old_label that no longer
// matches raises StalenessError (so a diff cannot be applied twice).
ChangeReport apply_diff(Dataset& dataset, const AnnotationDiff& diff);

// Clip count per group label, in vocabulary order.
std::vector<std::size_t> label_stats(const Dataset& dataset);

// Aligned text table; pass `after` for a before/after comparison.
std::string stats_table(const TaskConfig& task, const std::vector<std::size_t>& before,
                        const std::vector<std::size_t>* after = nullptr);

// Horizontal flip: (x1, y1, x2, y2) -> (1 - x2, y1, 1 - x1, y2), side
// component of the group label swapped, features and actions untouched.
// Volleyball mode only; an involution on (frame, label).
std::pair<FrameRecord, std::size_t> flip_augment(const FrameRecord& frame,
                                                 std::size_t group_label,
                                                 const TaskConfig& task);

// Uniform frame choice; deterministic given the rng state.
const FrameRecord& sample_frame(const ClipRecord& clip, Rng& rng);

}  // namespace decompl
