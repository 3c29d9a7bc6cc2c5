#include "decompl/data.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "decompl/errors.hpp"

namespace decompl {

using nlohmann::json;

double quantize_coord(double v) {
    constexpr double kGrid = 1048576.0;  // 2^20
    return std::nearbyint(v * kGrid) / kGrid;
}

void validate_clip(const ClipRecord& clip, const TaskConfig& task, std::size_t feature_dim) {
    const std::string where = "clip \"" + clip.clip_id + "\"";
    if (clip.clip_id.empty()) throw ValidationError("clip with empty clip_id");
    if (clip.frames.empty()) throw ValidationError(where + ": no frames");
    if (clip.group_label >= task.group_count()) {
        throw ValidationError(where + ": group label id " + std::to_string(clip.group_label) +
                              " outside the vocabulary");
    }
    const std::size_t actors = clip.frames.front().actor_count();
    for (std::size_t f = 0; f < clip.frames.size(); ++f) {
        const FrameRecord& frame = clip.frames[f];
        const std::string at = where + ", frame " + std::to_string(f);
        if (frame.actor_count() != actors) {
            throw ValidationError(at + ": actor count differs from the first frame");
        }
        if (frame.features.size() != actors || frame.actions.size() != actors) {
            throw ValidationError(at + ": boxes, features and actions must have equal length");
        }
        for (std::size_t a = 0; a < actors; ++a) {
            const auto& b = frame.boxes[a];
            for (double c : b) {
                if (!std::isfinite(c) || c < 0.0 || c > 1.0) {
                    throw ValidationError(at + ", actor " + std::to_string(a) +
                                          ": box coordinate outside [0, 1]");
                }
            }
            if (!(b[0] < b[2]) || !(b[1] < b[3])) {
                throw ValidationError(at + ", actor " + std::to_string(a) +
                                      ": box must satisfy x1 < x2 and y1 < y2");
            }
            if (frame.features[a].size() != feature_dim) {
                throw ValidationError(at + ", actor " + std::to_string(a) + ": expected " +
                                      std::to_string(feature_dim) + " features, got " +
                                      std::to_string(frame.features[a].size()));
            }
            for (double v : frame.features[a]) {
                if (!std::isfinite(v)) {
                    throw ValidationError(at + ", actor " + std::to_string(a) +
                                          ": non-finite feature value");
                }
            }
            const int action = frame.actions[a];
            if (action < -1 || action >= static_cast<int>(task.individual_count())) {
                throw ValidationError(at + ", actor " + std::to_string(a) +
                                      ": action id " + std::to_string(action) + " out of range");
            }
        }
    }
    if (task.mode == Mode::volleyball && task.fixed_actors != 0 && actors != task.fixed_actors) {
        throw ValidationError(where + ": expected " + std::to_string(task.fixed_actors) +
                              " actors, got " + std::to_string(actors));
    }
}

namespace {

std::vector<std::string> string_list(const json& j, const char* key) {
    std::vector<std::string> out;
    for (const auto& v : j.at(key)) out.push_back(v.get<std::string>());
    return out;
}

TaskConfig task_from_header(const json& j) {
    TaskConfig task;
    task.mode = mode_from_name(j.at("mode").get<std::string>());
    task.group_labels = string_list(j, "group_labels");
    task.individual_labels = string_list(j, "individual_labels");
    if (task.mode == Mode::volleyball) {
        task.side_labels = string_list(j, "side_labels");
        task.team_labels = string_list(j, "team_labels");
        task.fixed_actors = j.value("fixed_actors", 12u);
    } else {
        task.fixed_actors = j.value("fixed_actors", 0u);
    }
    task.validate();
    return task;
}

ClipRecord clip_from_json(const json& j, const Dataset& dataset, double sx, double sy) {
    ClipRecord clip;
    clip.clip_id = j.at("clip_id").get<std::string>();
    clip.video_id = j.at("video_id").get<std::string>();
    clip.group_label = dataset.task.group_id(j.at("group_label").get<std::string>());
    for (const auto& fj : j.at("frames")) {
        FrameRecord frame;
        for (const auto& bj : fj.at("boxes")) {
            if (bj.size() != 4) throw ParseError("box must have four coordinates");
            frame.boxes.push_back({quantize_coord(bj[0].get<double>() * sx),
                                   quantize_coord(bj[1].get<double>() * sy),
                                   quantize_coord(bj[2].get<double>() * sx),
                                   quantize_coord(bj[3].get<double>() * sy)});
        }
        for (const auto& vj : fj.at("features")) {
            frame.features.push_back(vj.get<std::vector<double>>());
        }
        frame.actions = fj.at("actions").get<std::vector<int>>();
        clip.frames.push_back(std::move(frame));
    }
    return clip;
}

}  // namespace

Dataset load_dataset(const std::string& path, bool strict, std::vector<std::string>* warnings) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open dataset file: " + path);

    Dataset dataset;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    double sx = 1.0, sy = 1.0;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            const std::string msg = "line " + std::to_string(line_no) + ": " + e.what();
            if (strict) throw ParseError(msg);
            if (warnings) warnings->push_back(msg);
            continue;
        }
        try {
            const std::string type = j.at("type").get<std::string>();
            if (type == "header") {
                if (have_header) throw ParseError("duplicate header record");
                dataset.header.version = j.at("version").get<int>();
                dataset.header.format = j.at("format").get<std::string>();
                if (dataset.header.format != "decompl-clips") {
                    throw ParseError("unknown format \"" + dataset.header.format + "\"");
                }
                dataset.header.feature_dim = j.at("feature_dim").get<std::size_t>();
                dataset.header.coords = j.value("coords", "normalized");
                dataset.header.image_width = j.value("image_width", 0.0);
                dataset.header.image_height = j.value("image_height", 0.0);
                if (dataset.header.coords == "pixel") {
                    if (dataset.header.image_width <= 0.0 || dataset.header.image_height <= 0.0) {
                        throw ParseError("pixel coordinates need positive image dimensions");
                    }
                    sx = 1.0 / dataset.header.image_width;
                    sy = 1.0 / dataset.header.image_height;
                }
                dataset.task = task_from_header(j);
                have_header = true;
            } else if (type == "clip") {
                if (!have_header) throw ParseError("clip record before header");
                ClipRecord clip = clip_from_json(j, dataset, sx, sy);
                validate_clip(clip, dataset.task, dataset.header.feature_dim);
                dataset.clips.push_back(std::move(clip));
            } else {
                throw ParseError("unknown record type \"" + type + "\"");
            }
        } catch (const json::exception& e) {
            const std::string msg = "line " + std::to_string(line_no) + ": " + e.what();
            if (strict) throw ParseError(msg);
            if (warnings) warnings->push_back(msg);
        } catch (const LabelError& e) {
            const std::string msg = "line " + std::to_string(line_no) + ": " + e.what();
            if (strict) throw LabelError(msg);
            if (warnings) warnings->push_back(msg);
        } catch (const ValidationError& e) {
            const std::string msg = "line " + std::to_string(line_no) + ": " + e.what();
            if (strict) throw ValidationError(msg);
            if (warnings) warnings->push_back(msg);
        }
    }

    if (!have_header) {
        if (line_no == 0 || dataset.clips.empty()) {
            if (warnings) warnings->push_back("empty dataset file: " + path);
            dataset.task = TaskConfig::volleyball();
            return dataset;
        }
    }
    // Boxes are normalized from here on.
    dataset.header.coords = "normalized";
    return dataset;
}

namespace {

json header_to_json(const Dataset& dataset) {
    json j;
    j["type"] = "header";
    j["format"] = "decompl-clips";
    j["version"] = dataset.header.version;
    j["feature_dim"] = dataset.header.feature_dim;
    j["coords"] = "normalized";
    j["mode"] = mode_name(dataset.task.mode);
    j["group_labels"] = dataset.task.group_labels;
    j["individual_labels"] = dataset.task.individual_labels;
    if (dataset.task.mode == Mode::volleyball) {
        j["side_labels"] = dataset.task.side_labels;
        j["team_labels"] = dataset.task.team_labels;
        j["fixed_actors"] = dataset.task.fixed_actors;
    }
    return j;
}

json clip_to_json(const ClipRecord& clip, const TaskConfig& task) {
    json j;
    j["type"] = "clip";
    j["clip_id"] = clip.clip_id;
    j["video_id"] = clip.video_id;
    j["group_label"] = task.group_name(clip.group_label);
    json frames = json::array();
    for (const FrameRecord& frame : clip.frames) {
        json fj;
        json boxes = json::array();
        for (const auto& b : frame.boxes) boxes.push_back({b[0], b[1], b[2], b[3]});
        fj["boxes"] = std::move(boxes);
        fj["features"] = frame.features;
        fj["actions"] = frame.actions;
        frames.push_back(std::move(fj));
    }
    j["frames"] = std::move(frames);
    return j;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write dataset file: " + path);
    out << header_to_json(dataset).dump() << "\n";
    for (const ClipRecord& clip : dataset.clips) {
        out << clip_to_json(clip, dataset.task).dump() << "\n";
    }
    if (!out) throw ValidationError("write failed for dataset file: " + path);
}

// ---- annotation diffs -------------------------------------------------------

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

constexpr const char* kDiffHeader = "video_id,clip_id,op,old_label,new_label";

}  // namespace

AnnotationDiff load_diff(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open diff file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("diff file is empty: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kDiffHeader) {
        throw ParseError("diff header must be \"" + std::string(kDiffHeader) + "\"");
    }

    AnnotationDiff diff;
    std::unordered_set<std::string> seen;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv(line);
        if (fields.size() != 5) {
            throw ParseError("diff line " + std::to_string(line_no) + ": expected 5 fields, got " +
                             std::to_string(fields.size()));
        }
        DiffEntry entry{fields[0], fields[1], fields[2], fields[3], fields[4]};
        if (entry.op != "relabel" && entry.op != "remove") {
            throw ParseError("diff line " + std::to_string(line_no) + ": op must be relabel or remove");
        }
        if (entry.op == "relabel") {
            if (entry.new_label.empty()) {
                throw ParseError("diff line " + std::to_string(line_no) + ": relabel needs new_label");
            }
            if (entry.old_label == entry.new_label) {
                throw ParseError("diff line " + std::to_string(line_no) + ": relabel must change the label");
            }
        } else if (!entry.new_label.empty()) {
            throw ParseError("diff line " + std::to_string(line_no) + ": remove must leave new_label empty");
        }
        const std::string key = entry.video_id + "\x1f" + entry.clip_id;
        if (!seen.insert(key).second) {
            throw ParseError("diff line " + std::to_string(line_no) + ": duplicate clip (" +
                             entry.video_id + ", " + entry.clip_id + ")");
        }
        diff.entries.push_back(std::move(entry));
    }
    return diff;
}

void save_diff(const AnnotationDiff& diff, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write diff file: " + path);
    out << kDiffHeader << "\n";
    for (const DiffEntry& e : diff.entries) {
        out << e.video_id << "," << e.clip_id << "," << e.op << "," << e.old_label << ","
            << e.new_label << "\n";
    }
}

ChangeReport apply_diff(Dataset& dataset, const AnnotationDiff& diff) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < dataset.clips.size(); ++i) {
        index[dataset.clips[i].video_id + "\x1f" + dataset.clips[i].clip_id] = i;
    }

    // Validate everything first so a failing diff leaves the dataset intact.
    struct PlannedOp {
        std::size_t clip_index;
        bool remove;
        std::size_t new_label;
    };
    std::vector<PlannedOp> plan;
    plan.reserve(diff.entries.size());
    for (const DiffEntry& e : diff.entries) {
        auto it = index.find(e.video_id + "\x1f" + e.clip_id);
        if (it == index.end()) {
            throw DiffError("diff refers to unknown clip (" + e.video_id + ", " + e.clip_id + ")");
        }
        const ClipRecord& clip = dataset.clips[it->second];
        const std::string& current = dataset.task.group_name(clip.group_label);
        if (current != e.old_label) {
            throw StalenessError("clip (" + e.video_id + ", " + e.clip_id + ") is labeled \"" +
                                 current + "\", diff expects \"" + e.old_label +
                                 "\" (diff already applied?)");
        }
        PlannedOp op;
        op.clip_index = it->second;
        op.remove = e.op == "remove";
        op.new_label = op.remove ? 0 : dataset.task.group_id(e.new_label);
        plan.push_back(op);
    }

    ChangeReport report;
    std::vector<bool> removed(dataset.clips.size(), false);
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const DiffEntry& e = diff.entries[i];
        const PlannedOp& op = plan[i];
        if (op.remove) {
            removed[op.clip_index] = true;
            ++report.removal_total;
        } else {
            dataset.clips[op.clip_index].group_label = op.new_label;
            ++report.relabels[{e.old_label, e.new_label}];
            ++report.relabel_total;
        }
    }
    if (report.removal_total > 0) {
        std::vector<ClipRecord> kept;
        kept.reserve(dataset.clips.size() - report.removal_total);
        for (std::size_t i = 0; i < dataset.clips.size(); ++i) {
            if (!removed[i]) kept.push_back(std::move(dataset.clips[i]));
        }
        dataset.clips = std::move(kept);
    }
    return report;
}

std::vector<std::size_t> label_stats(const Dataset& dataset) {
    std::vector<std::size_t> counts(dataset.task.group_count(), 0);
    for (const ClipRecord& clip : dataset.clips) ++counts[clip.group_label];
    return counts;
}

std::string stats_table(const TaskConfig& task, const std::vector<std::size_t>& before,
                        const std::vector<std::size_t>* after) {
    std::size_t width = 20;
    for (const auto& name : task.group_labels) width = std::max(width, name.size() + 2);
    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(width)) << "Group activity class"
        << std::right << std::setw(8) << (after ? "Before" : "Count");
    if (after) out << std::setw(8) << "After";
    out << "\n";
    std::size_t total_before = 0, total_after = 0;
    for (std::size_t g = 0; g < task.group_count(); ++g) {
        out << std::left << std::setw(static_cast<int>(width)) << task.group_labels[g]
            << std::right << std::setw(8) << before[g];
        total_before += before[g];
        if (after) {
            out << std::setw(8) << (*after)[g];
            total_after += (*after)[g];
        }
        out << "\n";
    }
    out << std::left << std::setw(static_cast<int>(width)) << "total"
        << std::right << std::setw(8) << total_before;
    if (after) out << std::setw(8) << total_after;
    out << "\n";
    return out.str();
}

std::pair<FrameRecord, std::size_t> flip_augment(const FrameRecord& frame,
                                                 std::size_t group_label,
                                                 const TaskConfig& task) {
    if (task.mode != Mode::volleyball) {
        throw ContractError("flip_augment: volleyball mode only");
    }
    FrameRecord flipped = frame;
    for (auto& b : flipped.boxes) {
        const double x1 = b[0], x2 = b[2];
        b[0] = 1.0 - x2;
        b[2] = 1.0 - x1;
    }
    return {std::move(flipped), task.flip_side(group_label)};
}

const FrameRecord& sample_frame(const ClipRecord& clip, Rng& rng) {
    if (clip.frames.empty()) throw ValidationError("sample_frame: clip \"" + clip.clip_id +
                                                   "\" has no frames");
    return clip.frames[rng.index(clip.frames.size())];
}

}  // namespace decompl
