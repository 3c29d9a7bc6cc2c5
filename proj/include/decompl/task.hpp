#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace decompl {

enum class Mode { volleyball, generic };

std::string mode_name(Mode mode);
Mode mode_from_name(const std::string& name);

// Label algebra for one task. In volleyball mode every group label must be
// the string "<side> <team>" and the (side, team) decomposition is a
// bijection onto the group vocabulary; generic mode carries only group and
// individual vocabularies and admits a free actor count.
struct TaskConfig {
    Mode mode = Mode::volleyball;
    std::vector<std::string> group_labels;
    std::vector<std::string> side_labels;
    std::vector<std::string> team_labels;
    std::vector<std::string> individual_labels;
    std::size_t fixed_actors = 12;  // 0 = free

    static TaskConfig volleyball();
    static TaskConfig generic(std::vector<std::string> groups,
                              std::vector<std::string> individuals);

    std::size_t group_count() const { return group_labels.size(); }
    std::size_t side_count() const { return side_labels.size(); }
    std::size_t team_count() const { return team_labels.size(); }
    std::size_t individual_count() const { return individual_labels.size(); }

    // Throws ConfigError when the vocabularies are inconsistent.
    void validate() const;

    std::size_t group_id(const std::string& label) const;      // LabelError if unknown
    const std::string& group_name(std::size_t id) const;

    // (side id, team id) of a group label; volleyball mode only.
    std::pair<std::size_t, std::size_t> decompose(std::size_t group_id) const;
    std::size_t compose(std::size_t side_id, std::size_t team_id) const;

    // Same team activity, opposite side.
    std::size_t flip_side(std::size_t group_id) const;
};

}  // namespace decompl
