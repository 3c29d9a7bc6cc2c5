#include "decompl/task.hpp"

#include <algorithm>
#include <set>

#include "decompl/errors.hpp"

namespace decompl {

std::string mode_name(Mode mode) {
    return mode == Mode::volleyball ? "volleyball" : "generic";
}

Mode mode_from_name(const std::string& name) {
    if (name == "volleyball") return Mode::volleyball;
    if (name == "generic") return Mode::generic;
    throw ConfigError("unknown mode: " + name);
}

TaskConfig TaskConfig::volleyball() {
    TaskConfig cfg;
    cfg.mode = Mode::volleyball;
    cfg.group_labels = {"right set",  "right spike", "right pass", "right win-point",
                        "left set",   "left spike",  "left pass",  "left win-point"};
    cfg.side_labels = {"left", "right"};
    cfg.team_labels = {"set", "spike", "pass", "win-point"};
    cfg.individual_labels = {"waiting", "setting", "digging",  "falling", "spiking",
                             "blocking", "jumping", "moving",  "standing"};
    cfg.fixed_actors = 12;
    cfg.validate();
    return cfg;
}

TaskConfig TaskConfig::generic(std::vector<std::string> groups,
                               std::vector<std::string> individuals) {
    TaskConfig cfg;
    cfg.mode = Mode::generic;
    cfg.group_labels = std::move(groups);
    cfg.individual_labels = std::move(individuals);
    cfg.fixed_actors = 0;
    cfg.validate();
    return cfg;
}

namespace {

void check_unique(const std::vector<std::string>& labels, const char* what) {
    std::set<std::string> seen(labels.begin(), labels.end());
    if (seen.size() != labels.size()) {
        throw ConfigError(std::string(what) + " vocabulary contains duplicates");
    }
}

}  // namespace

void TaskConfig::validate() const {
    if (group_labels.empty()) throw ConfigError("task: group vocabulary is empty");
    if (individual_labels.empty()) throw ConfigError("task: individual vocabulary is empty");
    check_unique(group_labels, "group");
    check_unique(individual_labels, "individual");
    if (mode == Mode::generic) return;

    check_unique(side_labels, "side");
    check_unique(team_labels, "team");
    if (side_labels.size() * team_labels.size() != group_labels.size()) {
        throw ConfigError("task: |group| must equal |side| * |team| in volleyball mode");
    }
    // Every (side, team) pair must be hit exactly once by decompose.
    std::set<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t g = 0; g < group_labels.size(); ++g) {
        pairs.insert(decompose(g));
    }
    if (pairs.size() != group_labels.size()) {
        throw ConfigError("task: group labels do not decompose bijectively onto (side, team)");
    }
}

std::size_t TaskConfig::group_id(const std::string& label) const {
    auto it = std::find(group_labels.begin(), group_labels.end(), label);
    if (it == group_labels.end()) throw LabelError("unknown group label: \"" + label + "\"");
    return static_cast<std::size_t>(it - group_labels.begin());
}

const std::string& TaskConfig::group_name(std::size_t id) const {
    if (id >= group_labels.size()) {
        throw LabelError("group id " + std::to_string(id) + " out of range");
    }
    return group_labels[id];
}

std::pair<std::size_t, std::size_t> TaskConfig::decompose(std::size_t group) const {
    if (mode != Mode::volleyball) throw ContractError("decompose: volleyball mode only");
    const std::string& name = group_name(group);
    const auto space = name.find(' ');
    if (space == std::string::npos) {
        throw LabelError("group label \"" + name + "\" is not of the form \"<side> <team>\"");
    }
    const std::string side = name.substr(0, space);
    const std::string team = name.substr(space + 1);
    auto sit = std::find(side_labels.begin(), side_labels.end(), side);
    auto tit = std::find(team_labels.begin(), team_labels.end(), team);
    if (sit == side_labels.end() || tit == team_labels.end()) {
        throw LabelError("group label \"" + name + "\" does not split into known side and team");
    }
    return {static_cast<std::size_t>(sit - side_labels.begin()),
            static_cast<std::size_t>(tit - team_labels.begin())};
}

std::size_t TaskConfig::compose(std::size_t side_id, std::size_t team_id) const {
    if (mode != Mode::volleyball) throw ContractError("compose: volleyball mode only");
    if (side_id >= side_labels.size()) throw LabelError("side id out of range");
    if (team_id >= team_labels.size()) throw LabelError("team id out of range");
    const std::string name = side_labels[side_id] + " " + team_labels[team_id];
    return group_id(name);
}

std::size_t TaskConfig::flip_side(std::size_t group) const {
    auto [side, team] = decompose(group);
    if (side_labels.size() != 2) {
        throw ContractError("flip_side: needs exactly two side labels");
    }
    return compose(1 - side, team);
}

}  // namespace decompl
