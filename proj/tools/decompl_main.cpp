#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "decompl/data.hpp"
#include "decompl/errors.hpp"
#include "decompl/harness.hpp"
#include "decompl/model.hpp"
#include "decompl/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace decompl;

namespace {

// Exit codes: 0 success, 2 configuration, 3 validation/parse, 4 data/diff.
constexpr int kExitConfig = 2;
constexpr int kExitValidation = 3;
constexpr int kExitData = 4;

json default_config() {
    json j;
    j["model"] = {{"embed_dim", 128},     {"attn_hidden", 512},
                  {"visual_heads", 2},    {"relation_channels", 8},
                  {"ref_actors", 12},     {"pool", "attention"},
                  {"share_team_pool", false}, {"strict_actor_count", true}};
    j["train"] = {{"epochs", 120},  {"batch_size", 8},       {"base_lr", 1e-4},
                  {"decay_period", 30}, {"decay_factor", 2.0}, {"flip_prob", 0.5},
                  {"holdout_fraction", 0.2}, {"eval_every", 10}, {"variant", "full"},
                  {"beta", 1.0}};
    j["synth"] = {{"clips_per_class", 50}, {"actors", 12},          {"frames", 10},
                  {"feature_dim", 128},    {"feature_noise", 0.5},  {"position_jitter", 0.05},
                  {"signal_strength", 2.0}};
    return j;
}

void merge_checked(json& base, const json& overlay, const std::string& prefix) {
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError("unknown config key: " + path);
        if (base[it.key()].is_object()) {
            if (!it->is_object()) throw ConfigError("config key " + path + " must be an object");
            merge_checked(base[it.key()], *it, path);
        } else {
            base[it.key()] = *it;
        }
    }
}

void apply_override(json& cfg, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got \"" + spec + "\"");
    const std::string key = spec.substr(0, eq);
    const std::string value = spec.substr(eq + 1);
    json* node = &cfg;
    std::istringstream path(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(path, part, '.')) parts.push_back(part);
    if (parts.empty()) throw ConfigError("--set: empty key");
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->contains(parts[i])) throw ConfigError("unknown config key: " + key);
        node = &(*node)[parts[i]];
    }
    if (!node->contains(parts.back())) throw ConfigError("unknown config key: " + key);
    json& leaf = (*node)[parts.back()];
    try {
        if (leaf.is_string()) {
            leaf = value;
        } else if (leaf.is_boolean()) {
            if (value == "true" || value == "1") leaf = true;
            else if (value == "false" || value == "0") leaf = false;
            else throw ConfigError("--set " + key + ": expected a boolean");
        } else {
            leaf = json::parse(value);
        }
    } catch (const json::exception&) {
        throw ConfigError("--set " + key + ": cannot parse value \"" + value + "\"");
    }
}

json load_config(const std::string& config_path, const std::vector<std::string>& overrides) {
    json cfg = default_config();
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw ConfigError("cannot open config file: " + config_path);
        json file_cfg;
        try {
            in >> file_cfg;
        } catch (const json::exception& e) {
            throw ConfigError("config file " + config_path + ": " + e.what());
        }
        merge_checked(cfg, file_cfg, "");
    }
    for (const auto& spec : overrides) apply_override(cfg, spec);
    return cfg;
}

ModelConfig model_config_from(const json& cfg, std::size_t feature_dim, double beta) {
    const json& m = cfg.at("model");
    ModelConfig out;
    out.feature_dim = feature_dim;
    out.embed_dim = m.at("embed_dim").get<std::size_t>();
    out.attn_hidden = m.at("attn_hidden").get<std::size_t>();
    out.visual_heads = m.at("visual_heads").get<std::size_t>();
    out.relation_channels = m.at("relation_channels").get<std::size_t>();
    out.ref_actors = m.at("ref_actors").get<std::size_t>();
    const std::string pool = m.at("pool").get<std::string>();
    if (pool == "attention") out.pool = PoolKind::attention;
    else if (pool == "max") out.pool = PoolKind::max;
    else if (pool == "mean") out.pool = PoolKind::mean;
    else throw ConfigError("model.pool must be attention, max or mean");
    out.share_team_pool = m.at("share_team_pool").get<bool>();
    out.strict_actor_count = m.at("strict_actor_count").get<bool>();
    out.beta = beta;
    return out;
}

TrainConfig train_config_from(const json& cfg, std::uint64_t seed) {
    const json& t = cfg.at("train");
    TrainConfig out;
    out.epochs = t.at("epochs").get<std::size_t>();
    out.batch_size = t.at("batch_size").get<std::size_t>();
    out.base_lr = t.at("base_lr").get<double>();
    out.decay_period = t.at("decay_period").get<std::size_t>();
    out.decay_factor = t.at("decay_factor").get<double>();
    out.flip_prob = t.at("flip_prob").get<double>();
    out.holdout_fraction = t.at("holdout_fraction").get<double>();
    out.eval_every = t.at("eval_every").get<std::size_t>();
    out.variant = t.at("variant").get<std::string>();
    out.beta = t.at("beta").get<double>();
    out.seed = seed;
    out.validate();
    return out;
}

SynthConfig synth_config_from(const json& cfg, std::uint64_t seed) {
    const json& s = cfg.at("synth");
    SynthConfig out;
    out.seed = seed;
    out.clips_per_class = s.at("clips_per_class").get<std::size_t>();
    out.actors = s.at("actors").get<std::size_t>();
    out.frames = s.at("frames").get<std::size_t>();
    out.feature_dim = s.at("feature_dim").get<std::size_t>();
    out.feature_noise = s.at("feature_noise").get<double>();
    out.position_jitter = s.at("position_jitter").get<double>();
    out.signal_strength = s.at("signal_strength").get<double>();
    return out;
}

fs::path ensure_out_dir(const std::string& out_dir) {
    fs::path dir = out_dir;
    if (!fs::exists(dir)) {
        fs::create_directories(dir);
        std::cerr << "created output directory " << dir << "\n";
    }
    return dir;
}

void write_manifest(const fs::path& dir, const std::string& command, std::uint64_t seed,
                    const json& cfg) {
    json manifest;
    manifest["command"] = command;
    manifest["seed"] = seed;
    manifest["config"] = cfg;
    manifest["format_versions"] = {{"clips", 1}, {"checkpoint", 1}, {"diff", 1}};
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << "\n";
}

void write_epoch_log(const fs::path& path, const std::vector<EpochLog>& log) {
    std::ofstream out(path);
    for (const EpochLog& e : log) {
        json j;
        j["epoch"] = e.epoch;
        j["lr"] = e.lr;
        j["loss_total"] = e.loss_total;
        j["loss_individual"] = e.loss_individual;
        j["loss_group"] = e.loss_group;
        j["loss_side"] = e.loss_side;
        j["loss_team"] = e.loss_team;
        j["gate_side"] = e.gate_side;
        j["gate_group"] = e.gate_group;
        j["gate_team"] = e.gate_team;
        if (e.holdout_accuracy >= 0.0) j["holdout_accuracy"] = e.holdout_accuracy;
        out << j.dump() << "\n";
    }
}

json report_to_json(const EvalReport& report, const TaskConfig& task) {
    json j;
    j["clips"] = report.clip_count;
    j["group_accuracy"] = report.group_accuracy;
    if (report.side_accuracy >= 0.0) j["side_accuracy"] = report.side_accuracy;
    if (report.team_accuracy >= 0.0) j["team_accuracy"] = report.team_accuracy;
    if (report.individual_accuracy >= 0.0) j["individual_accuracy"] = report.individual_accuracy;
    if (report.decomposition_agreement >= 0.0) {
        j["decomposition_agreement"] = report.decomposition_agreement;
    }
    j["gates"] = {{"side", report.gate_side}, {"group", report.gate_group}, {"team", report.gate_team}};
    j["labels"] = task.group_labels;
    j["precision"] = report.precision;
    j["recall"] = report.recall;
    j["confusion"] = report.confusion;
    return j;
}

int run(int argc, char** argv) {
    CLI::App app{"decompl: two-branch group activity recognition head"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    const char* env_out = std::getenv("DECOMPL_OUT");
    std::string out_dir = env_out ? env_out : ".";
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--set", overrides, "override a config key, e.g. --set model.embed_dim=64");
    app.add_option("--seed", seed, "random seed");
    app.add_option("--out", out_dir, "output directory (env DECOMPL_OUT)");

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    std::string gen_file = "synth.jsonl";
    std::size_t gen_cpc = 0;
    gen->add_option("--file", gen_file, "output file name (inside --out)");
    gen->add_option("--clips-per-class", gen_cpc, "override synth.clips_per_class");

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model");
    std::string train_data;
    train_cmd->add_option("--data", train_data, "training dataset")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_data, eval_ckpt;
    bool eval_write = false;
    eval_cmd->add_option("--data", eval_data, "evaluation dataset")->required();
    eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    eval_cmd->add_flag("--write-report", eval_write, "also write report files into --out");

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "run the ablation table");
    std::string ab_train, ab_test, ab_variants = "full,only-coordinate,no-coordinate";
    std::size_t ab_seeds = 5;
    ablate_cmd->add_option("--train", ab_train, "training dataset")->required();
    ablate_cmd->add_option("--test", ab_test, "test dataset")->required();
    ablate_cmd->add_option("--variants", ab_variants, "comma-separated variant list");
    ablate_cmd->add_option("--seeds", ab_seeds, "number of seeds to average");

    // profile
    auto* profile_cmd = app.add_subcommand("profile", "parameter / FLOP accounting");
    std::size_t prof_actors = 12, prof_frames = 10;
    profile_cmd->add_option("--actors", prof_actors, "actor count per frame");
    profile_cmd->add_option("--frames", prof_frames, "frames per clip decision");

    // annotate
    auto* annotate = app.add_subcommand("annotate", "annotation tooling");
    annotate->require_subcommand(1);
    auto* ann_apply = annotate->add_subcommand("apply-diff", "apply a reannotation diff");
    std::string ann_data, ann_diff, ann_out_file = "reannotated.jsonl";
    ann_apply->add_option("data", ann_data, "dataset file")->required();
    ann_apply->add_option("diff", ann_diff, "diff csv")->required();
    ann_apply->add_option("--file", ann_out_file, "output file name (inside --out)");
    auto* ann_stats = annotate->add_subcommand("stats", "label distribution table");
    std::string stats_a, stats_b;
    bool stats_json = false;
    ann_stats->add_option("dataset", stats_a, "dataset file")->required();
    ann_stats->add_option("compare", stats_b, "optional second dataset (after column)");
    ann_stats->add_flag("--json", stats_json, "emit machine-readable output instead of the table");
    auto* ann_validate = annotate->add_subcommand("validate", "check dataset invariants");
    std::string val_data;
    ann_validate->add_option("data", val_data, "dataset file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    json cfg = load_config(config_path, overrides);

    if (gen->parsed()) {
        if (gen_cpc > 0) cfg["synth"]["clips_per_class"] = gen_cpc;
        const SynthConfig scfg = synth_config_from(cfg, seed);
        Dataset dataset = generate(scfg, TaskConfig::volleyball());
        fs::path dir = ensure_out_dir(out_dir);
        save_dataset(dataset, (dir / gen_file).string());
        write_manifest(dir, "gen", seed, cfg);
        std::cout << "wrote " << dataset.size() << " clips to " << (dir / gen_file).string() << "\n";
        return 0;
    }

    if (train_cmd->parsed()) {
        Dataset dataset = load_dataset(train_data);
        TrainConfig tcfg = train_config_from(cfg, seed);
        ModelConfig mcfg = model_config_from(cfg, dataset.header.feature_dim, tcfg.beta);
        mcfg = ablation_variant(mcfg, tcfg.variant);
        Model model = Model::init(dataset.task, mcfg, seed);
        TrainResult result = train(dataset, model, tcfg);
        fs::path dir = ensure_out_dir(out_dir);
        model.save((dir / "checkpoint.ckpt").string());
        write_epoch_log(dir / "train_log.jsonl", result.log);
        write_manifest(dir, "train", seed, cfg);
        std::cout << "best holdout accuracy " << result.best_holdout_accuracy << " at epoch "
                  << result.best_epoch << "\n";
        std::cout << "checkpoint: " << (dir / "checkpoint.ckpt").string() << "\n";
        return 0;
    }

    if (eval_cmd->parsed()) {
        Model model = Model::load(eval_ckpt);
        Dataset dataset = load_dataset(eval_data);
        EvalReport report = evaluate(dataset, model);
        std::cout << report.to_text(model.task());
        if (eval_write) {
            fs::path dir = ensure_out_dir(out_dir);
            std::ofstream text(dir / "eval_report.txt");
            text << report.to_text(model.task());
            std::ofstream machine(dir / "eval_report.json");
            machine << report_to_json(report, model.task()).dump(2) << "\n";
            write_manifest(dir, "eval", seed, cfg);
        }
        return 0;
    }

    if (ablate_cmd->parsed()) {
        Dataset train_set = load_dataset(ab_train);
        Dataset test_set = load_dataset(ab_test);
        TrainConfig tcfg = train_config_from(cfg, seed);
        ModelConfig mcfg = model_config_from(cfg, train_set.header.feature_dim, tcfg.beta);
        std::vector<std::string> variants;
        std::istringstream in(ab_variants);
        std::string name;
        while (std::getline(in, name, ',')) {
            if (!name.empty()) variants.push_back(name);
        }
        auto rows = run_ablations(train_set, test_set, mcfg, tcfg, variants, ab_seeds);
        std::cout << ablation_table(rows);
        fs::path dir = ensure_out_dir(out_dir);
        json out_rows = json::array();
        for (const auto& row : rows) {
            out_rows.push_back({{"variant", row.variant},
                                {"mean_accuracy", row.mean_accuracy},
                                {"per_seed", row.per_seed}});
        }
        std::ofstream machine(dir / "ablation_report.json");
        machine << out_rows.dump(2) << "\n";
        write_manifest(dir, "ablate", seed, cfg);
        return 0;
    }

    if (profile_cmd->parsed()) {
        TaskConfig task = TaskConfig::volleyball();
        const json& s = cfg.at("synth");
        ModelConfig mcfg = model_config_from(cfg, s.at("feature_dim").get<std::size_t>(),
                                             cfg.at("train").at("beta").get<double>());
        Model model = Model::init(task, mcfg, seed);
        ProfileReport report = profile(model, prof_actors, prof_frames);
        std::cout << report.to_text();
        return 0;
    }

    if (ann_apply->parsed()) {
        Dataset dataset = load_dataset(ann_data);
        AnnotationDiff diff = load_diff(ann_diff);
        ChangeReport report = apply_diff(dataset, diff);
        fs::path dir = ensure_out_dir(out_dir);
        save_dataset(dataset, (dir / ann_out_file).string());
        std::cout << "applied " << report.relabel_total << " relabels and " << report.removal_total
                  << " removals; " << dataset.size() << " clips remain\n";
        for (const auto& [pair, count] : report.relabels) {
            std::cout << "  " << pair.first << " -> " << pair.second << ": " << count << "\n";
        }
        write_manifest(dir, "annotate apply-diff", seed, cfg);
        return 0;
    }

    if (ann_stats->parsed()) {
        Dataset first = load_dataset(stats_a);
        std::vector<std::size_t> before = label_stats(first);
        std::vector<std::size_t> after;
        if (!stats_b.empty()) after = label_stats(load_dataset(stats_b));
        if (stats_json) {
            json j;
            j["labels"] = first.task.group_labels;  // Table row order
            j["counts"] = before;
            j["total"] = first.size();
            if (!after.empty()) {
                j["after_counts"] = after;
                j["after_total"] = std::accumulate(after.begin(), after.end(), std::size_t{0});
            }
            std::cout << j.dump(2) << "\n";
        } else if (!after.empty()) {
            std::cout << stats_table(first.task, before, &after);
        } else {
            std::cout << stats_table(first.task, before);
        }
        return 0;
    }

    if (ann_validate->parsed()) {
        std::vector<std::string> warnings;
        Dataset dataset = load_dataset(val_data, /*strict=*/false, &warnings);
        for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
        std::cout << warnings.size() << " violations in " << dataset.size() << " clips\n";
        return warnings.empty() ? 0 : kExitValidation;
    }

    return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DiffError& e) {
        std::cerr << "diff error: " << e.what() << "\n";
        return kExitData;
    } catch (const LabelError& e) {
        std::cerr << "label error: " << e.what() << "\n";
        return kExitData;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
