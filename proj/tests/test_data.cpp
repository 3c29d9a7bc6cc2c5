#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "decompl/data.hpp"
#include "decompl/errors.hpp"
#include "decompl/synth.hpp"

using namespace decompl;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

Dataset small_synth(std::uint64_t seed = 5, std::size_t clips_per_class = 2) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.clips_per_class = clips_per_class;
    cfg.actors = 4;
    cfg.frames = 2;
    cfg.feature_dim = 6;
    return generate(cfg, TaskConfig::volleyball());
}

struct TempFile {
    std::string path;
    explicit TempFile(std::string p) : path(std::move(p)) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("save/load round-trip is byte-identical for canonical files") {
    Dataset dataset = small_synth();
    dataset.task.fixed_actors = 4;
    TempFile a("t_data_a.jsonl"), b("t_data_b.jsonl");
    save_dataset(dataset, a.path);
    Dataset loaded = load_dataset(a.path);
    CHECK(loaded.size() == dataset.size());
    CHECK(loaded.task.group_labels == dataset.task.group_labels);
    save_dataset(loaded, b.path);
    CHECK(slurp(a.path) == slurp(b.path));
}

TEST_CASE("empty file loads as an empty dataset with a warning") {
    TempFile f("t_data_empty.jsonl");
    std::ofstream(f.path).close();
    std::vector<std::string> warnings;
    Dataset dataset = load_dataset(f.path, /*strict=*/true, &warnings);
    CHECK(dataset.size() == 0);
    CHECK(warnings.size() == 1);
}

TEST_CASE("malformed boxes are rejected with a precise location") {
    Dataset dataset = small_synth();
    dataset.task.fixed_actors = 4;
    dataset.clips[3].frames[1].boxes[2] = {0.8, 0.4, 0.2, 0.6};  // x1 > x2
    try {
        validate_clip(dataset.clips[3], dataset.task, dataset.header.feature_dim);
        FAIL("expected validation error");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find(dataset.clips[3].clip_id) != std::string::npos);
        CHECK(msg.find("frame 1") != std::string::npos);
        CHECK(msg.find("actor 2") != std::string::npos);
    }

    // strict load aborts, lenient load skips with a warning
    TempFile f("t_data_bad.jsonl");
    save_dataset(dataset, f.path);
    CHECK_THROWS_AS(load_dataset(f.path), ValidationError);
    std::vector<std::string> warnings;
    Dataset lenient = load_dataset(f.path, /*strict=*/false, &warnings);
    CHECK(lenient.size() == dataset.size() - 1);
    CHECK(warnings.size() == 1);

    // an out-of-vocabulary label is also skipped leniently
    TempFile g("t_data_badlabel.jsonl");
    {
        std::ifstream in(f.path);
        std::ofstream out(g.path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            if (++line_no == 3) {
                const auto pos = line.find("\"group_label\":\"");
                REQUIRE(pos != std::string::npos);
                line.replace(pos, 15, "\"group_label\":\"~");
            }
            out << line << "\n";
        }
    }
    CHECK_THROWS_AS(load_dataset(g.path), LabelError);
    warnings.clear();
    Dataset tolerant = load_dataset(g.path, /*strict=*/false, &warnings);
    CHECK(tolerant.size() == dataset.size() - 2);  // bad box + bad label skipped
    CHECK(warnings.size() == 2);
}

TEST_CASE("pixel coordinates are normalized at load time") {
    Dataset dataset = small_synth(7, 1);
    dataset.task.fixed_actors = 4;
    TempFile f("t_data_px.jsonl");
    {
        // hand-write a pixel-space file for the first clip
        std::ofstream out(f.path);
        out << R"({"type":"header","format":"decompl-clips","version":1,"feature_dim":1,)"
            << R"("coords":"pixel","image_width":1280,"image_height":720,)"
            << R"("mode":"volleyball","fixed_actors":2,)"
            << R"("group_labels":["right set","right spike","right pass","right win-point",)"
            << R"("left set","left spike","left pass","left win-point"],)"
            << R"("side_labels":["left","right"],"team_labels":["set","spike","pass","win-point"],)"
            << R"("individual_labels":["waiting","setting","digging","falling","spiking",)"
            << R"("blocking","jumping","moving","standing"]})" << "\n";
        out << R"({"type":"clip","clip_id":"c0","video_id":"v0","group_label":"left pass",)"
            << R"("frames":[{"boxes":[[128,72,256,144],[640,360,768,432]],)"
            << R"("features":[[1.0],[2.0]],"actions":[0,1]}]})" << "\n";
    }
    Dataset px = load_dataset(f.path);
    REQUIRE(px.size() == 1);
    // normalized, up to the 2^-20 coordinate grid
    CHECK(px.clips[0].frames[0].boxes[0][0] == doctest::Approx(0.1).epsilon(1e-5));
    CHECK(px.clips[0].frames[0].boxes[0][1] == doctest::Approx(0.1).epsilon(1e-5));
    CHECK(px.clips[0].frames[0].boxes[1][2] == doctest::Approx(0.6).epsilon(1e-5));
    CHECK(px.header.coords == "normalized");
}

TEST_CASE("apply_diff handles relabels, removals, staleness and unknowns") {
    Dataset dataset = small_synth(11, 3);  // 24 clips
    dataset.task.fixed_actors = 4;
    const std::string l0 = dataset.task.group_name(dataset.clips[0].group_label);
    const std::string l1 = dataset.task.group_name(dataset.clips[1].group_label);
    const std::string l5 = dataset.task.group_name(dataset.clips[5].group_label);
    const std::string other = l0 == "left pass" ? "right pass" : "left pass";

    AnnotationDiff empty;
    Dataset copy = dataset;
    ChangeReport none = apply_diff(copy, empty);
    CHECK(none.relabel_total == 0);
    CHECK(none.removal_total == 0);
    CHECK(copy.size() == dataset.size());

    AnnotationDiff diff;
    diff.entries.push_back({dataset.clips[0].video_id, dataset.clips[0].clip_id, "relabel", l0, other});
    diff.entries.push_back({dataset.clips[1].video_id, dataset.clips[1].clip_id, "remove", l1, ""});
    diff.entries.push_back({dataset.clips[5].video_id, dataset.clips[5].clip_id, "remove", l5, ""});

    Dataset patched = dataset;
    ChangeReport report = apply_diff(patched, diff);
    CHECK(report.relabel_total == 1);
    CHECK(report.removal_total == 2);
    CHECK(patched.size() == dataset.size() - 2);
    CHECK(report.relabels.at({l0, other}) == 1);
    CHECK(patched.task.group_name(patched.clips[0].group_label) == other);

    // totals are conserved minus removals
    std::size_t before_total = 0, after_total = 0;
    for (std::size_t c : label_stats(dataset)) before_total += c;
    for (std::size_t c : label_stats(patched)) after_total += c;
    CHECK(after_total == before_total - report.removal_total);

    // a second application must fail the old-label guard
    CHECK_THROWS_AS(apply_diff(patched, diff), DiffError);
    AnnotationDiff relabel_only;
    relabel_only.entries.push_back(diff.entries[0]);
    CHECK_THROWS_AS(apply_diff(patched, relabel_only), StalenessError);

    AnnotationDiff unknown;
    unknown.entries.push_back({"nope", "missing", "relabel", l0, other});
    CHECK_THROWS_AS(apply_diff(patched, unknown), DiffError);

    // failed application leaves the dataset untouched
    Dataset guard = dataset;
    AnnotationDiff bad;
    bad.entries.push_back({dataset.clips[2].video_id, dataset.clips[2].clip_id, "remove",
                           dataset.task.group_name(dataset.clips[2].group_label), ""});
    bad.entries.push_back({"nope", "missing", "remove", l0, ""});
    CHECK_THROWS_AS(apply_diff(guard, bad), DiffError);
    CHECK(guard.size() == dataset.size());
}

TEST_CASE("diff csv round-trip and validation") {
    AnnotationDiff diff;
    diff.entries.push_back({"v1", "c1", "relabel", "right set", "right pass"});
    diff.entries.push_back({"v1", "c2", "remove", "left spike", ""});
    TempFile f("t_diff.csv");
    save_diff(diff, f.path);
    AnnotationDiff loaded = load_diff(f.path);
    REQUIRE(loaded.entries.size() == 2);
    CHECK(loaded.entries[0].op == "relabel");
    CHECK(loaded.entries[0].new_label == "right pass");
    CHECK(loaded.entries[1].op == "remove");

    {
        std::ofstream out(f.path);
        out << "video_id,clip_id,op,old_label,new_label\n";
        out << "v1,c1,relabel,right set,right set\n";  // old == new
    }
    CHECK_THROWS_AS(load_diff(f.path), ParseError);
    {
        std::ofstream out(f.path);
        out << "video_id,clip_id,op,old_label,new_label\n";
        out << "v1,c1,remove,right set,\n";
        out << "v1,c1,remove,right set,\n";  // duplicate clip
    }
    CHECK_THROWS_AS(load_diff(f.path), ParseError);
}

TEST_CASE("label stats count in vocabulary order") {
    TaskConfig task = TaskConfig::volleyball();
    Dataset dataset;
    dataset.task = task;
    dataset.header.feature_dim = 1;
    for (int i = 0; i < 2; ++i) {
        ClipRecord clip;
        clip.clip_id = "c" + std::to_string(i);
        clip.video_id = "v";
        clip.group_label = task.group_id("left pass");
        dataset.clips.push_back(clip);
    }
    auto counts = label_stats(dataset);
    for (std::size_t g = 0; g < task.group_count(); ++g) {
        CHECK(counts[g] == (task.group_labels[g] == "left pass" ? 2u : 0u));
    }
    const std::string table = stats_table(task, counts);
    CHECK(table.find("left pass") != std::string::npos);
}

TEST_CASE("flip augmentation is an involution that swaps the side") {
    TaskConfig task = TaskConfig::volleyball();
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        FrameRecord frame;
        const std::size_t n = 1 + rng.index(6);
        for (std::size_t a = 0; a < n; ++a) {
            const double cx = rng.uniform(0.1, 0.9), cy = rng.uniform(0.1, 0.9);
            const double hw = rng.uniform(0.01, 0.08), hh = rng.uniform(0.01, 0.08);
            // canonical data carries grid-quantized coordinates
            frame.boxes.push_back({quantize_coord(cx - hw), quantize_coord(cy - hh),
                                   quantize_coord(cx + hw), quantize_coord(cy + hh)});
            frame.features.push_back({rng.uniform(-1, 1)});
            frame.actions.push_back(static_cast<int>(rng.index(9)));
        }
        const std::size_t label = rng.index(task.group_count());
        auto [flipped, flipped_label] = flip_augment(frame, label, task);
        CHECK(task.decompose(flipped_label).first != task.decompose(label).first);
        CHECK(task.decompose(flipped_label).second == task.decompose(label).second);
        CHECK(flipped.features == frame.features);
        CHECK(flipped.actions == frame.actions);

        auto [restored, restored_label] = flip_augment(flipped, flipped_label, task);
        CHECK(restored_label == label);
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t c = 0; c < 4; ++c) {
                CHECK(restored.boxes[a][c] == frame.boxes[a][c]);  // exact involution
            }
        }
    }

    CHECK(task.group_name(task.flip_side(task.group_id("left spike"))) == "right spike");

    FrameRecord frame;
    frame.boxes.push_back({0.25, 0.4, 0.35, 0.6});  // center-x 0.3
    frame.features.push_back({0.0});
    frame.actions.push_back(0);
    auto [mirrored, _] = flip_augment(frame, 0, task);
    CHECK(0.5 * (mirrored.boxes[0][0] + mirrored.boxes[0][2]) == doctest::Approx(0.7).epsilon(1e-12));

    TaskConfig generic = TaskConfig::generic({"a", "b"}, {"x"});
    CHECK_THROWS_AS(flip_augment(frame, 0, generic), ContractError);
}

TEST_CASE("frame sampling is uniform and seeded") {
    ClipRecord clip;
    clip.clip_id = "s";
    for (int f = 0; f < 10; ++f) {
        FrameRecord frame;
        frame.boxes.push_back({0.1, 0.1, 0.2, 0.2});
        frame.features.push_back({static_cast<double>(f)});
        frame.actions.push_back(0);
        clip.frames.push_back(frame);
    }

    ClipRecord single;
    single.clip_id = "one";
    single.frames = {clip.frames[3]};
    Rng rng_a(0);
    CHECK(sample_frame(single, rng_a).features[0][0] == 3.0);

    Rng rng_b(123);
    std::vector<std::size_t> counts(10, 0);
    for (int draw = 0; draw < 10000; ++draw) {
        ++counts[static_cast<std::size_t>(sample_frame(clip, rng_b).features[0][0])];
    }
    for (std::size_t f = 0; f < 10; ++f) {
        CHECK(counts[f] >= 850);
        CHECK(counts[f] <= 1150);
    }

    Rng rng_c(7), rng_d(7);
    for (int draw = 0; draw < 100; ++draw) {
        CHECK(sample_frame(clip, rng_c).features[0][0] == sample_frame(clip, rng_d).features[0][0]);
    }

    ClipRecord empty;
    Rng rng_e(1);
    CHECK_THROWS_AS(sample_frame(empty, rng_e), ValidationError);
}
