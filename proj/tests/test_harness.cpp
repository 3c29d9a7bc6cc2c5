#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "decompl/errors.hpp"
#include "decompl/flops.hpp"
#include "decompl/harness.hpp"
#include "decompl/optim.hpp"
#include "decompl/synth.hpp"
#include "gradcheck.hpp"

using namespace decompl;

namespace {

SynthConfig tiny_synth() {
    SynthConfig cfg;
    cfg.seed = 41;
    cfg.clips_per_class = 3;
    cfg.actors = 4;
    cfg.frames = 2;
    cfg.feature_dim = 8;
    return cfg;
}

ModelConfig tiny_model_cfg() {
    ModelConfig cfg;
    cfg.feature_dim = 8;
    cfg.embed_dim = 8;
    cfg.attn_hidden = 12;
    cfg.relation_channels = 3;
    return cfg;
}

TrainConfig tiny_train_cfg() {
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.eval_every = 2;
    cfg.seed = 3;
    return cfg;
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

}  // namespace

TEST_CASE("training is deterministic: same seed, bit-identical checkpoints") {
    Dataset data = generate(tiny_synth(), TaskConfig::volleyball());
    std::string bytes[2];
    for (int run = 0; run < 2; ++run) {
        Model model = Model::init(data.task, tiny_model_cfg(), 7);
        TrainResult result = train(data, model, tiny_train_cfg());
        const std::string path = "t_harness_ckpt_" + std::to_string(run) + ".bin";
        model.save(path);
        bytes[run] = file_bytes(path);
        std::remove(path.c_str());
        CHECK(result.log.size() == 4);
    }
    CHECK(bytes[0] == bytes[1]);
    CHECK(!bytes[0].empty());

    // a different seed must change the trajectory
    Model model = Model::init(data.task, tiny_model_cfg(), 8);
    TrainConfig other = tiny_train_cfg();
    other.seed = 4;
    train(data, model, other);
    const std::string path = "t_harness_ckpt_2.bin";
    model.save(path);
    CHECK(file_bytes(path) != bytes[0]);
    std::remove(path.c_str());
}

TEST_CASE("training uses the scheduled learning rate and logs components") {
    Dataset data = generate(tiny_synth(), TaskConfig::volleyball());
    Model model = Model::init(data.task, tiny_model_cfg(), 7);
    TrainConfig cfg = tiny_train_cfg();
    cfg.epochs = 3;
    cfg.base_lr = 2e-3;
    cfg.decay_period = 2;
    TrainResult result = train(data, model, cfg);
    CHECK(result.log[0].lr == 2e-3);
    CHECK(result.log[1].lr == 2e-3);
    CHECK(result.log[2].lr == 1e-3);
    for (const auto& log : result.log) {
        CHECK(log.loss_total > 0.0);
        CHECK(log.loss_total ==
              doctest::Approx(log.loss_individual + log.loss_group +
                              1.0 * (log.loss_side + log.loss_team)).epsilon(1e-9));
        CHECK(log.gate_group == doctest::Approx(0.5).epsilon(0.2));
    }
}

TEST_CASE("one epoch on a single clip decreases the loss") {
    SynthConfig scfg = tiny_synth();
    scfg.clips_per_class = 1;
    Dataset data = generate(scfg, TaskConfig::volleyball());
    data.clips.resize(1);
    data.clips[0].frames.resize(1);

    Model model = Model::init(data.task, tiny_model_cfg(), 11);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.base_lr = 1e-3;
    cfg.flip_prob = 0.0;
    cfg.holdout_fraction = 0.0;
    cfg.seed = 1;
    TrainResult result = train(data, model, cfg);
    CHECK(result.log[1].loss_total < result.log[0].loss_total);
}

TEST_CASE("train validates inputs") {
    Dataset data = generate(tiny_synth(), TaskConfig::volleyball());
    Model model = Model::init(data.task, tiny_model_cfg(), 7);
    Dataset empty;
    empty.task = data.task;
    CHECK_THROWS_AS(train(empty, model, tiny_train_cfg()), ValidationError);

    TrainConfig bad = tiny_train_cfg();
    bad.flip_prob = 1.5;
    CHECK_THROWS_AS(train(data, model, bad), ConfigError);

    TaskConfig generic = TaskConfig::generic({"a", "b"}, {"x", "y"});
    Model mismatched = Model::init(generic, tiny_model_cfg(), 7);
    CHECK_THROWS_AS(train(data, mismatched, tiny_train_cfg()), ConfigError);
}

TEST_CASE("evaluation aggregates order-independently") {
    Dataset data = generate(tiny_synth(), TaskConfig::volleyball());
    Model model = Model::init(data.task, tiny_model_cfg(), 13);
    EvalReport base = evaluate(data, model);
    CHECK(base.clip_count == data.size());
    CHECK(base.group_accuracy >= 0.0);
    CHECK(base.group_accuracy <= 1.0);

    std::size_t support = 0;
    for (std::size_t r = 0; r < base.confusion.size(); ++r) {
        std::size_t row = 0;
        for (std::size_t c : base.confusion[r]) row += c;
        support += row;
        // row sums equal per-class support: 3 clips per class here
        CHECK(row == 3);
    }
    CHECK(support == data.size());

    CHECK(base.decomposition_agreement >= 0.0);
    CHECK(base.decomposition_agreement <= 1.0);

    Dataset shuffled = data;
    Rng rng(5);
    rng.shuffle(shuffled.clips);
    EvalReport moved = evaluate(shuffled, model);
    CHECK(moved.group_accuracy == base.group_accuracy);
    CHECK(moved.confusion == base.confusion);
    CHECK(moved.individual_accuracy == base.individual_accuracy);
    CHECK(moved.decomposition_agreement == base.decomposition_agreement);
}

TEST_CASE("a constant predictor scores chance on balanced data") {
    Dataset data = generate(tiny_synth(), TaskConfig::volleyball());
    Model model = Model::init(data.task, tiny_model_cfg(), 17);
    // zero every parameter: all logits become 0 and argmax picks class 0
    for (auto& p : model.parameters()) std::fill(p.data().begin(), p.data().end(), 0.0);
    EvalReport report = evaluate(data, model);
    CHECK(report.group_accuracy == doctest::Approx(1.0 / 8.0).epsilon(1e-12));
}

TEST_CASE("run_ablations reports one row per variant with per-seed entries") {
    Dataset data = generate(tiny_synth(), TaskConfig::volleyball());
    ModelConfig mcfg = tiny_model_cfg();
    TrainConfig tcfg = tiny_train_cfg();
    tcfg.epochs = 2;
    auto rows = run_ablations(data, data, mcfg, tcfg, {"full", "no-aux-losses", "heads(1)"}, 2);
    REQUIRE(rows.size() == 3);
    for (const auto& row : rows) {
        CHECK(row.per_seed.size() == 2);
        const double mean = (row.per_seed[0] + row.per_seed[1]) / 2.0;
        CHECK(row.mean_accuracy == doctest::Approx(mean).epsilon(1e-12));
    }
    CHECK_THROWS_AS(run_ablations(data, data, mcfg, tcfg, {"bogus"}, 1), ConfigError);
    const std::string table = ablation_table(rows);
    CHECK(table.find("no-aux-losses") != std::string::npos);
}

TEST_CASE("profiler analytic counts match the instrumented counter exactly") {
    Rng rng(19);
    // attention pool at several sizes
    for (auto [n, d, hidden] : {std::tuple<std::size_t, std::size_t, std::size_t>{3, 4, 5},
                                {6, 128, 512},
                                {12, 128, 512}}) {
        AttentionPoolParams p = AttentionPoolParams::init(hidden, d, rng);
        Tensor X = gradcheck::random_tensor({n, d}, rng, false);
        flops::CountScope scope;
        attention_pool(X, p);
        CHECK(scope.delta() == flopmodel::attention_pool(n, d, hidden));
    }
    // multi-head pool
    {
        const std::size_t n = 6, d = 16, hidden = 32, heads = 2;
        MultiHeadPoolParams p = MultiHeadPoolParams::init(heads, hidden, d, rng);
        Tensor X = gradcheck::random_tensor({n, d}, rng, false);
        flops::CountScope scope;
        multi_head_pool(X, p);
        CHECK(scope.delta() == flopmodel::multi_head_pool(n, d, hidden, heads));
    }
    // baseline pools
    {
        const std::size_t n = 7, d = 9;
        Tensor X = gradcheck::random_tensor({n, d}, rng, false);
        flops::CountScope max_scope;
        baseline_pool(X, PoolKind::max);
        CHECK(max_scope.delta() == flopmodel::baseline_pool(n, d, PoolKind::max));
        flops::CountScope mean_scope;
        baseline_pool(X, PoolKind::mean);
        CHECK(mean_scope.delta() == flopmodel::baseline_pool(n, d, PoolKind::mean));
    }
    // coordinate features
    for (std::size_t n : {4u, 12u}) {
        CoordinateModuleParams p = CoordinateModuleParams::init(8, n, 16, rng);
        BoxList boxes;
        for (std::size_t i = 0; i < n; ++i) {
            const double x = 0.05 + 0.9 * static_cast<double>(i) / static_cast<double>(n);
            boxes.push_back({x, 0.4, x + 0.05, 0.6});
        }
        flops::CountScope scope;
        coordinate_features(boxes, p);
        CHECK(scope.delta() == flopmodel::coordinate_features(n, 8, n, 16));
    }
}

TEST_CASE("profiler matches the instrumented whole forward pass") {
    Rng rng(23);
    for (const char* variant : {"full", "only-coordinate", "no-coordinate", "mean-pool"}) {
        TaskConfig task = TaskConfig::volleyball();
        ModelConfig cfg;
        cfg.feature_dim = 8;
        cfg.embed_dim = 16;
        cfg.attn_hidden = 24;
        cfg.relation_channels = 4;
        Model model = Model::init(task, ablation_variant(cfg, variant), 29);

        FrameRecord frame;
        for (std::size_t a = 0; a < 12; ++a) {
            const double x = 0.04 + 0.9 * static_cast<double>(a) / 12.0;
            frame.boxes.push_back({x, 0.4, x + 0.05, 0.6});
            std::vector<double> f(8);
            for (auto& v : f) v = rng.uniform(-1, 1);
            frame.features.push_back(std::move(f));
            frame.actions.push_back(0);
        }
        flops::CountScope scope;
        model.forward_frame(frame);
        CHECK(scope.delta() == flopmodel::forward_frame(model, 12, /*include_embedding=*/true));

        ProfileReport report = profile(model, 12, 10);
        CHECK(report.flops_frame == flopmodel::forward_frame(model, 12, false));
        CHECK(report.flops_clip == report.flops_frame * 10);
    }
}

TEST_CASE("profiler parameter counts follow the configuration") {
    TaskConfig task = TaskConfig::volleyball();
    ModelConfig cfg;  // defaults: D=128, L=512, H=2, C=8, N=12
    Model model = Model::init(task, cfg, 31);
    ProfileReport report = profile(model);

    // visual pooling: 2 teams x (2 heads x (L*D + L) + D*(2D) + D)
    const std::size_t head = 512 * 128 + 512;
    const std::size_t proj = 128 * 256 + 128;
    CHECK(report.breakdown[0].params == 2 * (2 * head + proj));
    // total matches the named-parameter sum without the embedding
    CHECK(report.params_total == model.parameter_count(false));
    CHECK(report.params_with_embedding == model.parameter_count(true));
    CHECK(report.params_total < report.params_with_embedding);

    // doubling D (keeping the default L = 4D ratio) quadruples the V count
    ModelConfig big = cfg;
    big.embed_dim = 256;
    big.attn_hidden = 4 * big.embed_dim;
    Model bigger = Model::init(task, big, 31);
    std::size_t v_small = 0, v_big = 0;
    for (const auto& [name, t] : model.named_parameters()) {
        if (name.find(".V") != std::string::npos) v_small += t.size();
    }
    for (const auto& [name, t] : bigger.named_parameters()) {
        if (name.find(".V") != std::string::npos) v_big += t.size();
    }
    CHECK(v_big >= 4 * v_small);

    const std::string text = report.to_text();
    CHECK(text.find("#Params") != std::string::npos);
    CHECK(text.find("FLOPs") != std::string::npos);
}
