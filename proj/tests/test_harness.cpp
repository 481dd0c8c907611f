#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "solo/harness.hpp"

using namespace solo;

namespace {

TrainConfig tiny_config()
{
    TrainConfig c;
    c.epochs = 2;
    c.batch_size = 2;
    c.base_lr = 0.01;
    c.image_size = 64;
    c.warmup_iters = 2;
    c.grad_clip_norm = 5;
    c.model.head_depth = 2;
    c.model.head_channels = 8;
    c.model.fpn_channels = 8;
    c.model.backbone_channels = {4, 6, 8, 8, 8};
    constexpr double inf = std::numeric_limits<double>::infinity();
    c.model.pyramid.levels = {{"P3", 8, 8, 0, 24}, {"P4", 16, 5, 16, inf}};
    return c;
}

std::vector<DatasetSample> tiny_data(std::size_t n, std::uint64_t seed)
{
    SynthConfig s;
    s.image_size = 64;
    s.min_size = 12;
    s.max_size = 30;
    s.seed = seed;
    return generate_synthetic(s, n);
}

Tensor<float> grad_param(float w, float g)
{
    Tensor<float> t({1}, {w}, true);
    t.accumulate_grad(std::vector<float>{g});
    return t;
}

double loss_on(const TrainConfig& cfg, const ModelWeights<float>& weights, const std::vector<DatasetSample>& data)
{
    NoGradGuard guard;
    const SoloModel<float> model(cfg.model, weights);
    std::vector<std::vector<LevelOutput<float>>> outs;
    std::vector<TrainingTargets> targets;
    for (const auto& s : data) {
        outs.push_back(model.forward(Tensor<float>({3, 64, 64}, s.image.pixels), false));
        targets.push_back(build_targets(s.annotations, cfg.model.pyramid, 64, 64, {cfg.epsilon, 4, false}));
    }
    return solo_loss<float>(model, outs, targets, cfg.loss).total.item();
}

std::string file_bytes(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CheckpointError::Kind load_error_kind(const std::string& bytes, const ModelConfig* expected = nullptr)
{
    try {
        deserialize_checkpoint(bytes, expected);
    } catch (const CheckpointError& e) {
        return e.kind();
    }
    FAIL("checkpoint was accepted");
    return CheckpointError::Kind::bad_magic;
}

}  // namespace

TEST_CASE("lr_at drop schedule")
{
    TrainConfig c;
    c.base_lr = 0.01;
    c.epochs = 36;
    CHECK(lr_at(0, c) == 0.01);
    CHECK(lr_at(26, c) == 0.01);
    CHECK(lr_at(27, c) == doctest::Approx(0.001));
    CHECK(lr_at(32, c) == doctest::Approx(0.001));
    CHECK(lr_at(33, c) == doctest::Approx(0.0001));
    CHECK(lr_at(35, c) == doctest::Approx(0.0001));
    for (std::size_t e = 1; e < 36; ++e) CHECK(lr_at(e, c) <= lr_at(e - 1, c));

    c.epochs = 20;
    c.lr_drop_fractions = {0.5};
    CHECK(lr_at(9, c) == 0.01);
    CHECK(lr_at(10, c) == doctest::Approx(0.001));
}

TEST_CASE("sgd_step")
{
    SUBCASE("momentum 0 and no decay is plain gradient descent")
    {
        ModelWeights<float> w{{"a", grad_param(1.0f, 0.5f)}};
        SgdState s;
        sgd_step(w, s, 0.1, 0.0, 0.0);
        CHECK(w.at("a").data()[0] == doctest::Approx(0.95));
    }
    SUBCASE("zero gradient without decay leaves weights alone")
    {
        ModelWeights<float> w{{"a", grad_param(1.25f, 0.0f)}};
        SgdState s;
        sgd_step(w, s, 0.1, 0.9, 0.0);
        CHECK(w.at("a").data()[0] == 1.25f);
    }
    SUBCASE("lr 0 is the identity")
    {
        ModelWeights<float> w{{"a", grad_param(-0.75f, 3.0f)}};
        SgdState s;
        sgd_step(w, s, 0.0, 0.9, 1e-4);
        CHECK(w.at("a").data()[0] == -0.75f);
    }
    SUBCASE("two steps on f(w) = w^2 follow the scalar recurrence")
    {
        const double lr = 0.1, m = 0.9, wd = 0.01;
        double w_ref = 2.0, v_ref = 0.0;
        ModelWeights<float> w{{"a", Tensor<float>({1}, {2.0f}, true)}};
        SgdState s;
        for (int step = 0; step < 2; ++step) {
            auto& t = w.at("a");
            t.zero_grad();
            t.accumulate_grad(std::vector<float>{2.0f * t.data()[0]});
            sgd_step(w, s, lr, m, wd);
            v_ref = m * v_ref + 2.0 * w_ref + wd * w_ref;
            w_ref = w_ref - lr * v_ref;
            CHECK(t.data()[0] == doctest::Approx(w_ref).epsilon(1e-6));
            CHECK(s.at("a")[0] == doctest::Approx(v_ref).epsilon(1e-6));
        }
    }
    SUBCASE("missing gradient names the parameter")
    {
        ModelWeights<float> w{{"a", grad_param(1.0f, 1.0f)}, {"head.x", Tensor<float>({1}, {1.0f}, true)}};
        SgdState s;
        CHECK_THROWS_WITH_AS(sgd_step(w, s, 0.1, 0.9, 0.0), doctest::Contains("head.x"), std::invalid_argument);
    }
}

TEST_CASE("TrainConfig JSON round trip and validation")
{
    auto c = tiny_config();
    c.loss.mask_loss = MaskLossKind::bce;
    c.loss.mask_focal_alpha = 0.75;
    c.seed = 77;
    const auto back = train_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(back.loss.mask_focal_alpha == 0.75);
    CHECK_FALSE(back.loss.mask_focal_gamma.has_value());
    CHECK(back.model.pyramid.levels[1].scale_hi == std::numeric_limits<double>::infinity());

    const auto single = train_config_from_json(
        R"({"pyramid": "single_level", "single_level_grid": 12, "single_level_stride": 8, "epochs": 3})");
    REQUIRE(single.model.pyramid.levels.size() == 1);
    CHECK(single.model.pyramid.levels[0].grid == 12);
    CHECK(single.epochs == 3);

    CHECK_THROWS_AS(train_config_from_json(R"({"epochz": 3})"), ConfigError);
    CHECK_THROWS_AS(train_config_from_json(R"({"epochs": "three"})"), ConfigError);
    CHECK_THROWS_AS(train_config_from_json("{"), ConfigError);
    CHECK_THROWS_AS(train_config_from_json(R"({"variant": "sideways"})"), ConfigError);

    auto bad = tiny_config();
    bad.lr_drop_fractions = {0.9, 0.5};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = tiny_config();
    bad.base_lr = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = tiny_config();
    bad.lr_drop_fractions = {1.0};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = tiny_config();
    bad.model.variant = HeadVariant::decoupled;
    bad.loss.mask_loss = MaskLossKind::focal;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = tiny_config();
    bad.contours = true;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.loss.mask_loss = MaskLossKind::focal;
    CHECK_NOTHROW(bad.validate());
}

TEST_CASE("checkpoint round trip and rejection kinds")
{
    const auto cfg = tiny_config();
    Checkpoint ck;
    ck.config = cfg;
    ck.epoch = 3;
    ck.weights = init_weights<float>(cfg.model, 5);
    for (const auto& [name, t] : ck.weights) {
        if (name.rfind("head", 0) == 0) ck.momentum[name] = std::vector<float>(t.size(), 0.125f);
    }
    const auto bytes = serialize_checkpoint(ck);
    CHECK(bytes.compare(0, 8, "SOLOCKPT") == 0);

    const auto back = deserialize_checkpoint(bytes);
    CHECK(back.epoch == 3);
    CHECK(back.momentum == ck.momentum);
    for (const auto& [name, t] : ck.weights) {
        const auto& u = back.weights.at(name);
        CHECK(std::equal(t.data().begin(), t.data().end(), u.data().begin(), u.data().end()));
    }
    CHECK(serialize_checkpoint(back) == bytes);

    const auto dir = std::filesystem::temp_directory_path() / "solo_ckpt_test";
    std::filesystem::create_directories(dir);
    save_checkpoint(dir / "a.ckpt", ck);
    save_checkpoint(dir / "b.ckpt", load_checkpoint(dir / "a.ckpt"));
    CHECK(file_bytes(dir / "a.ckpt") == file_bytes(dir / "b.ckpt"));
    std::filesystem::remove_all(dir);

    using K = CheckpointError::Kind;
    auto tampered = bytes;
    tampered[0] = 'X';
    CHECK(load_error_kind(tampered) == K::bad_magic);
    CHECK(load_error_kind("hello") == K::bad_magic);

    tampered = bytes;
    tampered[8] = 2;
    CHECK(load_error_kind(tampered) == K::unsupported_version);

    CHECK(load_error_kind(bytes.substr(0, bytes.size() - 10)) == K::truncated);
    CHECK(load_error_kind(bytes.substr(0, 30)) == K::truncated);
    CHECK(load_error_kind(bytes.substr(0, 10)) == K::truncated);

    tampered = bytes;
    tampered[20] = '#';
    CHECK(load_error_kind(tampered) == K::corrupt_header);
    CHECK(load_error_kind(bytes + "xx") == K::corrupt_header);

    auto other = cfg.model;
    other.pyramid.levels[0].grid = 9;
    CHECK(load_error_kind(bytes, &other) == K::shape_mismatch);
    try {
        deserialize_checkpoint(bytes, &other);
    } catch (const CheckpointError& e) {
        CHECK(std::string(e.what()).find("head.mask.out0") != std::string::npos);
    }
}

TEST_CASE("one epoch on 4 samples lowers the loss for most seeds")
{
    int improved = 0;
    for (std::uint64_t seed : {1, 2, 3, 4}) {
        auto cfg = tiny_config();
        cfg.epochs = 1;
        cfg.batch_size = 1;
        cfg.warmup_iters = 0;
        cfg.seed = seed;
        const auto data = tiny_data(4, 100 + seed);
        const auto before = loss_on(cfg, init_weights<float>(cfg.model, seed), data);
        TrainOptions opt;
        opt.train_samples = &data;
        const auto r = train(cfg, opt);
        const auto after = loss_on(cfg, r.checkpoint.weights, data);
        CAPTURE(before);
        CAPTURE(after);
        if (after < before) ++improved;
        REQUIRE(r.metrics.size() == 1);
        CHECK(r.metrics[0].batches == 4);
        CHECK(std::isfinite(r.metrics[0].loss));
    }
    CHECK(improved >= 3);
}

TEST_CASE("training is deterministic and resumable")
{
    auto cfg = tiny_config();
    cfg.epochs = 3;
    const auto data = tiny_data(6, 9);
    TrainOptions opt;
    opt.train_samples = &data;
    const auto a = serialize_checkpoint(train(cfg, opt).checkpoint);
    const auto b = serialize_checkpoint(train(cfg, opt).checkpoint);
    CHECK(a == b);

    auto partial_opt = opt;
    partial_opt.stop_after = 1;
    const auto partial = train(cfg, partial_opt);
    CHECK(partial.checkpoint.epoch == 1);
    // Through the byte format, as a real resume would.
    const auto restored = deserialize_checkpoint(serialize_checkpoint(partial.checkpoint));
    auto resume_opt = opt;
    resume_opt.resume = &restored;
    const auto resumed = train(cfg, resume_opt);
    CHECK(resumed.metrics.size() == 2);
    CHECK(serialize_checkpoint(resumed.checkpoint) == a);
}

TEST_CASE("lambda 0 gives the mask branch no gradient")
{
    auto cfg = tiny_config();
    cfg.loss.lambda = 0;
    const auto data = tiny_data(2, 12);
    SoloModel<float> model(cfg.model, init_weights<float>(cfg.model, 3));
    std::vector<std::vector<LevelOutput<float>>> outs;
    std::vector<TrainingTargets> targets;
    for (const auto& s : data) {
        outs.push_back(model.forward(Tensor<float>({3, 64, 64}, s.image.pixels), false));
        targets.push_back(build_targets(s.annotations, cfg.model.pyramid, 64, 64));
    }
    const auto terms = solo_loss<float>(model, outs, targets, cfg.loss);
    REQUIRE(terms.num_positives > 0);
    CHECK(terms.mask.item() > 0);
    backward(terms.total);
    for (const auto& [name, t] : model.weights()) {
        if (name.rfind("head.mask.out", 0) != 0 || !t.has_grad()) continue;
        double sq = 0;
        for (float g : t.grad()) sq += double(g) * g;
        CAPTURE(name);
        CHECK(std::sqrt(sq) < 1e-12);
    }
    double cate = 0;
    for (float g : model.weights().at("head.cate.out0.kernel").grad()) cate += std::abs(g);
    CHECK(cate > 0);
}

TEST_CASE("a diverging run stops with the offending batch")
{
    auto cfg = tiny_config();
    cfg.epochs = 4;
    cfg.base_lr = 1e12;
    cfg.grad_clip_norm = 0;
    cfg.warmup_iters = 0;
    const auto data = tiny_data(6, 4);
    TrainOptions opt;
    opt.train_samples = &data;
    CHECK_THROWS_WITH_AS(train(cfg, opt), doctest::Contains("batch"), NumericError);
    CHECK(tape_size<float>() == 0);
}

TEST_CASE("train rejects categories outside the configured range")
{
    auto cfg = tiny_config();
    cfg.model.num_classes = 2;
    auto data = tiny_data(4, 5);
    data[0].annotations[0].category = 3;
    TrainOptions opt;
    opt.train_samples = &data;
    CHECK_THROWS_AS(train(cfg, opt), DataError);
}
