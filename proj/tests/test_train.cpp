#include "satcalc/error.hpp"
#include "satcalc/train.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace satcalc;

namespace {

ModelConfig tiny_model()
{
    return GradCheckOptions::tiny().model;
}

std::vector<Sample> synth_samples(int n, int hw, std::uint64_t seed, const std::string& prefix = "s")
{
    std::vector<Sample> out;
    for (int i = 0; i < n; ++i) {
        Scene sc = synth_scene(sample_seed(seed, static_cast<std::uint64_t>(i)), hw, hw);
        out.push_back(make_sample(prefix + std::to_string(i), std::move(sc.bands), sc.height));
    }
    return out;
}

bool same_params(const TrainableParams& a, const TrainableParams& b)
{
    const auto ga = param_groups(a);
    const auto gb = param_groups(b);
    for (std::size_t i = 0; i < ga.size(); ++i)
        if (*ga[i].value != *gb[i].value)
            return false;
    return true;
}

} // namespace

TEST_CASE("default loss weights are the published table")
{
    const LossWeights w;
    const std::array<double, 8> expected{0.0386, 0.0440, 0.0501, 0.1700, 0.0418, 0.2052, 0.2121, 0.2381};
    CHECK(w.lambda == expected);
    CHECK(std::abs(w.sum() - 0.9999) <= 1e-6);
    CHECK(w[TaskId::EVI] == 0.1700);
    CHECK_NOTHROW(w.validate());
    LossWeights bad;
    bad.lambda[2] = -1.0;
    CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("weighted loss examples")
{
    TargetMaps y;
    for (auto& g : y)
        g = Grid2D(4, 4, 0.0f);
    const MaskGrid mask(4, 4, true);

    std::map<TaskId, Grid2D> exact{{TaskId::NDVI, y[0]}, {TaskId::H, y[5]}};
    const LossResult zero = weighted_loss(exact, y, mask);
    CHECK(zero.total == 0.0);
    CHECK(zero.per_task.at(TaskId::H) == 0.0);

    std::map<TaskId, Grid2D> preds{{TaskId::NDVI, Grid2D(4, 4, 0.1f)}, {TaskId::H, Grid2D(4, 4, 2.0f)}};
    const LossResult r = weighted_loss(preds, y, mask);
    CHECK(std::abs(r.total - 0.41426) <= 1e-9);
    CHECK(r.per_task.size() == 2);

    LossWeights half;
    for (auto& l : half.lambda)
        l *= 0.5;
    CHECK(weighted_loss(preds, y, mask, half).total == r.total * 0.5);

    // scaling one weight changes only that task's contribution
    LossWeights one = LossWeights{};
    one.lambda[5] *= 3.0;
    const double h_part = LossWeights{}.lambda[5] * r.per_task.at(TaskId::H);
    CHECK(weighted_loss(preds, y, mask, one).total == doctest::Approx(r.total + 2.0 * h_part).epsilon(1e-15));

    CHECK_THROWS_AS(weighted_loss(preds, y, MaskGrid(4, 4, false)), EmptySupportError);
    std::map<TaskId, Grid2D> wrong{{TaskId::NDVI, Grid2D(3, 4)}};
    CHECK_THROWS_AS(weighted_loss(wrong, y, mask), ShapeError);
}

TEST_CASE("loss ignores pixels outside the mask")
{
    TargetMaps y;
    for (auto& g : y)
        g = Grid2D(2, 2, 1.0f);
    MaskGrid mask(2, 2, true);
    mask.bits[0] = 0;
    Grid2D p(2, 2, 1.0f);
    p.set(0, 0, 100.0f);
    CHECK(weighted_loss({{TaskId::CS, p}}, y, mask).total == 0.0);
}

TEST_CASE("gradients vanish where predictions equal targets")
{
    ModelParams m = ModelParams::init(tiny_model(), 3);
    for (auto& d : m.trainable.decoders) {
        d.layers.back().weight.setZero();
        d.layers.back().bias.setZero();
    }
    auto batch = synth_samples(2, 8, 1);
    for (auto& s : batch)
        for (auto& g : s.y)
            g = Grid2D(8, 8, 0.0f);
    const BackwardResult r = backward(m, batch, {TaskId::NDVI, TaskId::H});
    CHECK(r.loss == 0.0);
    for (const auto& g : param_groups(r.grads))
        CHECK(g.value->cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gradient sets hold trainable groups only, zero for absent tasks")
{
    const ModelParams m = ModelParams::init(tiny_model(), 4);
    const auto batch = synth_samples(2, 8, 2);
    const BackwardResult r = backward(m, batch, {TaskId::GNDVI});
    CHECK(parameter_count(r.grads) == parameter_count(m.trainable));
    for (const auto& g : param_groups(r.grads)) {
        CHECK(g.name.find("backbone") == std::string::npos);
        const bool owned = g.name.find(".GNDVI.") != std::string::npos;
        if (g.name == "prompt.table") {
            for (int t = 0; t < kTaskCount; ++t)
                CHECK((g.value->row(t).cwiseAbs().maxCoeff() > 0.0) == (t == ordinal(TaskId::GNDVI)));
        } else if (!owned) {
            CHECK(g.value->cwiseAbs().maxCoeff() == 0.0);
        }
    }
    CHECK(r.per_task[ordinal(TaskId::GNDVI)] > 0.0);
    CHECK(r.per_task[ordinal(TaskId::NDVI)] == 0.0);
}

TEST_CASE("backward agrees with the loss-only path and is thread-count independent")
{
    const ModelParams m = ModelParams::init(tiny_model(), 5);
    const auto batch = synth_samples(3, 8, 3);
    const std::vector<TaskId> all(kAllTasks.begin(), kAllTasks.end());
    const BackwardResult one = backward(m, batch, all, {}, 1);
    const BackwardResult four = backward(m, batch, all, {}, 4);
    CHECK(one.loss == four.loss);
    CHECK(same_params(one.grads, four.grads));
    const auto feats = backbone_features(m, batch);
    CHECK(batch_loss(m, feats, batch, all, {}) == doctest::Approx(one.loss).epsilon(1e-14));
    CHECK_THROWS_AS(backward(m, {}, all), DomainError);
    CHECK_THROWS_AS(backward(m, batch, {}), DomainError);
}

TEST_CASE("gradient check on the tiny configuration")
{
    for (std::uint64_t seed : {1ULL, 7ULL}) {
        const GradCheckReport r = grad_check(GradCheckOptions::tiny(), seed);
        CHECK(r.all_finite);
        CHECK(r.coordinates == parameter_count(TrainableParams::init(GradCheckOptions::tiny().model, 0)));
        CHECK(r.max_rel_error < 1e-4);
    }
}

TEST_CASE("gradient check in tokenwise decoder mode")
{
    GradCheckOptions o = GradCheckOptions::tiny();
    o.model.decoder_mode = DecoderMode::Tokenwise;
    const GradCheckReport r = grad_check(o, 3);
    CHECK(r.all_finite);
    CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("gradient check detects a corrupted layer")
{
    GradCheckOptions o = GradCheckOptions::tiny();
    o.corrupt_group = "adapter.H.fc1.weight";
    o.corrupt_factor = 1.5;
    CHECK(grad_check(o, 1).max_rel_error > 1e-2);
}

TEST_CASE("gradient check on all-zero inputs stays finite")
{
    GradCheckOptions o = GradCheckOptions::tiny();
    o.zero_inputs = true;
    CHECK(grad_check(o, 1).all_finite);
}

TEST_CASE("adam")
{
    const TrainableParams p0 = TrainableParams::init(tiny_model(), 1);

    TrainableParams p = p0;
    AdamState s = AdamState::for_params(p, 1e-4);
    adam_step(s, p, p.zeros_like());
    CHECK(same_params(p, p0));

    TrainableParams q = p0;
    AdamState sq = AdamState::for_params(q, 1e-4);
    GradientSet ones = q.zeros_like();
    for (auto& g : param_groups(ones))
        g.value->setOnes();
    adam_step(sq, q, ones);
    const auto before = param_groups(p0);
    const auto after = param_groups(q);
    const double expect = 1e-4 * (1.0 / (1.0 + 1e-8));
    for (std::size_t i = 0; i < before.size(); ++i)
        CHECK(((*before[i].value - *after[i].value).array() - expect).abs().maxCoeff() < 1e-15);

    TrainableParams r1 = p0, r2 = p0;
    AdamState s1 = AdamState::for_params(r1), s2 = AdamState::for_params(r2);
    adam_step(s1, r1, ones);
    adam_step(s2, r2, ones);
    CHECK(same_params(r1, r2));

    GradientSet wrong = ones;
    wrong.prompts.resize(2, 2);
    CHECK_THROWS_AS(adam_step(s1, r1, wrong), ShapeError);
}

TEST_CASE("plateau schedule")
{
    auto run = [](std::initializer_list<double> losses) {
        PlateauState s;
        double lr = 1.0;
        std::vector<double> lrs;
        for (double l : losses) {
            lr = plateau_step(s, l, lr);
            lrs.push_back(lr);
        }
        return lrs;
    };
    CHECK(run({1.0, 0.9}) == std::vector<double>{1.0, 1.0});
    CHECK(run({1.0, 1.1, 1.2}) == std::vector<double>{1.0, 1.0, 0.5});
    CHECK(run({1.0, 1.1, 0.9}) == std::vector<double>{1.0, 1.0, 1.0});
    PlateauState s;
    CHECK_THROWS_AS(plateau_step(s, NAN, 1.0), DomainError);
}

TEST_CASE("early stopping")
{
    auto stop_epoch = [](std::initializer_list<double> losses) {
        EarlyStopState s;
        int e = 0;
        for (double l : losses) {
            ++e;
            if (early_stop_step(s, l))
                return e;
        }
        return 0;
    };
    // three non-improving epochs equal the patience: keep going
    CHECK(stop_epoch({1.0, 0.9, 0.92, 0.91, 0.93}) == 0);
    CHECK(stop_epoch({1.0, 0.9, 0.92, 0.91, 0.93, 0.95}) == 6);
    CHECK(stop_epoch({1.0, 1.0, 1.0, 1.0, 1.0}) == 5);
    CHECK(stop_epoch({5, 4, 3, 2, 1, 0.5, 0.25, 0.1}) == 0);
}

TEST_CASE("training config text round trip")
{
    TrainConfig c;
    c.max_epochs = 7;
    c.batch_size = 3;
    c.lr = 2.5e-4;
    c.augment.enabled = false;
    c.tasks = {TaskId::H, TaskId::NDVI};
    c.weights.lambda[3] = 0.5;
    c.model.decoder_layers = 2;
    c.recipe.allometry = coeffs_for(ForestType::Coniferous);
    const TrainConfig back = TrainConfig::from_text(c.to_text());
    CHECK(back.max_epochs == 7);
    CHECK(back.batch_size == 3);
    CHECK(back.lr == 2.5e-4);
    CHECK_FALSE(back.augment.enabled);
    CHECK(back.tasks == c.tasks);
    CHECK(back.weights.lambda == c.weights.lambda);
    CHECK(back.model == c.model);
    CHECK(back.recipe.allometry.forest_type == ForestType::Coniferous);
    CHECK(back.recipe.allometry.a == 0.118);
    CHECK_THROWS_AS(TrainConfig::from_text("batch_size=abc\n"), FormatError);
}

TEST_CASE("training loop determinism and frozen backbone")
{
    TrainConfig c;
    c.model = tiny_model();
    c.max_epochs = 3;
    c.batch_size = 2;
    const auto train = synth_samples(4, 8, 10, "t");
    const auto val = synth_samples(2, 8, 11, "v");
    const TrainResult a = train_loop(c, train, val, 9);
    const TrainResult b = train_loop(c, train, val, 9);
    c.threads = 3;
    const TrainResult t3 = train_loop(c, train, val, 9);
    REQUIRE(a.history.size() == 3);
    CHECK(same_params(a.model.trainable, b.model.trainable));
    CHECK(same_params(a.model.trainable, t3.model.trainable));
    CHECK(history_tsv(a.history) == history_tsv(t3.history));
    CHECK(a.backbone_hash_before == a.backbone_hash_after);
    for (std::size_t i = 1; i < a.history.size(); ++i)
        CHECK(a.history[i].lr <= a.history[i - 1].lr);

    const TrainResult other = train_loop(c, train, val, 10);
    CHECK_FALSE(same_params(a.model.trainable, other.model.trainable));

    CHECK_THROWS_AS(train_loop(c, train, {}, 1), DomainError);
    CHECK_THROWS_AS(train_loop(c, {}, val, 1), DomainError);
}

TEST_CASE("history table layout")
{
    std::vector<EpochRecord> h(2);
    h[0].epoch = 1;
    h[1].epoch = 2;
    const std::string s = history_tsv(h);
    CHECK(s.rfind("epoch\ttrain_loss\tval_loss\tlr\ttrain_NDVI", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 3);
    const auto first_line = s.substr(0, s.find('\n'));
    CHECK(std::count(first_line.begin(), first_line.end(), '\t') == 3 + 16);
}
