#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "planmae/error.hpp"

using namespace planmae;

namespace {

std::vector<Raster> small_corpus(int n, int size, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Raster> out;
    for (int i = 0; i < n; ++i) out.push_back(testing::random_raster(rng, size, size, Mode::line_drawing));
    return out;
}

bool same_params(const ModelParams<float>& a, const ModelParams<float>& b) {
    const auto ta = tensor_list(a), tb = tensor_list(b);
    for (std::size_t i = 0; i < ta.size(); ++i)
        if (*ta[i] != *tb[i]) return false;
    return true;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("masked mse: zero residual and constant residual") {
    Rng rng(1);
    const auto a = patchify(testing::random_raster(rng, 4, 4, Mode::line_drawing), 2);
    const auto plan = plan_explicit(a.grid, {1});
    CHECK(masked_mse(a, a, plan).loss == 0.0);

    PatchSequence b = a;
    for (auto& v : b.patches[1]) v = (v >= 0.5f) ? v - 0.5f : v + 0.5f;
    // visible patches are ignored entirely
    b.patches[0].assign(4, 0.0f);
    const auto r = masked_mse(b, a, plan);
    CHECK(r.loss == doctest::Approx(0.25).epsilon(1e-7));
    CHECK(r.n_masked_values == 4);
    CHECK(masked_mse(b, a, plan_explicit(a.grid, {})).loss == 0.0);
}

TEST_CASE("masked mse equals a double-loop oracle") {
    Rng rng(2);
    for (int t = 0; t < 20; ++t) {
        const auto pred = patchify(testing::random_raster(rng, 4, 4, Mode::line_drawing), 2);
        const auto target = patchify(testing::random_raster(rng, 4, 4, Mode::line_drawing), 2);
        const auto plan = plan_random(pred.grid, 0.5, static_cast<std::uint64_t>(t));
        REQUIRE(plan.num_masked() == 2);
        const auto flags = plan.mask_flags();
        double sum = 0.0;
        int count = 0;
        for (int i = 0; i < 4; ++i) {
            if (!flags[static_cast<std::size_t>(i)]) continue;
            for (int j = 0; j < 4; ++j) {
                const double d = double(pred.patches[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) -
                                 double(target.patches[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
                sum += d * d;
                ++count;
            }
        }
        CHECK(std::abs(masked_mse(pred, target, plan).loss - sum / count) < 1e-12);
    }
}

TEST_CASE("training loss agrees with masked mse of the decoded prediction") {
    const auto c = testing::tiny_config(3);
    const auto p = testing::random_params(c, 3);
    Rng rng(3);
    const auto seq = patchify(testing::random_raster(rng, 4, 4, Mode::line_drawing), 2);
    const auto plan = plan_random(c.grid(), 0.5, 1);
    const auto pred = decode(p, c, encode(p, c, seq, plan), plan);
    const auto g = grad(p, c, {seq}, {plan});
    CHECK(std::abs(g.loss - masked_mse(pred, seq, plan).loss) < 1e-6);
}

TEST_CASE("analytic gradients match central finite differences") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto c = testing::tiny_config(seed);
        Rng rng(seed * 31);
        std::vector<PatchSequence> batch;
        std::vector<MaskPlan> plans;
        for (int b = 0; b < 2; ++b) {
            batch.push_back(patchify(testing::random_raster(rng, 4, 4, Mode::line_drawing), 2));
            plans.push_back(plan_random(c.grid(), 0.5, seed * 10 + b));
        }
        const auto r = testing::finite_difference_check(c, testing::random_params(c, seed), batch, plans);
        CHECK(r.max_rel_error < 1e-4);
        CHECK(r.entries > 1000);
    }
}

TEST_CASE("mask token gradient is exactly zero when nothing is masked") {
    const auto c = testing::tiny_config(4);
    Rng rng(4);
    const auto seq = patchify(testing::random_raster(rng, 4, 4, Mode::line_drawing), 2);
    const auto g = grad(testing::random_params(c, 4), c, {seq}, {plan_random(c.grid(), 0.0, 0)});
    CHECK(g.loss == 0.0);
    CHECK((g.grads.mask_token.array() == 0.0).all());
    // and with something masked it is not
    const auto g2 = grad(testing::random_params(c, 4), c, {seq}, {plan_random(c.grid(), 0.5, 0)});
    CHECK(g2.grads.mask_token.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("scaling the loss scales every gradient entry") {
    const auto c = testing::tiny_config(5);
    const auto p = testing::random_params(c, 5);
    Rng rng(5);
    const auto seq = patchify(testing::random_raster(rng, 4, 4, Mode::line_drawing), 2);
    const auto plan = plan_random(c.grid(), 0.75, 2);
    const auto g1 = grad(p, c, {seq}, {plan});
    const auto g2 = grad(p, c, {seq}, {plan}, 2.0);
    const auto a = tensor_list(g1.grads), b = tensor_list(g2.grads);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(((*b[i]) - 2.0 * (*a[i])).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("a small step against the gradient lowers the loss") {
    int improved = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto c = testing::tiny_config(seed);
        auto p = init_params<double>(c);
        Rng rng(seed + 100);
        const auto seq = patchify(testing::random_raster(rng, 4, 4, Mode::line_drawing), 2);
        const auto plan = plan_random(c.grid(), 0.5, seed);
        const auto g = grad(p, c, {seq}, {plan});
        auto pt = tensor_list(p);
        const auto gt = tensor_list(g.grads);
        for (std::size_t i = 0; i < pt.size(); ++i) *pt[i] -= 1e-3 * (*gt[i]);
        if (grad(p, c, {seq}, {plan}).loss < g.loss) ++improved;
    }
    CHECK(improved == 20);
}

TEST_CASE("first bias-corrected update of p=1, g=1 at lr 0.1 gives 0.9") {
    const auto c = testing::tiny_config(0);
    auto params = ModelParams<float>::zeros(c);
    auto grads = ModelParams<float>::zeros(c);
    for (auto* m : tensor_list(params)) m->setOnes();
    for (auto* m : tensor_list(grads)) m->setOnes();
    auto opt = OptState::for_params(c);
    opt.learning_rate = 0.1;
    opt.beta1 = 0.9;
    opt.beta2 = 0.999;
    opt.epsilon = 1e-8;
    opt.weight_decay = 0.0;
    step(params, opt, grads);
    // m_hat = 1, v_hat = 1 after correction: p = 1 - 0.1 * 1 / (1 + 1e-8)
    const double want = 1.0 - 0.1 / (1.0 + 1e-8);
    for (auto* m : tensor_list(params)) CHECK((m->array().cast<double>() - want).abs().maxCoeff() < 1e-6);
    CHECK(opt.step == 1);
}

TEST_CASE("weight decay touches weight matrices only") {
    const auto c = testing::tiny_config(0);
    auto params = ModelParams<float>::zeros(c);
    for (auto* m : tensor_list(params)) m->setOnes();
    auto opt = OptState::for_params(c);
    opt.learning_rate = 0.1;
    opt.weight_decay = 0.5;
    step(params, opt, ModelParams<float>::zeros(c));
    for_each_tensor(params, [](const std::string& name, const Mat<float>& m) {
        const bool weight = name.size() > 7 && name.compare(name.size() - 7, 7, ".weight") == 0;
        CHECK((m.array() == (weight ? 0.95f : 1.0f)).all());
    });
}

TEST_CASE("zero gradients and no decay leave params and moments unchanged") {
    const auto c = testing::tiny_config(1);
    auto params = init_params<float>(c);
    const auto before = params;
    auto opt = OptState::for_params(c);
    opt.weight_decay = 0.0;
    const auto m0 = opt.m, v0 = opt.v;
    step(params, opt, ModelParams<float>::zeros(c));
    CHECK(same_params(params, before));
    CHECK(same_params(opt.m, m0));
    CHECK(same_params(opt.v, v0));
    CHECK(opt.step == 1);
}

TEST_CASE("mismatched gradient layout is rejected") {
    auto c = testing::tiny_config(1);
    auto params = init_params<float>(c);
    auto opt = OptState::for_params(c);
    auto other = c;
    other.enc_dim = 12;
    try {
        step(params, opt, ModelParams<float>::zeros(other));
        FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ShapeMismatch);
    }
}

TEST_CASE("learning rate schedule: warmup then cosine") {
    TrainConfig t;
    t.steps = 200;
    t.learning_rate = 1e-3;
    CHECK(t.effective_warmup() == 10);
    CHECK(t.lr_at(0) == doctest::Approx(1e-4));
    CHECK(t.lr_at(9) == doctest::Approx(1e-3));
    CHECK(t.lr_at(10) == doctest::Approx(1e-3));
    CHECK(t.lr_at(105) == doctest::Approx(5e-4));
    CHECK(t.lr_at(199) < 1e-6);
    for (std::int64_t s = 10; s < 199; ++s) CHECK(t.lr_at(s + 1) <= t.lr_at(s));
}

TEST_CASE("batches visit every image once per epoch") {
    TrainConfig t;
    t.batch_size = 4;
    t.seed = 3;
    std::vector<int> seen(12, 0);
    for (std::int64_t s = 0; s < 3; ++s)
        for (auto i : batch_indices(t, 12, s)) ++seen[i];
    for (int k : seen) CHECK(k == 1);
    CHECK(batch_indices(t, 12, 5) == batch_indices(t, 12, 5));
    CHECK(batch_indices(t, 12, 0) != batch_indices(t, 12, 3));
}

TEST_CASE("fit is deterministic and resumable") {
    const auto c = testing::tiny_config(9);
    TrainConfig t;
    t.batch_size = 3;
    t.steps = 10;
    t.learning_rate = 1e-2;
    t.seed = 4;
    const auto corpus = small_corpus(7, 4, 1);
    const auto a = fit(c, t, corpus);
    const auto b = fit(c, t, corpus);
    CHECK(same_params(a.state.params, b.state.params));
    REQUIRE(a.history.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) CHECK(a.history[i].loss == b.history[i].loss);

    // the schedule depends on the total step count, so resume uses the full
    // config with a state that stopped after five steps
    TrainState stopped;
    fit(c, t, corpus, std::nullopt, [&](const TrainState& s, const HistoryRow& row) {
        if (row.step == 5) stopped = s;
    });
    const auto resumed = fit(c, t, corpus, stopped);
    CHECK(resumed.history.size() == 5);
    CHECK(same_params(resumed.state.params, a.state.params));
    CHECK(resumed.history.back().loss == a.history.back().loss);
}

TEST_CASE("zero learning rate leaves the initial params in place") {
    const auto c = testing::tiny_config(2);
    TrainConfig t;
    t.batch_size = 2;
    t.steps = 4;
    t.learning_rate = 0.0;
    t.weight_decay = 0.0;
    const auto r = fit(c, t, small_corpus(4, 4, 2));
    CHECK(same_params(r.state.params, init_params<float>(c)));
}

TEST_CASE("fit rejects empty and mis-sized corpora") {
    const auto c = testing::tiny_config(2);
    TrainConfig t;
    t.steps = 1;
    try {
        fit(c, t, {});
        FAIL("expected EmptyCorpus");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyCorpus);
    }
    CHECK_THROWS_AS(fit(c, t, small_corpus(2, 8, 0)), Error);
}

TEST_CASE("train config json round trip") {
    TrainConfig t;
    t.steps = 77;
    t.strategy = StrategySpec::parse("corner:0.75:br");
    t.seed = 123456789012345ULL;
    CHECK(train_config_from_json(to_json(t)) == t);
    TrainConfig bad;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

}
