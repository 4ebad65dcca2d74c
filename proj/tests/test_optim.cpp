#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "paddyforge/eval.hpp"
#include "paddyforge/loss.hpp"
#include "paddyforge/optim.hpp"

using namespace pf;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dataset(const std::string& name, int classes, int per_class, Shape2D size,
                       std::uint64_t seed) {
    fs::path p = fs::temp_directory_path() / ("pf_optim_" + name);
    fs::remove_all(p);
    gen_synthetic_dataset(p, classes, per_class, size, seed);
    return p;
}

Parameter make_param(const std::string& name, std::vector<float> vals) {
    const std::size_t n = vals.size();
    return Parameter(name, Tensor({n}, std::move(vals)));
}

std::vector<float> masters_of(Network& net) {
    std::vector<float> out;
    for (const Parameter* p : const_cast<const Network&>(net).parameters()) {
        out.insert(out.end(), p->master.data(), p->master.data() + p->master.size());
    }
    return out;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
    REQUIRE(a.size() == b.size());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    }
    return m;
}

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.lr = 0.05;
    cfg.batch_size = 4;
    cfg.accum_factor = 1;
    cfg.epochs = 1;
    cfg.seed = 11;
    cfg.aug_policy = AugPolicy::None;
    cfg.image_size = {8, 8};
    return cfg;
}

}  // namespace

TEST_CASE("sgd_step: update rule, zeroing, frozen parameters") {
    Parameter p = make_param("w", {1.0f, 2.0f});
    p.grad[0] = 0.5f;
    p.grad[1] = -1.0f;
    sgd_step({&p}, 0.1);
    CHECK(p.master[0] == 0.95f);  // 1.0 - 0.1*0.5, exact in binary32
    CHECK(p.master[1] == 2.1f);
    CHECK(p.working[0] == p.master[0]);
    CHECK(p.grad[0] == 0.0f);
    CHECK(p.grad[1] == 0.0f);

    // zero gradient: weights untouched bitwise
    Parameter q = make_param("q", {0.37f});
    sgd_step({&q}, 0.5);
    CHECK(q.master[0] == 0.37f);

    // lr = 0: weights untouched, grads still cleared
    Parameter r = make_param("r", {1.5f});
    r.grad[0] = 3.0f;
    sgd_step({&r}, 0.0);
    CHECK(r.master[0] == 1.5f);
    CHECK(r.grad[0] == 0.0f);

    // frozen parameters are skipped entirely
    Parameter f = make_param("f", {1.0f});
    f.trainable = false;
    f.grad[0] = 9.0f;
    sgd_step({&f}, 0.1);
    CHECK(f.master[0] == 1.0f);
    CHECK(f.grad[0] == 9.0f);

    CHECK_THROWS_AS(sgd_step({&p}, -0.1), ConfigError);
}

TEST_CASE("sgd_step: non-finite gradients name the offending parameter") {
    Parameter ok = make_param("fine", {1.0f});
    Parameter bad = make_param("conv3.kernel", {1.0f, 2.0f});
    bad.grad[1] = std::numeric_limits<float>::infinity();
    try {
        sgd_step({&ok, &bad}, 0.1);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("conv3.kernel") != std::string::npos);
    }
    // the healthy parameter must not have been half-updated
    CHECK(ok.master[0] == 1.0f);
}

TEST_CASE("master accumulates 100 sub-half-ulp updates that pure Half16 loses") {
    Parameter p = make_param("w", {1.0f});
    p.sync_working(Precision::Half16);

    // first step: the master moves by less than a half ulp, so the working
    // mirror cannot follow yet
    p.grad[0] = -1e-4f;
    sgd_step({&p}, 1.0);
    CHECK(p.master[0] > 1.0f);
    CHECK(p.working[0] == 1.0f);

    for (int i = 0; i < 99; ++i) {
        p.grad[0] = -1e-4f;  // update magnitude 1e-4, below half spacing 9.77e-4
        sgd_step({&p}, 1.0);
        CHECK(p.working[0] == half_round(p.master[0]));  // mirror tracks master
    }
    CHECK(std::abs((p.master[0] - 1.0f) - 1e-2) <= 1e-6);

    // pure-Half16 control: the same additions round away to nothing, forever
    float control = 1.0f;
    for (int i = 0; i < 100; ++i) control = half_round(control + 1e-4f);
    CHECK(control == 1.0f);
}

TEST_CASE("mixed_precision_step: unscaling, skip-on-overflow, degenerate equality") {
    // loss_scale=1 is bit-identical to sgd_step
    Parameter a = make_param("a", {0.8f, -0.3f});
    Parameter b = make_param("b", {0.8f, -0.3f});
    a.grad[0] = b.grad[0] = 0.123f;
    a.grad[1] = b.grad[1] = -0.456f;
    sgd_step({&a}, 0.07);
    CHECK(mixed_precision_step({&b}, 0.07, 1.0));
    CHECK(a.master[0] == b.master[0]);
    CHECK(a.master[1] == b.master[1]);

    // power-of-two scale: pre-scaled grads unscale to the identical update
    Parameter c = make_param("c", {0.8f});
    Parameter d = make_param("d", {0.8f});
    c.grad[0] = 0.123f;
    d.grad[0] = 0.123f * 1024.0f;
    sgd_step({&c}, 0.07);
    CHECK(mixed_precision_step({&d}, 0.07, 1024.0));
    CHECK(c.master[0] == d.master[0]);

    // non-finite gradient: skip, report false, clear grads, leave weights
    Parameter e = make_param("e", {1.0f, 2.0f});
    e.grad[0] = std::numeric_limits<float>::quiet_NaN();
    e.grad[1] = 5.0f;
    CHECK_FALSE(mixed_precision_step({&e}, 0.1, 8.0));
    CHECK(e.master[0] == 1.0f);
    CHECK(e.master[1] == 2.0f);
    CHECK(e.grad[1] == 0.0f);

    CHECK_THROWS_AS(mixed_precision_step({&e}, 0.1, 0.0), ConfigError);
}

TEST_CASE("train config validation") {
    TrainConfig cfg = tiny_config();
    CHECK_NOTHROW(cfg.validate());

    TrainConfig bad = cfg;
    bad.lr = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.batch_size = 6;
    bad.accum_factor = 4;  // not divisible
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.loss_scale = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.resize = ResizeSchedule{{16, 16}, 2, {8, 8}};  // large smaller than small
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.mixup = {true, 0.0};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("train_epoch: determinism and the lr=0 no-op") {
    fs::path root = fresh_dataset("det", 2, 8, {8, 8}, 31);
    Dataset ds = load_image_dataset(root);

    TrainConfig cfg = tiny_config();
    cfg.aug_policy = AugPolicy::Minimal;

    Network n1 = build_network(Arch::BaselineConvNet, {8, 8}, 2, 5);
    Network n2 = n1.clone();
    std::mt19937 r1(99), r2(99);
    EpochMetrics m1 = train_epoch(n1, ds, cfg, 0, r1);
    EpochMetrics m2 = train_epoch(n2, ds, cfg, 0, r2);
    CHECK(m1.train_loss == m2.train_loss);
    CHECK(masters_of(n1) == masters_of(n2));

    // lr = 0: parameters bitwise unchanged; loss equals the initial model's
    Network frozen = build_network(Arch::BaselineConvNet, {8, 8}, 2, 5);
    std::vector<float> before = masters_of(frozen);
    TrainConfig zero = tiny_config();
    zero.lr = 0.0;
    std::mt19937 r3(1);
    EpochMetrics mz = train_epoch(frozen, ds, zero, 0, r3);
    CHECK(masters_of(frozen) == before);
    EvalReport initial = evaluate(frozen, ds);
    CHECK(mz.train_loss == doctest::Approx(initial.mean_loss).epsilon(1e-5));
    fs::remove_all(root);
}

TEST_CASE("train_epoch: gradient accumulation reproduces full-batch training") {
    fs::path root = fresh_dataset("accum", 2, 8, {8, 8}, 41);
    Dataset ds = load_image_dataset(root);

    for (AugPolicy policy : {AugPolicy::None, AugPolicy::Minimal}) {
        Network full = build_network(Arch::BaselineConvNet, {8, 8}, 2, 9);
        Network accum = full.clone();

        TrainConfig cfg = tiny_config();
        cfg.batch_size = 8;
        cfg.aug_policy = policy;

        TrainConfig split = cfg;
        split.accum_factor = 4;  // micro-batches of 2

        std::mt19937 r1(7), r2(7);
        train_epoch(full, ds, cfg, 0, r1);
        train_epoch(accum, ds, split, 0, r2);
        CHECK(max_abs_diff(masters_of(full), masters_of(accum)) <= 1e-5);
    }
    fs::remove_all(root);
}

TEST_CASE("train_epoch: mixup runs deterministically and keeps loss finite") {
    fs::path root = fresh_dataset("mixup", 2, 6, {8, 8}, 51);
    Dataset ds = load_image_dataset(root);

    TrainConfig cfg = tiny_config();
    cfg.mixup = {true, 0.4};

    Network n1 = build_network(Arch::BaselineConvNet, {8, 8}, 2, 3);
    Network n2 = n1.clone();
    std::mt19937 r1(5), r2(5);
    EpochMetrics m1 = train_epoch(n1, ds, cfg, 0, r1);
    EpochMetrics m2 = train_epoch(n2, ds, cfg, 0, r2);
    CHECK(std::isfinite(m1.train_loss));
    CHECK(m1.train_loss == m2.train_loss);
    CHECK(masters_of(n1) == masters_of(n2));
    fs::remove_all(root);
}

TEST_CASE("train_epoch input validation") {
    Network net = build_network(Arch::BaselineConvNet, {8, 8}, 2, 1);
    std::mt19937 rng(1);

    Dataset empty;
    empty.classes = {"a", "b"};
    CHECK_THROWS_AS(train_epoch(net, empty, tiny_config(), 0, rng), ConfigError);

    fs::path root = fresh_dataset("classes", 4, 2, {8, 8}, 61);
    Dataset four = load_image_dataset(root);
    CHECK_THROWS_AS(train_epoch(net, four, tiny_config(), 0, rng), ConfigError);
    fs::remove_all(root);
}

TEST_CASE("train_epoch: mixed precision keeps workings on the half grid") {
    fs::path root = fresh_dataset("mixedprec", 2, 8, {8, 8}, 71);
    Dataset ds = load_image_dataset(root);

    Network net = build_network(Arch::BaselineConvNet, {8, 8}, 2, 13);
    net.set_working_precision(Precision::Half16);
    TrainConfig cfg = tiny_config();
    cfg.precision = TrainPrecision::Mixed;
    cfg.loss_scale = 1024.0;

    StepStats stats;
    std::mt19937 rng(3);
    EpochMetrics m = train_epoch(net, ds, cfg, 0, rng, &stats);
    CHECK(std::isfinite(m.train_loss));
    CHECK(stats.steps == 4);    // 16 items / batch 4
    CHECK(stats.skipped == 0);
    bool any_divergence = false;
    for (const Parameter* p : const_cast<const Network&>(net).parameters()) {
        for (std::size_t i = 0; i < p->working.size(); ++i) {
            CHECK(p->working[i] == half_round(p->working[i]));
            if (p->working[i] != p->master[i]) any_divergence = true;
        }
    }
    CHECK(any_divergence);  // masters hold precision the working copy cannot
    fs::remove_all(root);
}

TEST_CASE("geometric_lrs spans the range with uniform log spacing") {
    auto lrs = geometric_lrs(1e-7, 10.0, 100);
    REQUIRE(lrs.size() == 100);
    CHECK(lrs.front() == 1e-7);
    CHECK(lrs.back() == 10.0);
    const double ratio = lrs[1] / lrs[0];
    for (std::size_t i = 1; i < lrs.size(); ++i) {
        CHECK(lrs[i] > lrs[i - 1]);
        CHECK(lrs[i] / lrs[i - 1] == doctest::Approx(ratio).epsilon(1e-9));
    }
    // must bracket 0.01 tightly enough for the valley rule to be meaningful
    double closest = 1e9;
    for (double lr : lrs) closest = std::min(closest, std::abs(std::log10(lr / 0.01)));
    CHECK(closest < std::log10(ratio));

    CHECK_THROWS_AS(geometric_lrs(0.0, 1.0, 10), ConfigError);
    CHECK_THROWS_AS(geometric_lrs(1.0, 0.5, 10), ConfigError);
    CHECK_THROWS_AS(geometric_lrs(1e-3, 1.0, 1), ConfigError);
}

TEST_CASE("sweep smoothing: quadratic bowl decreases then aborts at blow-up") {
    // gradient descent on the bowl f(w) = (3/2)(w - 1/3)^2 + 1/3 contracts the
    // error by (1 - 3*lr) per step and oscillates divergently once lr > 2/3;
    // the minimum 1/3 is not binary-representable, so the iterate can never
    // land on it exactly and the blow-up phase is guaranteed. Every quantity
    // below has a closed form we replay independently.
    auto lrs = geometric_lrs(1e-3, 10.0, 60);
    auto bowl = [](double w) {
        const double d = w - 1.0 / 3.0;
        return 1.5 * d * d + 1.0 / 3.0;
    };

    double w_sim = 1.0;
    auto step_loss = [&](double lr) {
        const double loss = bowl(w_sim);
        w_sim = w_sim * (1.0 - 3.0 * lr) + lr;
        return loss;
    };
    SweepRecord rec = sweep_with_losses(lrs, step_loss, 0.98);

    // oracle replay
    double w = 1.0, ema = 0.0;
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> smoothed_oracle;
    bool aborted_oracle = false;
    for (std::size_t k = 0; k < lrs.size(); ++k) {
        const double raw = bowl(w);
        w = w * (1.0 - 3.0 * lrs[k]) + lrs[k];
        if (!std::isfinite(raw)) {
            aborted_oracle = true;
            break;
        }
        ema = 0.98 * ema + 0.02 * raw;
        const double sm = ema / (1.0 - std::pow(0.98, static_cast<double>(k + 1)));
        smoothed_oracle.push_back(sm);
        if (sm < best) {
            best = sm;
        } else if (sm > 4.0 * best) {
            aborted_oracle = true;
            break;
        }
    }

    CHECK(rec.aborted == aborted_oracle);
    CHECK(rec.aborted);
    REQUIRE(rec.points.size() == smoothed_oracle.size());
    CHECK(rec.points.size() < lrs.size());
    for (std::size_t i = 0; i < rec.points.size(); ++i) {
        CHECK(rec.points[i].smoothed_loss ==
              doctest::Approx(smoothed_oracle[i]).epsilon(1e-12));
        CHECK(rec.points[i].lr == lrs[i]);
    }
    // the curve went down before it blew up
    std::size_t argmin = 0;
    for (std::size_t i = 1; i < rec.points.size(); ++i) {
        if (rec.points[i].smoothed_loss < rec.points[argmin].smoothed_loss) argmin = i;
    }
    CHECK(argmin > 0);
    CHECK(argmin < rec.points.size() - 1);
}

TEST_CASE("sweep smoothing: beta=0 passes raw losses through; first-step divergence aborts") {
    auto lrs = geometric_lrs(1e-3, 1.0, 12);
    int calls = 0;
    auto noisy = [&](double) {
        ++calls;
        return 1.0 + 0.1 * calls;
    };
    SweepRecord rec = sweep_with_losses(lrs, noisy, 0.0);
    for (const auto& p : rec.points) {
        CHECK(p.smoothed_loss == p.raw_loss);
    }

    auto diverge = [](double) { return std::numeric_limits<double>::quiet_NaN(); };
    SweepRecord dead = sweep_with_losses(lrs, diverge, 0.98);
    CHECK(dead.aborted);
    CHECK(dead.points.empty());

    CHECK_THROWS_AS(sweep_with_losses(lrs, noisy, 1.0), ConfigError);
    CHECK_THROWS_AS(sweep_with_losses({}, noisy, 0.5), ConfigError);
}

TEST_CASE("lr_sweep: leaves the model untouched and is deterministic") {
    fs::path root = fresh_dataset("sweep", 2, 10, {8, 8}, 81);
    Dataset ds = load_image_dataset(root);
    Network net = build_network(Arch::BaselineConvNet, {8, 8}, 2, 17);

    std::vector<float> before = masters_of(net);
    TrainConfig cfg = tiny_config();
    SweepRecord r1 = lr_sweep(net, ds, cfg, 1e-5, 1.0, 15);
    CHECK(masters_of(net) == before);  // probe ran on a clone

    SweepRecord r2 = lr_sweep(net, ds, cfg, 1e-5, 1.0, 15);
    REQUIRE(r1.points.size() == r2.points.size());
    CHECK(r1.aborted == r2.aborted);
    for (std::size_t i = 0; i < r1.points.size(); ++i) {
        CHECK(r1.points[i].lr == r2.points[i].lr);
        CHECK(r1.points[i].smoothed_loss == r2.points[i].smoothed_loss);
    }
    CHECK(r1.points.size() <= 15);
    CHECK(r1.points.size() >= 10);  // tame range should not abort instantly

    CHECK_THROWS_AS(lr_sweep(net, ds, cfg, 1e-5, 1.0, 9), ConfigError);
    fs::remove_all(root);
}

TEST_CASE("suggest_lr_valley: decade-before-minimum rule with clamping") {
    auto lrs = geometric_lrs(1e-4, 1.0, 13);  // includes 1e-1 exactly at index 9
    SweepRecord rec;
    for (std::size_t i = 0; i < lrs.size(); ++i) {
        const double sm = std::abs(std::log10(lrs[i]) + 1.0);  // V-shape, min at 0.1
        rec.points.push_back({lrs[i], sm, sm});
    }
    CHECK(suggest_lr_valley(rec) == doctest::Approx(0.01).epsilon(1e-12));

    // minimum near the low end clamps up to the swept floor
    SweepRecord low;
    for (std::size_t i = 0; i < lrs.size(); ++i) {
        const double sm = (i == 1) ? 0.1 : 1.0;
        low.points.push_back({lrs[i], sm, sm});
    }
    CHECK(suggest_lr_valley(low) == lrs.front());

    SweepRecord rising;
    for (std::size_t i = 0; i < lrs.size(); ++i) {
        low.points[i].smoothed_loss = 1.0 + static_cast<double>(i);
        rising.points.push_back({lrs[i], 0.0, 1.0 + static_cast<double>(i)});
    }
    CHECK_THROWS_AS(suggest_lr_valley(rising), NumericError);

    SweepRecord tiny;
    tiny.points = {{1e-3, 1.0, 1.0}, {1e-2, 0.5, 0.5}};
    CHECK_THROWS_AS(suggest_lr_valley(tiny), ConfigError);
}

TEST_CASE("valley suggestion drives a logistic toy to >=90% loss reduction") {
    // two separable blobs, full-batch logistic regression
    std::mt19937 rng(19);
    std::normal_distribution<double> noise(0.0, 0.5);
    std::vector<std::array<double, 2>> xs;
    std::vector<double> ys;
    for (int i = 0; i < 20; ++i) {
        xs.push_back({-2.0 + noise(rng), noise(rng)});
        ys.push_back(0.0);
        xs.push_back({2.0 + noise(rng), noise(rng)});
        ys.push_back(1.0);
    }
    std::array<double, 3> w{};
    auto loss_at = [&]() {
        double L = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double z = w[0] * xs[i][0] + w[1] * xs[i][1] + w[2];
            const double p = 1.0 / (1.0 + std::exp(-z));
            L += ys[i] > 0.5 ? -std::log(std::max(p, 1e-12))
                             : -std::log(std::max(1.0 - p, 1e-12));
        }
        return L / static_cast<double>(xs.size());
    };
    auto gd_step = [&](double lr) {
        std::array<double, 3> g{};
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double z = w[0] * xs[i][0] + w[1] * xs[i][1] + w[2];
            const double d = 1.0 / (1.0 + std::exp(-z)) - ys[i];
            g[0] += d * xs[i][0];
            g[1] += d * xs[i][1];
            g[2] += d;
        }
        for (int j = 0; j < 3; ++j) w[j] -= lr * g[j] / static_cast<double>(xs.size());
    };

    auto lrs = geometric_lrs(1e-4, 100.0, 40);
    auto step_loss = [&](double lr) {
        const double L = loss_at();
        gd_step(lr);
        return L;
    };
    SweepRecord rec = sweep_with_losses(lrs, step_loss, 0.98);
    REQUIRE(rec.points.size() >= 10);
    const double suggestion = suggest_lr_valley(rec);
    CHECK(suggestion >= lrs.front());
    CHECK(suggestion <= lrs.back());

    w = {};  // retrain from scratch at the suggested rate
    const double initial = loss_at();
    for (int step = 0; step < 100; ++step) gd_step(suggestion);
    CHECK(loss_at() <= 0.1 * initial);
}

TEST_CASE("progressive_schedule: sizes and the one-shot freeze signal") {
    TrainConfig cfg = tiny_config();
    cfg.image_size = {8, 8};

    // no schedule: constant size, never freezes
    for (std::size_t e = 0; e < 5; ++e) {
        ScheduleStep s = progressive_schedule(cfg, e);
        CHECK(s.size == Shape2D{8, 8});
        CHECK_FALSE(s.freeze_body);
    }

    cfg.resize = ResizeSchedule{{8, 8}, 4, {12, 12}};
    int freezes = 0;
    for (std::size_t e = 0; e < 8; ++e) {
        ScheduleStep s = progressive_schedule(cfg, e);
        if (e < 4) {
            CHECK(s.size == Shape2D{8, 8});
        } else {
            CHECK(s.size == Shape2D{12, 12});
        }
        if (s.freeze_body) {
            ++freezes;
            CHECK(e == 4);
        }
    }
    CHECK(freezes == 1);
}

TEST_CASE("train_model: full driver with progressive resizing on a pooled net") {
    fs::path root = fresh_dataset("driver", 2, 10, {12, 12}, 91);
    Dataset ds = load_image_dataset(root);
    Split split = stratified_split(ds, 0.25, 1);

    TrainConfig cfg = tiny_config();
    cfg.batch_size = 5;
    cfg.epochs = 2;
    cfg.lr = 0.02;
    cfg.resize = ResizeSchedule{{8, 8}, 1, {12, 12}};

    // flatten-based nets cannot change size mid-run
    Network convnet = build_network(Arch::BaselineConvNet, {8, 8}, 2, 1);
    CHECK_THROWS_AS(train_model(convnet, split.train, split.val, cfg), ConfigError);

    Network net = build_network(Arch::MiniResNet, {8, 8}, 2, 23);
    StepStats stats;
    auto metrics = train_model(net, split.train, split.val, cfg, &stats);
    REQUIRE(metrics.size() == 2);
    CHECK(net.input_size() == Shape2D{12, 12});
    for (const auto& m : metrics) {
        CHECK(std::isfinite(m.train_loss));
        CHECK(std::isfinite(m.val_loss));
        CHECK(m.val_accuracy >= 0.0);
        CHECK(m.val_accuracy <= 1.0);
        CHECK(m.wall_seconds >= 0.0);
    }
    CHECK(stats.steps > 0);

    // after the switch the body is frozen: epoch 1 must not move body masters,
    // so a 1-epoch run reproduces the final body bitwise
    Network replay = build_network(Arch::MiniResNet, {8, 8}, 2, 23);
    TrainConfig one = cfg;
    one.epochs = 1;
    train_model(replay, split.train, split.val, one);

    const std::size_t head = net.head_start();
    auto trained = net.parameters();
    auto replayed = replay.parameters();
    REQUIRE(trained.size() == replayed.size());
    std::size_t body_params = 0;
    bool head_moved = false;
    for (std::size_t li = 0; li < net.num_layers(); ++li) {
        auto tp = net.layer(li).parameters();
        auto rp = replay.layer(li).parameters();
        for (std::size_t k = 0; k < tp.size(); ++k) {
            const bool same = std::equal(tp[k]->master.data(),
                                         tp[k]->master.data() + tp[k]->master.size(),
                                         rp[k]->master.data());
            if (li < head) {
                CHECK(same);
                CHECK_FALSE(tp[k]->trainable);
                ++body_params;
            } else if (!same) {
                head_moved = true;
            }
        }
    }
    CHECK(body_params > 0);
    CHECK(head_moved);
    fs::remove_all(root);
}

TEST_CASE("train_model determinism across reruns") {
    fs::path root = fresh_dataset("rerun", 2, 8, {8, 8}, 101);
    Dataset ds = load_image_dataset(root);
    Split split = stratified_split(ds, 0.25, 2);

    TrainConfig cfg = tiny_config();
    cfg.epochs = 2;
    cfg.aug_policy = AugPolicy::Full;

    Network n1 = build_network(Arch::BaselineConvNet, {8, 8}, 2, 29);
    Network n2 = n1.clone();
    auto m1 = train_model(n1, split.train, split.val, cfg);
    auto m2 = train_model(n2, split.train, split.val, cfg);
    REQUIRE(m1.size() == m2.size());
    for (std::size_t i = 0; i < m1.size(); ++i) {
        CHECK(m1[i].train_loss == m2[i].train_loss);
        CHECK(m1[i].val_loss == m2[i].val_loss);
        CHECK(m1[i].val_accuracy == m2[i].val_accuracy);
    }
    CHECK(masters_of(n1) == masters_of(n2));
    fs::remove_all(root);
}
