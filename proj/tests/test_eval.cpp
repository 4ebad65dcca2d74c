#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "paddyforge/eval.hpp"
#include "paddyforge/loss.hpp"

using namespace pf;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("pf_eval_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// network whose logits are a fixed vector regardless of input
Network constant_net(Shape2D in, const std::vector<float>& logits) {
    Network net = Network::from_specs({LayerSpec::flatten(), LayerSpec::linear(logits.size())},
                                      in, 3, static_cast<int>(logits.size()), 1);
    auto params = net.parameters();
    REQUIRE(params.size() == 2);
    for (std::size_t i = 0; i < params[0]->master.size(); ++i) params[0]->master[i] = 0.0f;
    for (std::size_t i = 0; i < logits.size(); ++i) params[1]->master[i] = logits[i];
    for (auto* p : params) p->sync_working(Precision::Full32);
    return net;
}

Tensor random_image(std::mt19937& rng, std::size_t h, std::size_t w) {
    Tensor img({3, h, w}, 0.0f);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = u(rng);
    return img;
}

std::vector<std::vector<double>> parse_csv_numbers(const fs::path& path,
                                                   std::string* header = nullptr) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string line;
    REQUIRE(std::getline(in, line));
    if (header) *header = line;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(row);
    }
    return rows;
}

Tensor member_prediction(const Network& net, const Tensor& img) {
    std::mt19937 unused(0);
    return tta_predict(net, img, AugPolicy::None, 1, unused);
}

}  // namespace

TEST_CASE("evaluate: constant class-0 predictor scores 1/K on a balanced set") {
    fs::path root = fresh_dir("const");
    gen_synthetic_dataset(root, 4, 5, {8, 8}, 3);
    Dataset ds = load_image_dataset(root);

    Network net = constant_net({8, 8}, {5.0f, 0.0f, 0.0f, 0.0f});
    EvalReport r = evaluate(net, ds);
    CHECK(r.n == 20);
    CHECK(r.accuracy == doctest::Approx(0.25));
    CHECK(r.error_rate == doctest::Approx(0.75));
    for (std::size_t t = 0; t < 4; ++t) {
        CHECK(r.confusion[t][0] == 5);
        for (std::size_t p = 1; p < 4; ++p) CHECK(r.confusion[t][p] == 0);
    }
    CHECK(r.trace() == 5);
    fs::remove_all(root);
}

TEST_CASE("evaluate: relabeling to the net's own predictions gives a perfect diagonal") {
    fs::path root = fresh_dir("oracle");
    gen_synthetic_dataset(root, 4, 5, {8, 8}, 5);
    Dataset ds = load_image_dataset(root);
    Network net = build_network(Arch::MiniResNet, {8, 8}, 4, 7);

    Dataset relabeled = ds;
    for (auto& item : relabeled.items) {
        Tensor probs = member_prediction(net, load_image(item.path));
        std::size_t best = 0;
        for (std::size_t i = 1; i < probs.size(); ++i) {
            if (probs[i] > probs[best]) best = i;
        }
        item.label = static_cast<int>(best);
    }
    EvalReport r = evaluate(net, relabeled);
    CHECK(r.accuracy == 1.0);
    CHECK(r.error_rate == 0.0);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            if (i != j) CHECK(r.confusion[i][j] == 0);
        }
    }
    CHECK(r.trace() == r.n);
    fs::remove_all(root);
}

TEST_CASE("evaluate: accuracy always equals confusion trace over n") {
    fs::path root = fresh_dir("trace");
    gen_synthetic_dataset(root, 3, 4, {8, 8}, 9);
    Dataset ds = load_image_dataset(root);
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        Network net = build_network(Arch::MiniResNet, {8, 8}, 3, seed);
        EvalReport r = evaluate(net, ds);
        std::size_t total = 0;
        for (const auto& row : r.confusion) {
            for (std::size_t v : row) total += v;
        }
        CHECK(total == r.n);
        CHECK(r.accuracy ==
              doctest::Approx(static_cast<double>(r.trace()) / static_cast<double>(r.n))
                  .epsilon(1e-12));
        CHECK(r.mean_loss > 0.0);
    }
    fs::remove_all(root);
}

TEST_CASE("evaluate: TTA with policy none is exactly the plain report") {
    fs::path root = fresh_dir("ttanone");
    gen_synthetic_dataset(root, 2, 6, {10, 10}, 21);
    Dataset ds = load_image_dataset(root);
    Network net = build_network(Arch::MiniResNet, {10, 10}, 2, 3);

    EvalReport plain = evaluate(net, ds);
    EvalReport none = evaluate(net, ds, TtaOptions{AugPolicy::None, 8, 123});
    CHECK(plain.accuracy == none.accuracy);
    CHECK(plain.mean_loss == none.mean_loss);  // bit-exact, not approximate
    CHECK(plain.confusion == none.confusion);

    // real TTA is deterministic given the seed
    EvalReport a = evaluate(net, ds, TtaOptions{AugPolicy::Minimal, 3, 5});
    EvalReport b = evaluate(net, ds, TtaOptions{AugPolicy::Minimal, 3, 5});
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.mean_loss == b.mean_loss);
    CHECK(a.confusion == b.confusion);
    fs::remove_all(root);
}

TEST_CASE("evaluate input validation") {
    Dataset empty;
    empty.classes = {"a", "b"};
    Network net = build_network(Arch::MiniResNet, {8, 8}, 2, 1);
    CHECK_THROWS_AS(evaluate(net, empty), ConfigError);

    fs::path root = fresh_dir("mismatch");
    gen_synthetic_dataset(root, 4, 2, {8, 8}, 2);
    Dataset ds = load_image_dataset(root);
    CHECK_THROWS_AS(evaluate(net, ds), ConfigError);  // 2-class net, 4-class data
    fs::remove_all(root);
}

TEST_CASE("ensemble: opposing one-hot members average to 0.5") {
    std::vector<EnsembleMember> members;
    members.push_back({constant_net({6, 6}, {60.0f, 0.0f}), {"a", "b"}, 1.0});
    members.push_back({constant_net({6, 6}, {0.0f, 60.0f}), {"a", "b"}, 1.0});
    std::mt19937 rng(4);
    Tensor img = random_image(rng, 6, 6);
    Tensor p = ensemble_predict(members, img);
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(is_prob_vector(p));
}

TEST_CASE("ensemble: weight 2 is exactly a duplicated member") {
    std::vector<std::string> classes{"a", "b", "c"};
    Network a = build_network(Arch::MiniResNet, {8, 8}, 3, 31);
    Network b = build_network(Arch::MiniResNet, {8, 8}, 3, 32);

    std::vector<EnsembleMember> weighted;
    weighted.push_back({a.clone(), classes, 2.0});
    weighted.push_back({b.clone(), classes, 1.0});
    std::vector<EnsembleMember> duplicated;
    duplicated.push_back({a.clone(), classes, 1.0});
    duplicated.push_back({a.clone(), classes, 1.0});
    duplicated.push_back({b.clone(), classes, 1.0});
    // uniform weight rescaling must change nothing either
    std::vector<EnsembleMember> rescaled;
    rescaled.push_back({a.clone(), classes, 4.0});
    rescaled.push_back({b.clone(), classes, 2.0});

    std::mt19937 rng(77);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor img = random_image(rng, 8, 8);
        Tensor pw = ensemble_predict(weighted, img);
        Tensor pd = ensemble_predict(duplicated, img);
        Tensor pr = ensemble_predict(rescaled, img);
        for (std::size_t i = 0; i < pw.size(); ++i) {
            CHECK(pw[i] == pd[i]);
            CHECK(pw[i] == pr[i]);
        }
        CHECK(is_prob_vector(pw));
    }
}

TEST_CASE("ensemble: an overwhelming weight pins the argmax to that member") {
    std::vector<std::string> classes{"a", "b", "c", "d"};
    std::vector<EnsembleMember> members;
    members.push_back({build_network(Arch::MiniResNet, {8, 8}, 4, 41), classes, 1e6});
    members.push_back({build_network(Arch::MiniResNet, {8, 8}, 4, 42), classes, 1.0});

    std::mt19937 rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor img = random_image(rng, 8, 8);
        Tensor dominant = member_prediction(members[0].net, img);
        Tensor mixed = ensemble_predict(members, img);
        std::size_t am_d = 0, am_m = 0;
        for (std::size_t i = 1; i < 4; ++i) {
            if (dominant[i] > dominant[am_d]) am_d = i;
            if (mixed[i] > mixed[am_m]) am_m = i;
        }
        CHECK(am_d == am_m);
    }
}

TEST_CASE("ensemble validation errors") {
    std::vector<std::string> classes{"a", "b"};
    std::mt19937 rng(2);
    Tensor img = random_image(rng, 8, 8);

    std::vector<EnsembleMember> single;
    single.push_back({build_network(Arch::MiniResNet, {8, 8}, 2, 1), classes, 1.0});
    CHECK_THROWS_AS(ensemble_predict(single, img), ConfigError);

    std::vector<EnsembleMember> bad_weight;
    bad_weight.push_back({build_network(Arch::MiniResNet, {8, 8}, 2, 1), classes, 0.0});
    bad_weight.push_back({build_network(Arch::MiniResNet, {8, 8}, 2, 2), classes, 1.0});
    CHECK_THROWS_AS(ensemble_predict(bad_weight, img), ConfigError);

    std::vector<EnsembleMember> vocab;
    vocab.push_back({build_network(Arch::MiniResNet, {8, 8}, 2, 1), {"a", "b"}, 1.0});
    vocab.push_back({build_network(Arch::MiniResNet, {8, 8}, 2, 2), {"a", "z"}, 1.0});
    CHECK_THROWS_AS(ensemble_predict(vocab, img), ConfigError);
}

TEST_CASE("evaluate_ensemble produces a consistent report") {
    fs::path root = fresh_dir("ens");
    gen_synthetic_dataset(root, 2, 6, {8, 8}, 17);
    Dataset ds = load_image_dataset(root);

    std::vector<EnsembleMember> members;
    members.push_back({build_network(Arch::MiniResNet, {8, 8}, 2, 51), ds.classes, 1.0});
    members.push_back({build_network(Arch::MiniResNet, {8, 8}, 2, 52), ds.classes, 2.0});
    EvalReport r = evaluate_ensemble(members, ds);
    CHECK(r.n == 12);
    CHECK(r.accuracy >= 0.0);
    CHECK(r.accuracy <= 1.0);
    CHECK(r.accuracy ==
          doctest::Approx(static_cast<double>(r.trace()) / static_cast<double>(r.n)));
    CHECK(std::isfinite(r.mean_loss));
    fs::remove_all(root);
}

TEST_CASE("metrics csv: layout, 6-decimal round-trip, empty stream") {
    fs::path dir = fresh_dir("csv");
    std::vector<EpochMetrics> recs{{0, 1.386294, 1.25, 0.25, 3.5},
                                   {1, 0.9, 0.85, 0.625, 3.25},
                                   {2, 0.42, 0.5, 0.8125, 3.125}};
    fs::path p = dir / "metrics.csv";
    write_metrics_csv(recs, p);

    std::ifstream in(p);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(std::count(all.begin(), all.end(), '\n') == 4);

    std::string header;
    auto rows = parse_csv_numbers(p, &header);
    CHECK(header == "epoch,train_loss,val_loss,val_accuracy,wall_seconds");
    REQUIRE(rows.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        REQUIRE(rows[i].size() == 5);
        CHECK(rows[i][0] == doctest::Approx(static_cast<double>(recs[i].epoch)));
        CHECK(rows[i][1] == doctest::Approx(recs[i].train_loss).epsilon(1e-6));
        CHECK(rows[i][2] == doctest::Approx(recs[i].val_loss).epsilon(1e-6));
        CHECK(rows[i][3] == doctest::Approx(recs[i].val_accuracy).epsilon(1e-6));
        CHECK(rows[i][4] == doctest::Approx(recs[i].wall_seconds).epsilon(1e-6));
    }

    write_metrics_csv({}, dir / "empty.csv");
    std::ifstream ein(dir / "empty.csv");
    std::string econtent((std::istreambuf_iterator<char>(ein)),
                         std::istreambuf_iterator<char>());
    CHECK(econtent == "epoch,train_loss,val_loss,val_accuracy,wall_seconds\n");

    CHECK_THROWS_AS(write_metrics_csv(recs, dir / "no_such_dir" / "x.csv"), IoError);
    fs::remove_all(dir);
}

TEST_CASE("sweep csv keeps tiny learning rates readable") {
    fs::path dir = fresh_dir("sweepcsv");
    SweepRecord rec;
    rec.points = {{1e-7, 1.4, 1.4}, {1e-3, 1.1, 1.2}, {0.1, 0.4, 0.6}};
    fs::path p = dir / "sweep.csv";
    write_sweep_csv(rec, p);

    std::string header;
    auto rows = parse_csv_numbers(p, &header);
    CHECK(header == "lr,smoothed_loss");
    REQUIRE(rows.size() == 3);
    CHECK(rows[0][0] == doctest::Approx(1e-7).epsilon(1e-6));  // relative, not absolute
    CHECK(rows[2][1] == doctest::Approx(0.6).epsilon(1e-6));
    fs::remove_all(dir);
}

TEST_CASE("confusion csv mirrors the report") {
    fs::path dir = fresh_dir("confcsv");
    EvalReport r;
    r.confusion = {{3, 1}, {0, 4}};
    r.n = 8;
    fs::path p = dir / "confusion.csv";
    write_confusion_csv(r, {"healthy", "blast"}, p);

    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    CHECK(line == "true_class,healthy,blast");
    std::getline(in, line);
    CHECK(line == "healthy,3,1");
    std::getline(in, line);
    CHECK(line == "blast,0,4");

    EvalReport bad;
    bad.confusion = {{1}};
    CHECK_THROWS_AS(write_confusion_csv(bad, {"a", "b"}, dir / "x.csv"), ConfigError);
    fs::remove_all(dir);
}
