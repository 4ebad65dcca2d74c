#include "paddyforge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "paddyforge/loss.hpp"

namespace pf {

namespace {

std::size_t argmax_index(const Tensor& probs) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i) {
        if (probs[i] > probs[best]) best = i;
    }
    return best;
}

Tensor one_hot_row(std::size_t k, int label) {
    Tensor t({k}, 0.0f);
    t[static_cast<std::size_t>(label)] = 1.0f;
    return t;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out.good()) {
        throw IoError("cannot open for writing: " + path.string());
    }
    return out;
}

}  // namespace

std::size_t EvalReport::trace() const {
    std::size_t t = 0;
    for (std::size_t i = 0; i < confusion.size(); ++i) t += confusion[i][i];
    return t;
}

EvalReport evaluate(const Network& net, const Dataset& ds,
                    const std::optional<TtaOptions>& tta) {
    if (ds.items.empty()) {
        throw ConfigError("evaluate: dataset is empty");
    }
    const std::size_t k = ds.classes.size();
    if (static_cast<int>(k) != net.num_classes()) {
        throw ConfigError("evaluate: network expects " + std::to_string(net.num_classes()) +
                          " classes but dataset has " + std::to_string(k));
    }

    EvalReport report;
    report.confusion.assign(k, std::vector<std::size_t>(k, 0));
    report.n = ds.items.size();

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.items.size(); ++i) {
        Tensor img = load_image(ds.items[i].path);
        Tensor probs;
        if (tta && tta->policy != AugPolicy::None) {
            std::mt19937 rng(
                static_cast<std::uint32_t>(mix_seed(mix_seed(tta->seed, 0x77A0), i)));
            probs = tta_predict(net, img, tta->policy, static_cast<int>(tta->k), rng);
        } else {
            // with no augmentation tta_predict is exactly the plain
            // center-crop prediction, so both paths stay bit-identical
            std::mt19937 unused(0);
            probs = tta_predict(net, img, AugPolicy::None, 1, unused);
        }
        const std::size_t truth = static_cast<std::size_t>(ds.items[i].label);
        const std::size_t pred = argmax_index(probs);
        report.confusion[truth][pred]++;
        if (pred == truth) correct++;
        loss_sum += cross_entropy(probs, one_hot_row(k, ds.items[i].label));
    }

    report.accuracy = static_cast<double>(correct) / static_cast<double>(report.n);
    report.error_rate = 1.0 - report.accuracy;
    report.mean_loss = loss_sum / static_cast<double>(report.n);
    return report;
}

Tensor ensemble_predict(std::vector<EnsembleMember>& members, const Tensor& chw) {
    if (members.size() < 2) {
        throw ConfigError("ensemble needs at least 2 members");
    }
    for (const auto& m : members) {
        if (!(m.weight > 0.0) || !std::isfinite(m.weight)) {
            throw ConfigError("ensemble weights must be finite and positive");
        }
        if (m.classes != members.front().classes) {
            throw ConfigError("ensemble members disagree on class vocabulary");
        }
    }

    const std::size_t k = members.front().classes.size();
    std::vector<double> acc(k, 0.0);
    double weight_sum = 0.0;
    std::mt19937 unused(0);
    for (auto& m : members) {
        Tensor p = tta_predict(m.net, chw, AugPolicy::None, 1, unused);
        if (p.size() != k) {
            throw ConfigError("ensemble member emits " + std::to_string(p.size()) +
                              " classes, expected " + std::to_string(k));
        }
        for (std::size_t i = 0; i < k; ++i) acc[i] += m.weight * static_cast<double>(p[i]);
        weight_sum += m.weight;
    }
    Tensor out({k}, 0.0f);
    for (std::size_t i = 0; i < k; ++i) {
        out[i] = static_cast<float>(acc[i] / weight_sum);
    }
    return out;
}

EvalReport evaluate_ensemble(std::vector<EnsembleMember>& members, const Dataset& ds) {
    if (ds.items.empty()) {
        throw ConfigError("evaluate_ensemble: dataset is empty");
    }
    const std::size_t k = ds.classes.size();
    if (members.empty() || members.front().classes.size() != k) {
        throw ConfigError("evaluate_ensemble: class vocabulary mismatch with dataset");
    }

    EvalReport report;
    report.confusion.assign(k, std::vector<std::size_t>(k, 0));
    report.n = ds.items.size();

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& item : ds.items) {
        Tensor img = load_image(item.path);
        Tensor probs = ensemble_predict(members, img);
        const std::size_t truth = static_cast<std::size_t>(item.label);
        const std::size_t pred = argmax_index(probs);
        report.confusion[truth][pred]++;
        if (pred == truth) correct++;
        loss_sum += cross_entropy(probs, one_hot_row(k, item.label));
    }
    report.accuracy = static_cast<double>(correct) / static_cast<double>(report.n);
    report.error_rate = 1.0 - report.accuracy;
    report.mean_loss = loss_sum / static_cast<double>(report.n);
    return report;
}

void write_metrics_csv(const std::vector<EpochMetrics>& records,
                       const std::filesystem::path& path) {
    std::ofstream out = open_for_write(path);
    out << "epoch,train_loss,val_loss,val_accuracy,wall_seconds\n";
    char row[192];
    for (const auto& m : records) {
        std::snprintf(row, sizeof(row), "%zu,%.6f,%.6f,%.6f,%.6f\n", m.epoch, m.train_loss,
                      m.val_loss, m.val_accuracy, m.wall_seconds);
        out << row;
    }
    if (!out.good()) {
        throw IoError("failed writing " + path.string());
    }
}

void write_sweep_csv(const SweepRecord& record, const std::filesystem::path& path) {
    std::ofstream out = open_for_write(path);
    out << "lr,smoothed_loss\n";
    char row[96];
    for (const auto& p : record.points) {
        std::snprintf(row, sizeof(row), "%.6e,%.6e\n", p.lr, p.smoothed_loss);
        out << row;
    }
    if (!out.good()) {
        throw IoError("failed writing " + path.string());
    }
}

void write_confusion_csv(const EvalReport& report, const std::vector<std::string>& classes,
                         const std::filesystem::path& path) {
    if (classes.size() != report.confusion.size()) {
        throw ConfigError("confusion matrix size does not match class list");
    }
    std::ofstream out = open_for_write(path);
    out << "true_class";
    for (const auto& c : classes) out << "," << c;
    out << "\n";
    for (std::size_t i = 0; i < classes.size(); ++i) {
        out << classes[i];
        for (std::size_t j = 0; j < classes.size(); ++j) out << "," << report.confusion[i][j];
        out << "\n";
    }
    if (!out.good()) {
        throw IoError("failed writing " + path.string());
    }
}

}  // namespace pf
