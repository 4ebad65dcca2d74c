#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "paddyforge/augment.hpp"
#include "paddyforge/data.hpp"
#include "paddyforge/nn.hpp"
#include "paddyforge/optim.hpp"

namespace pf {

struct EvalReport {
    double accuracy = 0.0;
    double error_rate = 0.0;                            // 1 - accuracy
    double mean_loss = 0.0;                             // mean cross-entropy
    std::vector<std::vector<std::size_t>> confusion;    // [true][predicted]
    std::size_t n = 0;

    std::size_t trace() const;
};

struct TtaOptions {
    AugPolicy policy = AugPolicy::Minimal;
    std::size_t k = 4;  // augmented copies beyond the original
    std::uint64_t seed = 0;
};

// Argmax of plain (or TTA-averaged) class probabilities against true labels.
// Images are center-cropped/resized to the network's input size. TTA with
// policy none is bit-identical to evaluating without TTA.
EvalReport evaluate(const Network& net, const Dataset& ds,
                    const std::optional<TtaOptions>& tta = std::nullopt);

struct EnsembleMember {
    Network net;
    std::vector<std::string> classes;
    double weight = 1.0;
};

// Weighted mean of member softmax outputs: sum(w_m * p_m) / sum(w_m).
// Requires >= 2 members, positive finite weights, identical class vocabulary.
Tensor ensemble_predict(std::vector<EnsembleMember>& members, const Tensor& chw);

EvalReport evaluate_ensemble(std::vector<EnsembleMember>& members, const Dataset& ds);

// header `epoch,train_loss,val_loss,val_accuracy,wall_seconds`, 6 decimals.
void write_metrics_csv(const std::vector<EpochMetrics>& records,
                       const std::filesystem::path& path);

// header `lr,smoothed_loss`; scientific notation so tiny lrs survive parsing.
void write_sweep_csv(const SweepRecord& record, const std::filesystem::path& path);

// header `true_class,<predicted class names...>`, one row of counts per class.
void write_confusion_csv(const EvalReport& report, const std::vector<std::string>& classes,
                         const std::filesystem::path& path);

}  // namespace pf
