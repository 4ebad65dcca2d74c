#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <vector>

#include "paddyforge/augment.hpp"
#include "paddyforge/data.hpp"
#include "paddyforge/nn.hpp"

namespace pf {

struct MixupConfig {
    bool enabled = false;
    double alpha = 0.4;
};

// Training arithmetic mode: Full keeps working weights in Full32; Mixed keeps
// Half16 working copies over Full32 masters with loss-scaled gradients.
enum class TrainPrecision { Full, Mixed };

// Train on `small` images until switch_epoch, then freeze the network body
// once and continue on `large` images.
struct ResizeSchedule {
    Shape2D small{0, 0};
    std::size_t switch_epoch = 0;
    Shape2D large{0, 0};
};

struct TrainConfig {
    double lr = 0.01;
    std::size_t batch_size = 64;
    std::size_t accum_factor = 1;  // micro-batch size = batch_size / accum_factor
    TrainPrecision precision = TrainPrecision::Full;
    std::size_t epochs = 1;
    std::uint64_t seed = 0;
    MixupConfig mixup;
    AugPolicy aug_policy = AugPolicy::Minimal;
    std::optional<ResizeSchedule> resize;
    double loss_scale = 1.0;       // gradient pre-scale under Mixed precision
    Shape2D image_size{32, 32};    // training size when no resize schedule is set

    void validate() const;  // throws ConfigError on any violated constraint
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    double wall_seconds = 0.0;
};

struct SweepPoint {
    double lr = 0.0;
    double raw_loss = 0.0;
    double smoothed_loss = 0.0;
};

struct SweepRecord {
    std::vector<SweepPoint> points;  // lrs strictly increasing
    bool aborted = false;
};

struct StepStats {
    std::size_t steps = 0;
    std::size_t skipped = 0;  // mixed-precision steps dropped due to inf/nan grads
};

// One vanilla-SGD update: for every trainable parameter, master <- master -
// lr*grad in Full32, working re-derived from master at its current precision,
// grad zeroed. Non-finite gradients raise NumericError naming the parameter.
void sgd_step(const std::vector<Parameter*>& params, double lr);

// Mixed-precision variant: gradients are unscaled by 1/loss_scale first; if
// any trainable gradient is non-finite the whole update is skipped (grads
// still zeroed) and false is returned. With loss_scale=1 and finite grads this
// is bit-identical to sgd_step.
bool mixed_precision_step(const std::vector<Parameter*>& params, double lr, double loss_scale);

// One pass over `data` in seeded-shuffle order. Each logical batch is
// augmented and (optionally) mixed up as a whole, then split into
// batch_size/accum_factor micro-batches whose gradient contributions are
// scaled so the accumulated update equals the full-batch mean gradient; one
// optimizer step is taken per logical batch. Returns the epoch's mean train
// loss; val fields are left for the caller.
EpochMetrics train_epoch(Network& net, const Dataset& data, const TrainConfig& cfg,
                         std::size_t epoch, std::mt19937& rng, StepStats* stats = nullptr);

// steps geometrically spaced values covering [lr_min, lr_max] inclusive.
std::vector<double> geometric_lrs(double lr_min, double lr_max, std::size_t steps);

// Core sweep loop shared by lr_sweep and surrogate-loss tests: step_loss(lr)
// performs one optimization step and returns the raw batch loss. Losses are
// smoothed with a bias-corrected EMA (factor beta); the sweep aborts when the
// smoothed loss exceeds 4x the best seen, or immediately on a non-finite loss.
SweepRecord sweep_with_losses(const std::vector<double>& lrs,
                              const std::function<double(double)>& step_loss,
                              double beta = 0.98);

// Learning-rate range test: clones `net`, takes one mini-batch step per lr on
// consecutive batches, and records the smoothed loss curve. The probed clone
// is discarded; `net` itself is never touched.
SweepRecord lr_sweep(const Network& net, const Dataset& data, const TrainConfig& cfg,
                     double lr_min = 1e-7, double lr_max = 10.0, std::size_t steps = 100,
                     double beta = 0.98);

// Valley rule: one decade below the smoothed-loss minimum, clamped into the
// swept range. A minimum at the very first point means the loss only ever
// rose, so there is no valley to report (NumericError).
double suggest_lr_valley(const SweepRecord& record);

struct ScheduleStep {
    Shape2D size{0, 0};
    bool freeze_body = false;  // emitted exactly once, at the switch epoch
};

ScheduleStep progressive_schedule(const TrainConfig& cfg, std::size_t epoch);

// Full training driver: per epoch applies the progressive-resize schedule
// (freezing the body once at the switch), runs train_epoch, and evaluates on
// `val` to fill val_loss / val_accuracy / wall_seconds. Optional `log` gets
// one human-readable line per epoch.
std::vector<EpochMetrics> train_model(Network& net, const Dataset& train, const Dataset& val,
                                      const TrainConfig& cfg, StepStats* stats = nullptr,
                                      std::ostream* log = nullptr);

}  // namespace pf
