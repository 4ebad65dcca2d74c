#include "paddyforge/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "paddyforge/eval.hpp"
#include "paddyforge/loss.hpp"

namespace pf {

namespace {

bool all_finite(const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(t[i])) return false;
    }
    return true;
}

// master <- master - lr * grad/scale, all Full32 storage, with Kahan
// compensation so sequences of sub-ulp updates accumulate without rounding
// bias. Shared by both step flavors so the loss_scale=1 paths stay
// bit-identical.
void apply_update(Parameter& p, double lr, double inv_scale) {
    for (std::size_t i = 0; i < p.master.size(); ++i) {
        const float u =
            static_cast<float>(-(lr * (static_cast<double>(p.grad[i]) * inv_scale)));
        const float y = u - p.comp[i];
        const float t = p.master[i] + y;
        p.comp[i] = (t - p.master[i]) - y;
        p.master[i] = t;
    }
    p.sync_working(p.working.precision());
    p.zero_grad();
}

void check_step_args(double lr) {
    if (lr < 0.0 || !std::isfinite(lr)) {
        throw ConfigError("sgd step: learning rate must be finite and >= 0");
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (lr < 0.0 || !std::isfinite(lr)) {
        // lr=0 is tolerated here so a no-op epoch can serve as a diagnostic;
        // user-facing entry points require a strictly positive rate
        throw ConfigError("train config: lr must be finite and >= 0");
    }
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (accum_factor < 1) throw ConfigError("train config: accum_factor must be >= 1");
    if (batch_size % accum_factor != 0) {
        throw ConfigError("train config: batch_size must be divisible by accum_factor");
    }
    if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
    if (!(loss_scale > 0.0) || !std::isfinite(loss_scale)) {
        throw ConfigError("train config: loss_scale must be finite and > 0");
    }
    if (mixup.enabled && !(mixup.alpha > 0.0)) {
        throw ConfigError("train config: mixup alpha must be > 0");
    }
    if (image_size.height < 1 || image_size.width < 1) {
        throw ConfigError("train config: image size must be positive");
    }
    if (resize) {
        if (resize->large.height < resize->small.height || resize->large.width < resize->small.width) {
            throw ConfigError("train config: resize schedule large size is smaller than small");
        }
        if (resize->small.height < 1 || resize->small.width < 1) {
            throw ConfigError("train config: resize schedule sizes must be positive");
        }
    }
}

void sgd_step(const std::vector<Parameter*>& params, double lr) {
    check_step_args(lr);
    for (Parameter* p : params) {
        if (!p->trainable) continue;
        if (!all_finite(p->grad)) {
            throw NumericError("sgd step: non-finite gradient in parameter " + p->name);
        }
    }
    for (Parameter* p : params) {
        if (p->trainable) apply_update(*p, lr, 1.0);
    }
}

bool mixed_precision_step(const std::vector<Parameter*>& params, double lr, double loss_scale) {
    check_step_args(lr);
    if (!(loss_scale > 0.0) || !std::isfinite(loss_scale)) {
        throw ConfigError("mixed precision step: loss_scale must be finite and > 0");
    }
    bool finite = true;
    for (Parameter* p : params) {
        if (p->trainable && !all_finite(p->grad)) {
            finite = false;
            break;
        }
    }
    for (Parameter* p : params) {
        if (!p->trainable) continue;
        if (finite) {
            apply_update(*p, lr, 1.0 / loss_scale);
        } else {
            p->zero_grad();  // drop the poisoned accumulation, weights untouched
        }
    }
    return finite;
}

EpochMetrics train_epoch(Network& net, const Dataset& data, const TrainConfig& cfg,
                         std::size_t epoch, std::mt19937& rng, StepStats* stats) {
    cfg.validate();
    if (data.items.empty()) {
        throw ConfigError("train_epoch: dataset is empty");
    }
    if (static_cast<int>(data.classes.size()) != net.num_classes()) {
        throw ConfigError("train_epoch: network expects " + std::to_string(net.num_classes()) +
                          " classes but dataset has " + std::to_string(data.classes.size()));
    }

    const auto t0 = std::chrono::steady_clock::now();
    const Shape2D size = progressive_schedule(cfg, epoch).size;
    const std::size_t micro_rows = cfg.batch_size / cfg.accum_factor;
    auto params = net.parameters();

    BatchIterator batches(data, cfg.batch_size, cfg.seed, epoch, size);
    Batch batch;
    double loss_sum = 0.0;
    std::size_t rows_seen = 0;
    while (batches.next(batch)) {
        Tensor inputs = augment_batch(batch.inputs, cfg.aug_policy, rng);
        Tensor targets = batch.targets;
        const std::size_t rows = inputs.extent(0);
        if (cfg.mixup.enabled && rows >= 2) {
            MixupBatch mixed = mixup_batch(inputs, targets, cfg.mixup.alpha, rng);
            inputs = std::move(mixed.inputs);
            targets = std::move(mixed.targets);
        }

        // micro-batches accumulate gradient scaled by their share of the
        // logical batch, so the summed update equals the full-batch mean
        for (std::size_t lo = 0; lo < rows; lo += micro_rows) {
            const std::size_t hi = std::min(rows, lo + micro_rows);
            Tensor x = slice_first_dim(inputs, lo, hi);
            Tensor t = slice_first_dim(targets, lo, hi);
            ForwardContext ctx;
            Tensor logits = net.forward(x, ctx);
            loss_sum += static_cast<double>(cross_entropy(softmax(logits), t)) *
                        static_cast<double>(hi - lo);
            const double share = static_cast<double>(hi - lo) / static_cast<double>(rows);
            const double pre_scale =
                cfg.precision == TrainPrecision::Mixed ? cfg.loss_scale * share : share;
            Tensor grad = scale(softmax_xent_grad(logits, t), static_cast<float>(pre_scale));
            net.backward(ctx, grad);
        }
        rows_seen += rows;

        if (cfg.precision == TrainPrecision::Mixed) {
            if (!mixed_precision_step(params, cfg.lr, cfg.loss_scale)) {
                if (stats) stats->skipped++;
            }
        } else {
            sgd_step(params, cfg.lr);
        }
        if (stats) stats->steps++;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(rows_seen);
    m.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return m;
}

std::vector<double> geometric_lrs(double lr_min, double lr_max, std::size_t steps) {
    if (!(lr_min > 0.0) || !(lr_min < lr_max)) {
        throw ConfigError("lr sweep: need 0 < lr_min < lr_max");
    }
    if (steps < 2) {
        throw ConfigError("lr sweep: need at least 2 steps");
    }
    std::vector<double> lrs(steps);
    const double ratio = lr_max / lr_min;
    for (std::size_t k = 0; k < steps; ++k) {
        lrs[k] = lr_min * std::pow(ratio, static_cast<double>(k) /
                                              static_cast<double>(steps - 1));
    }
    lrs.back() = lr_max;
    return lrs;
}

SweepRecord sweep_with_losses(const std::vector<double>& lrs,
                              const std::function<double(double)>& step_loss, double beta) {
    if (lrs.empty()) throw ConfigError("lr sweep: no learning rates");
    if (beta < 0.0 || beta >= 1.0) {
        throw ConfigError("lr sweep: smoothing beta must lie in [0, 1)");
    }
    SweepRecord rec;
    double ema = 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < lrs.size(); ++k) {
        const double raw = step_loss(lrs[k]);
        if (!std::isfinite(raw)) {
            rec.aborted = true;  // divergence, possibly on the very first step
            break;
        }
        ema = beta * ema + (1.0 - beta) * raw;
        const double smoothed = ema / (1.0 - std::pow(beta, static_cast<double>(k + 1)));
        rec.points.push_back({lrs[k], raw, smoothed});
        if (smoothed < best) {
            best = smoothed;
        } else if (smoothed > 4.0 * best) {
            rec.aborted = true;
            break;
        }
    }
    return rec;
}

SweepRecord lr_sweep(const Network& net, const Dataset& data, const TrainConfig& cfg,
                     double lr_min, double lr_max, std::size_t steps, double beta) {
    if (steps < 10) {
        throw ConfigError("lr sweep: need at least 10 steps");
    }
    if (data.items.empty()) {
        throw ConfigError("lr sweep: dataset is empty");
    }
    Network probe = net.clone();
    auto params = probe.parameters();
    const Shape2D size = probe.input_size();

    std::size_t epoch = 0;
    BatchIterator batches(data, cfg.batch_size, cfg.seed, epoch, size);
    auto next_batch = [&](Batch& b) {
        if (!batches.next(b)) {
            batches = BatchIterator(data, cfg.batch_size, cfg.seed, ++epoch, size);
            if (!batches.next(b)) {
                throw ConfigError("lr sweep: dataset yields no batches");
            }
        }
    };

    auto step_loss = [&](double lr) -> double {
        Batch b;
        next_batch(b);
        try {
            ForwardContext ctx;
            Tensor logits = probe.forward(b.inputs, ctx);
            const double loss = cross_entropy(softmax(logits), b.targets);
            probe.backward(ctx, softmax_xent_grad(logits, b.targets));
            sgd_step(params, lr);
            return loss;
        } catch (const NumericError&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    return sweep_with_losses(geometric_lrs(lr_min, lr_max, steps), step_loss, beta);
}

double suggest_lr_valley(const SweepRecord& record) {
    if (record.points.size() < 10) {
        throw ConfigError("lr suggestion: sweep record needs at least 10 points");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < record.points.size(); ++i) {
        if (record.points[i].smoothed_loss < record.points[best].smoothed_loss) best = i;
    }
    if (best == 0) {
        throw NumericError("lr suggestion: loss only rose across the sweep; no valley found");
    }
    const double lo = record.points.front().lr;
    const double hi = record.points.back().lr;
    return std::clamp(record.points[best].lr / 10.0, lo, hi);
}

ScheduleStep progressive_schedule(const TrainConfig& cfg, std::size_t epoch) {
    if (!cfg.resize) {
        return {cfg.image_size, false};
    }
    const ResizeSchedule& rs = *cfg.resize;
    if (epoch < rs.switch_epoch) {
        return {rs.small, false};
    }
    return {rs.large, epoch == rs.switch_epoch};
}

std::vector<EpochMetrics> train_model(Network& net, const Dataset& train, const Dataset& val,
                                      const TrainConfig& cfg, StepStats* stats,
                                      std::ostream* log) {
    cfg.validate();
    if (cfg.resize && !net.accepts_variable_input()) {
        throw ConfigError(
            "progressive resizing requires an architecture with global pooling; "
            "fixed-flatten networks cannot change input size");
    }
    net.set_working_precision(cfg.precision == TrainPrecision::Mixed ? Precision::Half16
                                                                : Precision::Full32);
    std::mt19937 rng(static_cast<std::uint32_t>(mix_seed(cfg.seed, 0x7EA1A)));

    std::vector<EpochMetrics> metrics;
    metrics.reserve(cfg.epochs);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const ScheduleStep step = progressive_schedule(cfg, epoch);
        if (step.freeze_body) {
            set_trainable(net, TrainableSel::HeadOnly);
            if (log) *log << "epoch " << epoch << ": freezing body, head-only updates\n";
        }
        if (net.accepts_variable_input() && !(net.input_size() == step.size)) {
            net.set_input_size(step.size);
        }

        EpochMetrics m = train_epoch(net, train, cfg, epoch, rng, stats);
        EvalReport r = evaluate(net, val);
        m.val_loss = r.mean_loss;
        m.val_accuracy = r.accuracy;
        m.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (log) {
            *log << "epoch " << m.epoch << ": train_loss " << m.train_loss << " val_loss "
                 << m.val_loss << " val_acc " << m.val_accuracy << " (" << m.wall_seconds
                 << "s)\n";
        }
        metrics.push_back(m);
    }
    return metrics;
}

}  // namespace pf
