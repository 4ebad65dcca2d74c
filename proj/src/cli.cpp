#include "paddyforge/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "paddyforge/augment.hpp"
#include "paddyforge/checkpoint.hpp"
#include "paddyforge/data.hpp"
#include "paddyforge/errors.hpp"
#include "paddyforge/eval.hpp"
#include "paddyforge/nn.hpp"
#include "paddyforge/optim.hpp"

namespace pf {
namespace {

namespace fs = std::filesystem;

std::string fmt_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

// FNV-1a over the resolved-config text; stored in checkpoints so identical
// invocations stamp identical hashes on every platform.
std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

double parse_positive_double(const std::string& text, const std::string& flag) {
    double v = 0.0;
    std::size_t used = 0;
    bool ok = !text.empty();
    if (ok) {
        try {
            v = std::stod(text, &used);
        } catch (const std::exception&) {
            ok = false;
        }
    }
    if (!ok || used != text.size() || !std::isfinite(v) || v <= 0.0) {
        throw ConfigError(flag + " expects a positive number, got '" + text + "'");
    }
    return v;
}

int parse_positive_int(const std::string& text, const std::string& flag) {
    long v = 0;
    std::size_t used = 0;
    bool ok = !text.empty();
    if (ok) {
        try {
            v = std::stol(text, &used);
        } catch (const std::exception&) {
            ok = false;
        }
    }
    if (!ok || used != text.size() || v < 1 || v > std::numeric_limits<int>::max()) {
        throw ConfigError(flag + " expects a positive integer, got '" + text + "'");
    }
    return static_cast<int>(v);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            parts.push_back(s.substr(start));
            return parts;
        }
        parts.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

Arch parse_arch(const std::string& s) {
    if (s == "convnet") return Arch::BaselineConvNet;
    if (s == "mini-resnet") return Arch::MiniResNet;
    throw ConfigError("--arch must be convnet or mini-resnet, got '" + s + "'");
}

int min_input_extent(const std::string& arch) { return arch == "convnet" ? 8 : 4; }

// "SMALL:EPOCH:LARGE", e.g. 128:4:224 -> train at 128 until epoch 4, then 224.
ResizeSchedule parse_resize(const std::string& text) {
    auto parts = split(text, ':');
    if (parts.size() != 3) {
        throw ConfigError("--resize expects SMALL:EPOCH:LARGE, got '" + text + "'");
    }
    int small = parse_positive_int(parts[0], "--resize SMALL");
    long epoch = 0;
    std::size_t used = 0;
    bool ok = !parts[1].empty();
    if (ok) {
        try {
            epoch = std::stol(parts[1], &used);
        } catch (const std::exception&) {
            ok = false;
        }
    }
    if (!ok || used != parts[1].size() || epoch < 0) {
        throw ConfigError("--resize EPOCH must be a non-negative integer, got '" + parts[1] + "'");
    }
    int large = parse_positive_int(parts[2], "--resize LARGE");
    if (large < small) {
        throw ConfigError("--resize LARGE must be >= SMALL, got '" + text + "'");
    }
    return ResizeSchedule{{small, small}, static_cast<std::size_t>(epoch), {large, large}};
}

Shape2D parse_size(const std::string& text) {
    auto parts = split(text, 'x');
    if (parts.size() != 2) {
        throw ConfigError("--size expects HxW, e.g. 32x32, got '" + text + "'");
    }
    return {parse_positive_int(parts[0], "--size height"),
            parse_positive_int(parts[1], "--size width")};
}

struct MemberSpec {
    std::string path;
    double weight = 1.0;
};

// "CKPT:WEIGHT"; the weight may be omitted (defaults to 1).
MemberSpec parse_member(const std::string& text) {
    std::size_t pos = text.rfind(':');
    if (pos == std::string::npos) return {text, 1.0};
    MemberSpec spec;
    spec.path = text.substr(0, pos);
    spec.weight = parse_positive_double(text.substr(pos + 1), "--member weight");
    if (spec.path.empty()) throw ConfigError("--member expects CKPT:WEIGHT, got '" + text + "'");
    return spec;
}

using KV = std::pair<std::string, std::string>;

// Prints every resolved knob; returns a fingerprint of the training-relevant
// ones (artifact locations excluded, so reruns into another directory still
// stamp the same config hash).
std::string print_config(std::ostream& out, const std::string& command,
                         const std::vector<KV>& entries) {
    std::string blob = "command=" + command;
    out << "config: command = " << command << "\n";
    for (const auto& [k, v] : entries) {
        out << "config: " << k << " = " << v << "\n";
        if (k != "data" && k != "out") blob += " " + k + "=" + v;
    }
    return blob;
}

void check_vocabulary(const std::vector<std::string>& model, const std::vector<std::string>& data,
                      const std::string& what) {
    if (model == data) return;
    std::string msg = what + " class vocabulary does not match the dataset:";
    msg += " model has {";
    for (std::size_t i = 0; i < model.size(); ++i) msg += (i ? "," : "") + model[i];
    msg += "}, dataset has {";
    for (std::size_t i = 0; i < data.size(); ++i) msg += (i ? "," : "") + data[i];
    msg += "}";
    throw ConfigError(msg);
}

// ---- train ------------------------------------------------------------------

struct TrainFlags {
    std::string data;
    std::string arch;
    std::size_t epochs = 0;
    std::size_t batch = 64;
    std::string lr = "0.01";
    std::size_t accum = 1;
    std::string precision = "fp32";
    std::string aug = "minimal";
    std::string mixup_raw;
    bool mixup_given = false;
    std::string resize;
    std::vector<std::string> init{"random"};
    std::string freeze = "none";
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    int img_size = 32;
    bool img_size_given = false;
    double val_frac = 0.2;
    double loss_scale = 1024.0;
};

int run_train(const TrainFlags& f, std::ostream& out) {
    // Resolve and validate every flag before any file is touched.
    TrainConfig cfg;
    cfg.batch_size = f.batch;
    cfg.accum_factor = f.accum;
    cfg.precision = f.precision == "mixed" ? TrainPrecision::Mixed : TrainPrecision::Full;
    cfg.epochs = f.epochs;
    cfg.seed = f.seed;
    cfg.aug_policy = parse_aug_policy(f.aug);
    cfg.loss_scale = f.loss_scale;
    cfg.image_size = {f.img_size, f.img_size};

    bool lr_auto = f.lr == "auto";
    cfg.lr = lr_auto ? 0.01 : parse_positive_double(f.lr, "--lr");

    if (f.mixup_given) {
        cfg.mixup.enabled = true;
        // A bare `--mixup` parses as the flag literal; keep the default alpha.
        if (!f.mixup_raw.empty() && f.mixup_raw != "true") {
            cfg.mixup.alpha = parse_positive_double(f.mixup_raw, "--mixup");
        }
    }

    if (!f.resize.empty()) {
        if (f.arch == "convnet") {
            throw ConfigError("--resize needs an architecture with global pooling; "
                              "convnet flattens a fixed grid (use mini-resnet)");
        }
        cfg.resize = parse_resize(f.resize);
    }

    bool from_checkpoint = false;
    std::string ckpt_path;
    if (f.init.size() == 1 && f.init[0] == "random") {
        // default
    } else if (f.init.size() == 2 && f.init[0] == "checkpoint") {
        from_checkpoint = true;
        ckpt_path = f.init[1];
    } else {
        throw ConfigError("--init expects 'random' or 'checkpoint PATH'");
    }

    if (f.img_size < min_input_extent(f.arch)) {
        throw ConfigError("--img-size must be at least " +
                          std::to_string(min_input_extent(f.arch)) + " for " + f.arch);
    }
    if (!(f.val_frac > 0.0 && f.val_frac < 1.0)) {
        throw ConfigError("--val-frac must lie strictly between 0 and 1");
    }
    cfg.validate();

    std::vector<KV> entries{
        {"data", f.data},
        {"arch", f.arch},
        {"epochs", std::to_string(f.epochs)},
        {"batch", std::to_string(f.batch)},
        {"micro_batch", std::to_string(f.batch / f.accum)},
        {"lr", lr_auto ? "auto" : fmt_num(cfg.lr)},
        {"accum", std::to_string(f.accum)},
        {"precision", f.precision},
        {"aug", f.aug},
        {"mixup", cfg.mixup.enabled ? fmt_num(cfg.mixup.alpha) : "off"},
        {"resize", f.resize.empty() ? "off" : f.resize},
        {"init", from_checkpoint ? "checkpoint " + ckpt_path : "random"},
        {"freeze", f.freeze},
        {"img_size", std::to_string(f.img_size)},
        {"val_frac", fmt_num(f.val_frac)},
        {"loss_scale", fmt_num(f.loss_scale)},
        {"out", f.out_dir},
        {"seed", std::to_string(f.seed)},
    };
    std::string config_blob = print_config(out, "train", entries);

    Dataset full = load_image_dataset(f.data);
    Split split = stratified_split(full, f.val_frac, f.seed);
    out << "dataset: " << full.size() << " items, " << full.classes.size() << " classes ("
        << split.train.size() << " train / " << split.val.size() << " val)\n";

    Network net;
    if (from_checkpoint) {
        LoadedCheckpoint loaded = load_checkpoint(ckpt_path);
        if (loaded.net.arch_name() != f.arch) {
            throw ConfigError("checkpoint architecture '" + loaded.net.arch_name() +
                              "' does not match --arch " + f.arch);
        }
        check_vocabulary(loaded.classes, full.classes, "checkpoint");
        net = std::move(loaded.net);
        if (f.img_size_given) {
            Shape2D want{f.img_size, f.img_size};
            if (!(net.input_size() == want)) net.set_input_size(want);
        }
        cfg.image_size = net.input_size();
    } else {
        net = build_network(parse_arch(f.arch), cfg.image_size,
                            static_cast<int>(full.classes.size()), f.seed);
    }

    if (f.freeze == "body") {
        set_trainable(net, TrainableSel::HeadOnly);
        out << "freeze: body parameters frozen, training layers from index "
            << net.head_start() << "\n";
    }

    if (lr_auto) {
        SweepRecord record = lr_sweep(net, split.train, cfg);
        cfg.lr = suggest_lr_valley(record);
        out << "lr finder: suggested lr = " << fmt_num(cfg.lr) << " from "
            << record.points.size() << " points" << (record.aborted ? " (aborted early)" : "")
            << "\n";
    }

    StepStats stats;
    std::vector<EpochMetrics> metrics = train_model(net, split.train, split.val, cfg, &stats, &out);

    fs::create_directories(f.out_dir);
    fs::path metrics_path = fs::path(f.out_dir) / "metrics.csv";
    fs::path model_path = fs::path(f.out_dir) / "model.ckpt";
    write_metrics_csv(metrics, metrics_path);
    save_checkpoint(net, full.classes, {cfg.epochs, fnv1a_hex(config_blob), f.seed}, model_path);

    const EpochMetrics& last = metrics.back();
    out << "final: val_loss = " << fmt_num(last.val_loss)
        << ", val_accuracy = " << fmt_num(last.val_accuracy) << "\n";
    if (cfg.precision == TrainPrecision::Mixed) {
        out << "mixed precision: " << stats.skipped << " of " << stats.steps
            << " steps skipped\n";
    }
    out << "wrote " << metrics_path.string() << "\n";
    out << "wrote " << model_path.string() << "\n";
    return 0;
}

// ---- lr-find ------------------------------------------------------------------

struct LrFindFlags {
    std::string data;
    std::string arch;
    double lr_min = 1e-7;
    double lr_max = 10.0;
    std::size_t steps = 100;
    std::size_t batch = 64;
    std::uint64_t seed = 0;
    int img_size = 32;
    std::string out_dir = "out";
};

int run_lr_find(const LrFindFlags& f, std::ostream& out) {
    if (f.steps < 10) {
        throw ConfigError("--steps must be at least 10, got " + std::to_string(f.steps));
    }
    if (!(f.lr_min > 0.0) || !(f.lr_max > f.lr_min)) {
        throw ConfigError("--lr-min must be positive and below --lr-max");
    }
    if (f.img_size < min_input_extent(f.arch)) {
        throw ConfigError("--img-size must be at least " +
                          std::to_string(min_input_extent(f.arch)) + " for " + f.arch);
    }
    TrainConfig cfg;
    cfg.batch_size = f.batch;
    cfg.seed = f.seed;
    cfg.image_size = {f.img_size, f.img_size};
    cfg.aug_policy = AugPolicy::None;
    cfg.validate();

    print_config(out, "lr-find",
                 {{"data", f.data},
                  {"arch", f.arch},
                  {"lr_min", fmt_num(f.lr_min)},
                  {"lr_max", fmt_num(f.lr_max)},
                  {"steps", std::to_string(f.steps)},
                  {"batch", std::to_string(f.batch)},
                  {"img_size", std::to_string(f.img_size)},
                  {"out", f.out_dir},
                  {"seed", std::to_string(f.seed)}});

    Dataset ds = load_image_dataset(f.data);
    Network net = build_network(parse_arch(f.arch), cfg.image_size,
                                static_cast<int>(ds.classes.size()), f.seed);
    SweepRecord record = lr_sweep(net, ds, cfg, f.lr_min, f.lr_max, f.steps);

    fs::create_directories(f.out_dir);
    fs::path csv = fs::path(f.out_dir) / "lr_sweep.csv";
    write_sweep_csv(record, csv);
    out << "sweep: " << record.points.size() << " points"
        << (record.aborted ? " (aborted on divergence)" : "") << "\n";
    out << "wrote " << csv.string() << "\n";

    double lr = suggest_lr_valley(record);  // no valley -> NumericError, exit 3
    out << "suggested lr: " << fmt_num(lr) << "\n";
    return 0;
}

// ---- eval ---------------------------------------------------------------------

struct EvalFlags {
    std::string model;
    std::string data;
    std::size_t tta = 0;
    std::uint64_t seed = 0;
    std::string out_dir = "out";
};

int run_eval(const EvalFlags& f, std::ostream& out) {
    print_config(out, "eval",
                 {{"model", f.model},
                  {"data", f.data},
                  {"tta", std::to_string(f.tta)},
                  {"out", f.out_dir},
                  {"seed", std::to_string(f.seed)}});

    LoadedCheckpoint loaded = load_checkpoint(f.model);
    Dataset ds = load_image_dataset(f.data);
    check_vocabulary(loaded.classes, ds.classes, "model");

    std::optional<TtaOptions> tta;
    if (f.tta > 0) tta = TtaOptions{AugPolicy::Minimal, f.tta, f.seed};
    EvalReport report = evaluate(loaded.net, ds, tta);

    fs::create_directories(f.out_dir);
    fs::path csv = fs::path(f.out_dir) / "confusion.csv";
    write_confusion_csv(report, ds.classes, csv);
    out << "eval: n = " << report.n << ", accuracy = " << fmt_num(report.accuracy)
        << ", error_rate = " << fmt_num(report.error_rate)
        << ", mean_loss = " << fmt_num(report.mean_loss) << "\n";
    out << "wrote " << csv.string() << "\n";
    return 0;
}

// ---- ensemble -------------------------------------------------------------------

struct EnsembleFlags {
    std::vector<std::string> members;
    std::string data;
    std::string out_dir = "out";
};

int run_ensemble(const EnsembleFlags& f, std::ostream& out) {
    if (f.members.size() < 2) {
        throw ConfigError("ensemble needs at least two --member CKPT:WEIGHT entries");
    }
    std::vector<MemberSpec> specs;
    for (const std::string& m : f.members) specs.push_back(parse_member(m));

    std::vector<KV> entries;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        entries.push_back({"member_" + std::to_string(i),
                           specs[i].path + " (weight " + fmt_num(specs[i].weight) + ")"});
    }
    entries.push_back({"data", f.data});
    entries.push_back({"out", f.out_dir});
    print_config(out, "ensemble", entries);

    Dataset ds = load_image_dataset(f.data);
    std::vector<EnsembleMember> members;
    for (const MemberSpec& spec : specs) {
        LoadedCheckpoint loaded = load_checkpoint(spec.path);
        check_vocabulary(loaded.classes, ds.classes, spec.path);
        members.push_back({std::move(loaded.net), std::move(loaded.classes), spec.weight});
    }

    // Error decomposition: each member alone, then the weighted average.
    double err_sum = 0.0;
    for (std::size_t i = 0; i < members.size(); ++i) {
        EvalReport solo = evaluate(members[i].net, ds);
        err_sum += solo.error_rate;
        out << "member " << i << ": " << specs[i].path << " weight " << fmt_num(specs[i].weight)
            << " accuracy = " << fmt_num(solo.accuracy)
            << " error = " << fmt_num(solo.error_rate) << "\n";
    }
    out << "mean member error = " << fmt_num(err_sum / static_cast<double>(members.size()))
        << "\n";

    EvalReport report = evaluate_ensemble(members, ds);
    fs::create_directories(f.out_dir);
    fs::path csv = fs::path(f.out_dir) / "confusion.csv";
    write_confusion_csv(report, ds.classes, csv);
    out << "ensemble: n = " << report.n << ", accuracy = " << fmt_num(report.accuracy)
        << ", error_rate = " << fmt_num(report.error_rate)
        << ", mean_loss = " << fmt_num(report.mean_loss) << "\n";
    out << "wrote " << csv.string() << "\n";
    return 0;
}

// ---- gen-synth ------------------------------------------------------------------

struct GenSynthFlags {
    int classes = 0;
    int per_class = 0;
    std::string size = "32x32";
    std::uint64_t seed = 0;
    std::string out_dir;
};

int run_gen_synth(const GenSynthFlags& f, std::ostream& out) {
    Shape2D size = parse_size(f.size);
    print_config(out, "gen-synth",
                 {{"classes", std::to_string(f.classes)},
                  {"per_class", std::to_string(f.per_class)},
                  {"size", f.size},
                  {"out", f.out_dir},
                  {"seed", std::to_string(f.seed)}});

    gen_synthetic_dataset(f.out_dir, f.classes, f.per_class, size, f.seed);
    out << "wrote " << static_cast<long long>(f.classes) * f.per_class << " images under "
        << f.out_dir << "\n";
    return 0;
}

}  // namespace

int run_cli(std::vector<std::string> args, std::ostream& out) {
    CLI::App app{"image-classification training engine"};
    app.name("paddyforge");
    app.require_subcommand(1);

    TrainFlags tf;
    CLI::App* train = app.add_subcommand("train", "train a network and write metrics + checkpoint");
    train->add_option("--data", tf.data, "dataset directory (class-per-folder PPM images)")
        ->required();
    train->add_option("--arch", tf.arch, "network architecture")
        ->required()
        ->check(CLI::IsMember({"convnet", "mini-resnet"}));
    train->add_option("--epochs", tf.epochs, "number of training epochs")
        ->required()
        ->check(CLI::PositiveNumber);
    train->add_option("--batch", tf.batch, "logical batch size")->check(CLI::PositiveNumber);
    train->add_option("--lr", tf.lr, "learning rate, or 'auto' to run the range finder first");
    train->add_option("--accum", tf.accum, "gradient accumulation factor")
        ->check(CLI::PositiveNumber);
    train->add_option("--precision", tf.precision, "arithmetic mode")
        ->check(CLI::IsMember({"fp32", "mixed"}));
    train->add_option("--aug", tf.aug, "augmentation policy")
        ->check(CLI::IsMember({"none", "minimal", "full"}));
    CLI::Option* mix = train->add_option("--mixup", tf.mixup_raw,
                                         "enable mixup; optionally pass alpha (default 0.4)")
                           ->expected(0, 1);
    train->add_option("--resize", tf.resize, "progressive resizing schedule SMALL:EPOCH:LARGE");
    train->add_option("--init", tf.init, "'random' or 'checkpoint PATH'")->expected(1, 2);
    train->add_option("--freeze", tf.freeze, "freeze everything below the head")
        ->check(CLI::IsMember({"none", "body"}));
    train->add_option("--seed", tf.seed, "master random seed");
    train->add_option("--out", tf.out_dir, "output directory for metrics.csv and model.ckpt");
    CLI::Option* imgsz = train->add_option("--img-size", tf.img_size,
                                           "square training image size (default 32, or the "
                                           "checkpoint's size when fine-tuning)")
                             ->check(CLI::PositiveNumber);
    train->add_option("--val-frac", tf.val_frac, "validation fraction of the dataset");
    train->add_option("--loss-scale", tf.loss_scale, "static loss scale under mixed precision")
        ->check(CLI::PositiveNumber);

    LrFindFlags lf;
    CLI::App* lrfind = app.add_subcommand("lr-find", "learning-rate range test + valley suggestion");
    lrfind->add_option("--data", lf.data, "dataset directory")->required();
    lrfind->add_option("--arch", lf.arch, "network architecture")
        ->required()
        ->check(CLI::IsMember({"convnet", "mini-resnet"}));
    lrfind->add_option("--lr-min", lf.lr_min, "sweep start (default 1e-7)");
    lrfind->add_option("--lr-max", lf.lr_max, "sweep end (default 10)");
    lrfind->add_option("--steps", lf.steps, "sweep points, minimum 10 (default 100)");
    lrfind->add_option("--batch", lf.batch, "batch size per sweep step")
        ->check(CLI::PositiveNumber);
    lrfind->add_option("--seed", lf.seed, "master random seed");
    lrfind->add_option("--img-size", lf.img_size, "square image size")->check(CLI::PositiveNumber);
    lrfind->add_option("--out", lf.out_dir, "output directory for lr_sweep.csv");

    EvalFlags ef;
    CLI::App* evalc = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    evalc->add_option("--model", ef.model, "checkpoint file")->required();
    evalc->add_option("--data", ef.data, "dataset directory")->required();
    evalc->add_option("--tta", ef.tta, "test-time augmentation copies (0 disables)");
    evalc->add_option("--seed", ef.seed, "TTA random seed");
    evalc->add_option("--out", ef.out_dir, "output directory for confusion.csv");

    EnsembleFlags nf;
    CLI::App* ens = app.add_subcommand("ensemble", "evaluate a weighted checkpoint ensemble");
    ens->add_option("--member", nf.members, "checkpoint member as CKPT:WEIGHT (repeatable)")
        ->required();
    ens->add_option("--data", nf.data, "dataset directory")->required();
    ens->add_option("--out", nf.out_dir, "output directory for confusion.csv");

    GenSynthFlags gf;
    CLI::App* gen = app.add_subcommand("gen-synth", "generate a deterministic synthetic dataset");
    gen->add_option("--classes", gf.classes, "number of classes (2-10)")
        ->required()
        ->check(CLI::PositiveNumber);
    gen->add_option("--per-class", gf.per_class, "images per class")
        ->required()
        ->check(CLI::PositiveNumber);
    gen->add_option("--size", gf.size, "image size as HxW (default 32x32)");
    gen->add_option("--seed", gf.seed, "generator seed");
    gen->add_option("--out", gf.out_dir, "output dataset directory")->required();

    try {
        std::reverse(args.begin(), args.end());  // CLI11's vector parse pops from the back
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        out << "usage error: " << e.what() << "\n";
        return 1;
    }

    tf.mixup_given = mix->count() > 0;
    tf.img_size_given = imgsz->count() > 0;

    try {
        if (train->parsed()) return run_train(tf, out);
        if (lrfind->parsed()) return run_lr_find(lf, out);
        if (evalc->parsed()) return run_eval(ef, out);
        if (ens->parsed()) return run_ensemble(nf, out);
        if (gen->parsed()) return run_gen_synth(gf, out);
        out << "usage error: no command given\n";
        return 1;
    } catch (const ConfigError& e) {
        out << "config error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        out << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const ShapeError& e) {
        out << "shape error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        out << "format error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        out << "io error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace pf
