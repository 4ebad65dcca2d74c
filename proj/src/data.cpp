#include "paddyforge/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace pf {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void bad_ppm(const std::string& what, std::size_t offset) {
    throw FormatError("ppm: " + what + " at byte " + std::to_string(offset));
}

// Whitespace/comment-aware header scanner that remembers its byte offset.
struct PpmScanner {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    bool eof() const { return pos >= bytes.size(); }

    void skip_space_and_comments() {
        while (!eof()) {
            const char c = static_cast<char>(bytes[pos]);
            if (c == '#') {
                while (!eof() && bytes[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    }

    int read_int() {
        skip_space_and_comments();
        if (eof() || !std::isdigit(bytes[pos])) {
            bad_ppm("expected an integer", pos);
        }
        long v = 0;
        while (!eof() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > 1000000) bad_ppm("integer out of range", pos);
            ++pos;
        }
        return static_cast<int>(v);
    }
};

float srgb_like_sample(const std::uint8_t* p, bool wide, int maxval) {
    const int raw = wide ? (p[0] << 8) | p[1] : p[0];
    return static_cast<float>(raw) / static_cast<float>(maxval);
}

void hsv_to_rgb(float h, float s, float v, float rgb[3]) {
    h = h - std::floor(h);
    const float c = v * s;
    const float hp = h * 6.0f;
    const float x = c * (1.0f - std::fabs(std::fmod(hp, 2.0f) - 1.0f));
    float r = 0.0f, g = 0.0f, b = 0.0f;
    switch (static_cast<int>(hp)) {
        case 0: r = c; g = x; break;
        case 1: r = x; g = c; break;
        case 2: g = c; b = x; break;
        case 3: g = x; b = c; break;
        case 4: r = x; b = c; break;
        default: r = c; b = x; break;
    }
    const float m = v - c;
    rgb[0] = r + m;
    rgb[1] = g + m;
    rgb[2] = b + m;
}

}  // namespace

Tensor decode_ppm(const std::vector<std::uint8_t>& bytes) {
    PpmScanner sc{bytes};
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
        bad_ppm("bad magic (want P6)", 0);
    }
    sc.pos = 2;
    const int w = sc.read_int();
    const int h = sc.read_int();
    const int maxval = sc.read_int();
    if (w < 1 || h < 1) bad_ppm("non-positive dimensions", sc.pos);
    if (maxval < 1 || maxval > 65535) bad_ppm("maxval out of range [1,65535]", sc.pos);
    if (sc.eof()) bad_ppm("missing whitespace after maxval", sc.pos);
    ++sc.pos;  // exactly one whitespace byte separates header and payload

    const bool wide = maxval > 255;
    const std::size_t sample_bytes = wide ? 2 : 1;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    if (bytes.size() - sc.pos < n * 3 * sample_bytes) {
        bad_ppm("truncated pixel payload", bytes.size());
    }

    Tensor out({3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    float* o = out.data();
    const std::uint8_t* p = bytes.data() + sc.pos;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            o[c * n + i] = srgb_like_sample(p, wide, maxval);
            p += sample_bytes;
        }
    }
    return out;
}

std::vector<std::uint8_t> encode_ppm(const Tensor& chw, int maxval) {
    if (chw.rank() != 3 || chw.extent(0) != 3) {
        throw ShapeError("encode_ppm expects a 3-channel CHW tensor");
    }
    if (maxval < 1 || maxval > 65535) {
        throw ConfigError("ppm maxval must be in [1,65535]");
    }
    const std::size_t h = chw.extent(1), w = chw.extent(2), n = h * w;
    std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n" +
                         std::to_string(maxval) + "\n";
    const bool wide = maxval > 255;
    std::vector<std::uint8_t> bytes(header.begin(), header.end());
    bytes.reserve(bytes.size() + n * 3 * (wide ? 2 : 1));
    const float* d = chw.data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            const float v = std::clamp(d[c * n + i], 0.0f, 1.0f);
            const int q = static_cast<int>(std::lround(v * static_cast<float>(maxval)));
            if (wide) {
                bytes.push_back(static_cast<std::uint8_t>((q >> 8) & 0xFF));
                bytes.push_back(static_cast<std::uint8_t>(q & 0xFF));
            } else {
                bytes.push_back(static_cast<std::uint8_t>(q));
            }
        }
    }
    return bytes;
}

Tensor load_image(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open image " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    try {
        return decode_ppm(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_image(const Tensor& chw, const fs::path& path, int maxval) {
    const std::vector<std::uint8_t> bytes = encode_ppm(chw, maxval);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write image " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("short write to " + path.string());
    }
}

Dataset load_image_dataset(const fs::path& root) {
    if (!fs::is_directory(root)) {
        throw IoError("dataset root is not a directory: " + root.string());
    }
    std::vector<std::string> classes;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) classes.push_back(entry.path().filename().string());
    }
    std::sort(classes.begin(), classes.end());
    if (classes.size() < 2) {
        throw FormatError("dataset needs at least 2 class directories, found " +
                          std::to_string(classes.size()));
    }

    Dataset ds;
    ds.root = root;
    ds.classes = classes;
    for (std::size_t label = 0; label < classes.size(); ++label) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(root / classes[label])) {
            if (entry.is_regular_file()) files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) {
            throw FormatError("class directory '" + classes[label] + "' has no images");
        }
        for (auto& f : files) {
            ds.items.push_back({std::move(f), static_cast<int>(label)});
        }
    }
    return ds;
}

Split stratified_split(const Dataset& ds, double val_fraction, std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
        throw ConfigError("val fraction must be in (0,1)");
    }
    std::vector<std::vector<std::size_t>> per_class(ds.classes.size());
    for (std::size_t i = 0; i < ds.items.size(); ++i) {
        per_class[static_cast<std::size_t>(ds.items[i].label)].push_back(i);
    }

    Split split;
    split.train.classes = split.val.classes = ds.classes;
    split.train.root = split.val.root = ds.root;
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        auto& idx = per_class[c];
        if (idx.size() < 2) {
            throw FormatError("class '" + ds.classes[c] + "' has fewer than 2 items; cannot split");
        }
        std::mt19937 rng(static_cast<std::uint32_t>(mix_seed(seed, 0xA110C + c)));
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto n_val = static_cast<std::size_t>(
            std::nearbyint(static_cast<double>(idx.size()) * val_fraction));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            (i < n_val ? split.val : split.train).items.push_back(ds.items[idx[i]]);
        }
    }
    auto by_path = [](const DataItem& a, const DataItem& b) { return a.path < b.path; };
    std::sort(split.train.items.begin(), split.train.items.end(), by_path);
    std::sort(split.val.items.begin(), split.val.items.end(), by_path);
    return split;
}

BatchIterator::BatchIterator(const Dataset& ds, std::size_t batch_size, std::uint64_t seed,
                             std::size_t epoch, Shape2D target)
    : ds_(&ds), batch_size_(batch_size), target_(target) {
    if (batch_size_ < 1) {
        throw ConfigError("batch size must be >= 1");
    }
    if (target_.height < 1 || target_.width < 1) {
        throw ShapeError("batch target size must be at least 1x1");
    }
    order_.resize(ds.items.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    std::mt19937 rng(static_cast<std::uint32_t>(mix_seed(seed, 0xBA7C4 + epoch)));
    std::shuffle(order_.begin(), order_.end(), rng);
}

std::size_t BatchIterator::num_batches() const {
    return (order_.size() + batch_size_ - 1) / batch_size_;
}

bool BatchIterator::next(Batch& out) {
    if (pos_ >= order_.size()) {
        return false;
    }
    const std::size_t n = std::min(batch_size_, order_.size() - pos_);
    const std::size_t k = ds_->classes.size();
    const auto h = static_cast<std::size_t>(target_.height);
    const auto w = static_cast<std::size_t>(target_.width);

    out.inputs = Tensor({n, 3, h, w});
    out.targets = Tensor({n, k}, 0.0f);
    out.indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                       order_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    for (std::size_t i = 0; i < n; ++i) {
        const DataItem& item = ds_->items[out.indices[i]];
        Tensor img = bilinear_resize(load_image(item.path), target_);
        std::copy(img.data(), img.data() + img.size(), out.inputs.data() + i * img.size());
        out.targets[i * k + static_cast<std::size_t>(item.label)] = 1.0f;
    }
    pos_ += n;
    return true;
}

void gen_synthetic_dataset(const fs::path& out, int classes, int per_class, Shape2D size,
                           std::uint64_t seed) {
    if (classes < 2 || classes > 10) {
        throw ConfigError("synthetic dataset supports 2..10 classes");
    }
    if (per_class < 1) {
        throw ConfigError("need at least one image per class");
    }
    if (size.height < 8 || size.width < 8) {
        throw ConfigError("synthetic images must be at least 8x8");
    }

    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) {
        throw IoError("cannot create dataset directory " + out.string() + ": " + ec.message());
    }

    const auto h = static_cast<std::size_t>(size.height);
    const auto w = static_cast<std::size_t>(size.width);
    for (int k = 0; k < classes; ++k) {
        const fs::path dir = out / ("class_" + std::to_string(k));
        fs::create_directories(dir, ec);
        if (ec) {
            throw IoError("cannot create class directory " + dir.string() + ": " + ec.message());
        }
        float base[3];
        hsv_to_rgb(static_cast<float>(k) / static_cast<float>(classes), 0.55f, 0.65f, base);

        for (int i = 0; i < per_class; ++i) {
            std::mt19937 rng(static_cast<std::uint32_t>(
                mix_seed(mix_seed(seed, static_cast<std::uint64_t>(k)),
                         static_cast<std::uint64_t>(i))));
            Tensor img({3, h, w}, 0.0f);
            for (std::size_t c = 0; c < 3; ++c) {
                float* plane = img.data() + c * h * w;
                std::fill(plane, plane + h * w, base[c]);
            }

            if (k % 2 == 0) {
                // even classes: horizontal bright stripes, phase drawn per image
                std::uniform_int_distribution<int> phase_dist(0, 7);
                const int phase = phase_dist(rng);
                for (std::size_t y = 0; y < h; ++y) {
                    if (((static_cast<int>(y) + phase) / 4) % 2 == 0) continue;
                    for (std::size_t c = 0; c < 3; ++c) {
                        float* row = img.data() + (c * h + y) * w;
                        for (std::size_t x = 0; x < w; ++x) row[x] += 0.18f;
                    }
                }
            } else {
                // odd classes: a few bright round blobs
                std::uniform_int_distribution<int> cx(0, static_cast<int>(w) - 1);
                std::uniform_int_distribution<int> cy(0, static_cast<int>(h) - 1);
                std::uniform_real_distribution<float> rad(
                    2.0f, std::max(3.0f, static_cast<float>(std::min(h, w)) / 5.0f));
                for (int blob = 0; blob < 3; ++blob) {
                    const int bx = cx(rng), by = cy(rng);
                    const float r2 = rad(rng) * rad(rng);
                    for (std::size_t y = 0; y < h; ++y) {
                        for (std::size_t x = 0; x < w; ++x) {
                            const float dx = static_cast<float>(x) - static_cast<float>(bx);
                            const float dy = static_cast<float>(y) - static_cast<float>(by);
                            if (dx * dx + dy * dy > r2) continue;
                            for (std::size_t c = 0; c < 3; ++c) {
                                img[(c * h + y) * w + x] += 0.18f;
                            }
                        }
                    }
                }
            }

            std::normal_distribution<float> noise(0.0f, 0.05f);
            for (std::size_t t = 0; t < img.size(); ++t) {
                img[t] = std::clamp(img[t] + noise(rng), 0.0f, 1.0f);
            }

            save_image(img, dir / ("img_" + std::to_string(i) + ".ppm"));
        }
    }
}

}  // namespace pf
