#include "paddyforge/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "paddyforge/loss.hpp"

namespace pf {

namespace {

constexpr float kPi = 3.14159265358979323846f;

void check_chw(const Tensor& t, const char* what) {
    if (t.rank() != 3) {
        throw ShapeError(std::string(what) + " expects a rank-3 CHW image");
    }
}

}  // namespace

AugPolicy parse_aug_policy(const std::string& s) {
    if (s == "none") return AugPolicy::None;
    if (s == "minimal") return AugPolicy::Minimal;
    if (s == "full") return AugPolicy::Full;
    throw ConfigError("unknown augmentation policy '" + s + "' (expected none|minimal|full)");
}

std::string to_string(AugPolicy policy) {
    switch (policy) {
        case AugPolicy::None: return "none";
        case AugPolicy::Minimal: return "minimal";
        case AugPolicy::Full: return "full";
    }
    return "?";
}

Tensor horizontal_flip(const Tensor& chw) {
    check_chw(chw, "horizontal_flip");
    const std::size_t c = chw.extent(0), h = chw.extent(1), w = chw.extent(2);
    Tensor out(chw.shape(), 0.0f, chw.precision());
    const float* in = chw.data();
    float* o = out.data();
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t y = 0; y < h; ++y) {
            const float* irow = in + (ci * h + y) * w;
            float* orow = o + (ci * h + y) * w;
            for (std::size_t x = 0; x < w; ++x) orow[x] = irow[w - 1 - x];
        }
    }
    return out;
}

Tensor adjust_lighting(const Tensor& chw, float brightness, float contrast) {
    check_chw(chw, "adjust_lighting");
    if (contrast <= 0.0f) {
        throw ConfigError("adjust_lighting contrast must be positive");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < chw.size(); ++i) sum += chw[i];
    const float mean = static_cast<float>(sum / static_cast<double>(chw.size()));
    // c*(img - mean) + mean + b, factored so that b=0, c=1 is a bit-exact identity
    const float offset = (1.0f - contrast) * mean + brightness;
    Tensor out(chw.shape(), 0.0f, chw.precision());
    for (std::size_t i = 0; i < chw.size(); ++i) {
        out[i] = std::clamp(contrast * chw[i] + offset, 0.0f, 1.0f);
    }
    return out;
}

Tensor affine_transform(const Tensor& chw, float scale_x, float scale_y, float shear_deg,
                        float translate_x, float translate_y) {
    check_chw(chw, "affine_transform");
    if (scale_x <= 0.0f || scale_y <= 0.0f) {
        throw ConfigError("affine_transform scales must be positive");
    }
    const std::size_t c = chw.extent(0);
    const int h = static_cast<int>(chw.extent(1));
    const int w = static_cast<int>(chw.extent(2));
    const float cx = 0.5f * static_cast<float>(w - 1);
    const float cy = 0.5f * static_cast<float>(h - 1);
    // forward map: p' = S * Sh * (p - c) + c + t; sample the inverse
    const float tan_sh = std::tan(shear_deg * kPi / 180.0f);
    // inv(S*Sh) = [[1/sx, -tan/sy], [0, 1/sy]]
    const float i00 = 1.0f / scale_x;
    const float i01 = -tan_sh / scale_y;
    const float i11 = 1.0f / scale_y;

    Tensor out(chw.shape(), 0.0f, chw.precision());
    const float* in = chw.data();
    float* o = out.data();
    for (int y = 0; y < h; ++y) {
        const float ry = static_cast<float>(y) - cy - translate_y;
        for (int x = 0; x < w; ++x) {
            const float rx = static_cast<float>(x) - cx - translate_x;
            const float sx = i00 * rx + i01 * ry + cx;
            const float sy = i11 * ry + cy;
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const float dx = sx - static_cast<float>(x0);
            const float dy = sy - static_cast<float>(y0);
            const float w00 = (1.0f - dx) * (1.0f - dy);
            const float w01 = dx * (1.0f - dy);
            const float w10 = (1.0f - dx) * dy;
            const float w11 = dx * dy;
            for (std::size_t ci = 0; ci < c; ++ci) {
                const float* plane = in + ci * static_cast<std::size_t>(h) * w;
                auto at = [&](int yy, int xx) -> float {
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0f;  // zero outside
                    return plane[static_cast<std::size_t>(yy) * w + xx];
                };
                float v = w00 * at(y0, x0) + w01 * at(y0, x0 + 1) + w10 * at(y0 + 1, x0) +
                          w11 * at(y0 + 1, x0 + 1);
                if (chw.precision() == Precision::Half16) v = half_round(v);
                o[(ci * static_cast<std::size_t>(h) + y) * w + x] = v;
            }
        }
    }
    return out;
}

Tensor random_crop(const Tensor& chw, Shape2D out, int pad, std::mt19937& rng) {
    check_chw(chw, "random_crop");
    if (pad < 0) {
        throw ConfigError("random_crop pad must be >= 0");
    }
    const std::size_t c = chw.extent(0);
    const int h = static_cast<int>(chw.extent(1));
    const int w = static_cast<int>(chw.extent(2));
    const int ph = h + 2 * pad, pw = w + 2 * pad;
    if (out.height < 1 || out.width < 1 || out.height > ph || out.width > pw) {
        throw ShapeError("crop target exceeds the padded input");
    }
    std::uniform_int_distribution<int> dy(0, ph - out.height);
    std::uniform_int_distribution<int> dx(0, pw - out.width);
    const int oy = dy(rng);
    const int ox = dx(rng);

    Tensor dst({c, static_cast<std::size_t>(out.height), static_cast<std::size_t>(out.width)},
               0.0f, chw.precision());
    const float* in = chw.data();
    float* o = dst.data();
    for (std::size_t ci = 0; ci < c; ++ci) {
        const float* plane = in + ci * static_cast<std::size_t>(h) * w;
        for (int y = 0; y < out.height; ++y) {
            const int iy = y + oy - pad;  // position in the unpadded source
            float* orow = o + (ci * static_cast<std::size_t>(out.height) + y) * out.width;
            if (iy < 0 || iy >= h) continue;  // padded region stays zero
            for (int x = 0; x < out.width; ++x) {
                const int ix = x + ox - pad;
                if (ix < 0 || ix >= w) continue;
                orow[x] = plane[static_cast<std::size_t>(iy) * w + ix];
            }
        }
    }
    return dst;
}

Tensor center_crop(const Tensor& chw, Shape2D out) {
    check_chw(chw, "center_crop");
    if (out.height < 1 || out.width < 1) {
        throw ShapeError("center_crop target must be at least 1x1");
    }
    const std::size_t c = chw.extent(0);
    const std::size_t h = chw.extent(1), w = chw.extent(2);
    const std::size_t side = std::min(h, w);
    const std::size_t y0 = (h - side) / 2, x0 = (w - side) / 2;
    Tensor square({c, side, side}, 0.0f, chw.precision());
    const float* in = chw.data();
    float* o = square.data();
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t y = 0; y < side; ++y) {
            const float* irow = in + (ci * h + y0 + y) * w + x0;
            std::copy(irow, irow + side, o + (ci * side + y) * side);
        }
    }
    return bilinear_resize(square, out);
}

float sample_beta(float a, std::mt19937& rng) {
    if (a <= 0.0f) {
        throw ConfigError("beta parameter must be positive");
    }
    std::gamma_distribution<double> gamma(static_cast<double>(a), 1.0);
    const double x = gamma(rng);
    const double y = gamma(rng);
    if (x + y <= 0.0) return 0.5f;
    return static_cast<float>(std::clamp(x / (x + y), 0.0, 1.0));
}

MixupBatch mixup_apply(const Tensor& inputs, const Tensor& targets,
                       const std::vector<float>& lambdas,
                       const std::vector<std::size_t>& partners) {
    const std::size_t n = inputs.extent(0);
    if (targets.rank() != 2 || targets.extent(0) != n) {
        throw ShapeError("mixup targets must be [N,K] matching the batch");
    }
    if (lambdas.size() != n || partners.size() != n) {
        throw ShapeError("mixup needs one lambda and one partner per example");
    }
    MixupBatch out;
    out.inputs = Tensor(inputs.shape(), 0.0f, inputs.precision());
    out.targets = Tensor(targets.shape(), 0.0f, targets.precision());
    out.lambdas = lambdas;
    out.partners = partners;

    const std::size_t xs = inputs.size() / n;
    const std::size_t k = targets.extent(1);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = partners[i];
        if (j >= n) throw ShapeError("mixup partner index out of range");
        const float lam = lambdas[i];
        const float* xi = inputs.data() + i * xs;
        const float* xj = inputs.data() + j * xs;
        float* xo = out.inputs.data() + i * xs;
        for (std::size_t t = 0; t < xs; ++t) xo[t] = lam * xi[t] + (1.0f - lam) * xj[t];
        const float* yi = targets.data() + i * k;
        const float* yj = targets.data() + j * k;
        float* yo = out.targets.data() + i * k;
        for (std::size_t t = 0; t < k; ++t) yo[t] = lam * yi[t] + (1.0f - lam) * yj[t];
    }
    return out;
}

MixupBatch mixup_batch(const Tensor& inputs, const Tensor& targets, float alpha,
                       std::mt19937& rng) {
    const std::size_t n = inputs.extent(0);
    if (n < 2) {
        throw ConfigError("mixup needs a batch of at least 2 examples");
    }
    std::vector<std::size_t> partners(n);
    std::iota(partners.begin(), partners.end(), std::size_t{0});
    std::shuffle(partners.begin(), partners.end(), rng);
    std::vector<float> lambdas(n);
    for (std::size_t i = 0; i < n; ++i) lambdas[i] = sample_beta(alpha, rng);
    return mixup_apply(inputs, targets, lambdas, partners);
}

Tensor augment_image(const Tensor& chw, AugPolicy policy, std::mt19937& rng) {
    check_chw(chw, "augment_image");
    if (policy == AugPolicy::None) {
        return chw;
    }
    const int h = static_cast<int>(chw.extent(1));
    const int w = static_cast<int>(chw.extent(2));

    std::bernoulli_distribution coin(0.5);
    std::uniform_real_distribution<float> jitter(-0.1f, 0.1f);

    Tensor img = coin(rng) ? horizontal_flip(chw) : chw;
    const float brightness = jitter(rng);
    const float contrast = 1.0f + jitter(rng);
    img = adjust_lighting(img, brightness, contrast);

    if (policy == AugPolicy::Full) {
        std::uniform_real_distribution<float> scl(0.75f, 1.33f);
        std::uniform_real_distribution<float> shear(-10.0f, 10.0f);
        const float sx = scl(rng);
        const float sy = scl(rng);
        const float sh = shear(rng);
        const float tx = jitter(rng) * static_cast<float>(w);
        const float ty = jitter(rng) * static_cast<float>(h);
        img = affine_transform(img, sx, sy, sh, tx, ty);
        img = random_crop(img, {h, w}, 4, rng);
    }
    return img;
}

Tensor augment_batch(const Tensor& batch, AugPolicy policy, std::mt19937& rng) {
    if (batch.rank() != 4) {
        throw ShapeError("augment_batch expects an NCHW batch");
    }
    if (policy == AugPolicy::None) {
        return batch;
    }
    const std::size_t n = batch.extent(0);
    const std::size_t c = batch.extent(1), h = batch.extent(2), w = batch.extent(3);
    const std::uint64_t base =
        (static_cast<std::uint64_t>(rng()) << 32) | static_cast<std::uint64_t>(rng());

    Tensor out(batch.shape(), 0.0f, batch.precision());
    const std::size_t stride = c * h * w;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor img({c, h, w},
                   std::vector<float>(batch.data() + i * stride, batch.data() + (i + 1) * stride),
                   batch.precision());
        std::mt19937 per_image(static_cast<std::uint32_t>(mix_seed(base, i)));
        Tensor aug = augment_image(img, policy, per_image);
        std::copy(aug.data(), aug.data() + stride, out.data() + i * stride);
    }
    return out;
}

Tensor tta_predict(const Network& net, const Tensor& chw, AugPolicy policy, int k,
                   std::mt19937& rng) {
    check_chw(chw, "tta_predict");
    if (k < 1) {
        throw ConfigError("tta_predict needs k >= 1 augmented copies");
    }
    const Shape2D target = net.input_size();
    auto predict = [&](const Tensor& img) {
        Tensor cropped = center_crop(img, target);
        Tensor batch({1, cropped.extent(0), cropped.extent(1), cropped.extent(2)},
                     std::vector<float>(cropped.data(), cropped.data() + cropped.size()));
        ForwardContext ctx;
        Tensor logits = net.forward(batch, ctx);
        Tensor probs = softmax(logits);
        return Tensor({probs.extent(1)},
                      std::vector<float>(probs.data(), probs.data() + probs.size()));
    };

    Tensor mean = predict(chw);
    if (policy == AugPolicy::None) {
        return mean;  // augmented copies would be identical; keep it bit-exact
    }
    for (int i = 0; i < k; ++i) {
        Tensor copy = predict(augment_image(chw, policy, rng));
        for (std::size_t t = 0; t < mean.size(); ++t) mean[t] += copy[t];
    }
    const float inv = 1.0f / static_cast<float>(k + 1);
    for (std::size_t t = 0; t < mean.size(); ++t) mean[t] *= inv;
    return mean;
}

}  // namespace pf
