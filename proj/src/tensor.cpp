#include "paddyforge/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

namespace pf {

namespace {

std::size_t checked_volume(const std::vector<std::size_t>& shape) {
    if (shape.empty()) {
        throw ShapeError("tensor shape must be nonempty");
    }
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0) {
            throw ShapeError("tensor extent must be >= 1");
        }
        n *= e;
    }
    return n;
}

void round_in_place(std::vector<float>& v) {
    for (float& x : v) {
        x = half_round(x);
    }
}

Precision combine(Precision a, Precision b) {
    return (a == Precision::Half16 && b == Precision::Half16) ? Precision::Half16
                                                              : Precision::Full32;
}

}  // namespace

std::uint16_t float_to_half_bits(float f) {
    const std::uint32_t x = std::bit_cast<std::uint32_t>(f);
    const std::uint32_t sign = (x >> 16) & 0x8000u;
    const std::uint32_t exp = (x >> 23) & 0xFFu;
    std::uint32_t mant = x & 0x7FFFFFu;

    if (exp == 0xFFu) {  // inf or nan
        if (mant == 0) return static_cast<std::uint16_t>(sign | 0x7C00u);
        return static_cast<std::uint16_t>(sign | 0x7C00u | 0x200u | (mant >> 13));
    }

    const int e = static_cast<int>(exp) - 127 + 15;
    if (e >= 0x1F) {  // overflow saturates to infinity
        return static_cast<std::uint16_t>(sign | 0x7C00u);
    }
    if (e <= 0) {
        if (e < -10) return static_cast<std::uint16_t>(sign);  // underflows to zero
        // subnormal half: shift the 24-bit significand into place, round RNE
        mant |= 0x800000u;
        const int shift = 14 - e;
        std::uint32_t half_man = mant >> shift;
        const std::uint32_t rem = mant & ((1u << shift) - 1u);
        const std::uint32_t halfway = 1u << (shift - 1);
        if (rem > halfway || (rem == halfway && (half_man & 1u))) half_man++;
        return static_cast<std::uint16_t>(sign | half_man);
    }
    // normal: round mantissa, letting carry propagate into the exponent
    std::uint32_t half = sign | (static_cast<std::uint32_t>(e) << 10) | (mant >> 13);
    const std::uint32_t rem = mant & 0x1FFFu;
    if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) half++;
    return static_cast<std::uint16_t>(half);
}

float half_bits_to_float(std::uint16_t h) {
    const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
    const std::uint32_t exp = (h >> 10) & 0x1Fu;
    std::uint32_t mant = h & 0x3FFu;
    std::uint32_t out;
    if (exp == 0) {
        if (mant == 0) {
            out = sign;
        } else {
            int e = 0;
            while (!(mant & 0x400u)) {
                mant <<= 1;
                e++;
            }
            mant &= 0x3FFu;
            out = sign | (static_cast<std::uint32_t>(127 - 14 - e) << 23) | (mant << 13);
        }
    } else if (exp == 0x1Fu) {
        out = sign | 0x7F800000u | (mant << 13);
    } else {
        out = sign | ((exp - 15 + 127) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(out);
}

Tensor::Tensor(std::vector<std::size_t> shape, float fill, Precision prec)
    : shape_(std::move(shape)), precision_(prec) {
    const std::size_t n = checked_volume(shape_);
    if (prec == Precision::Half16) fill = half_round(fill);
    data_.assign(n, fill);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> values, Precision prec)
    : shape_(std::move(shape)), data_(std::move(values)), precision_(prec) {
    const std::size_t n = checked_volume(shape_);
    if (n != data_.size()) {
        throw ShapeError("value count " + std::to_string(data_.size()) +
                         " does not match shape volume " + std::to_string(n));
    }
    if (prec == Precision::Half16) round_in_place(data_);
}

Tensor elementwise(const Tensor& a, const Tensor& b, EwOp op) {
    if (!a.same_shape(b)) {
        throw ShapeError("elementwise operands must have equal shapes");
    }
    Tensor c(a.shape(), 0.0f, combine(a.precision(), b.precision()));
    const float* pa = a.data();
    const float* pb = b.data();
    float* pc = c.data();
    const std::size_t n = a.size();
    switch (op) {
        case EwOp::Add:
            for (std::size_t i = 0; i < n; ++i) pc[i] = pa[i] + pb[i];
            break;
        case EwOp::Sub:
            for (std::size_t i = 0; i < n; ++i) pc[i] = pa[i] - pb[i];
            break;
        case EwOp::Mul:
            for (std::size_t i = 0; i < n; ++i) pc[i] = pa[i] * pb[i];
            break;
    }
    if (c.precision() == Precision::Half16) {
        for (std::size_t i = 0; i < n; ++i) pc[i] = half_round(pc[i]);
    }
    return c;
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwOp::Add); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwOp::Sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwOp::Mul); }

Tensor scale(const Tensor& a, float s) {
    Tensor c(a.shape(), 0.0f, a.precision());
    const float* pa = a.data();
    float* pc = c.data();
    const bool half = a.precision() == Precision::Half16;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const float v = pa[i] * s;
        pc[i] = half ? half_round(v) : v;
    }
    return c;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeError("matmul requires rank-2 operands");
    }
    const std::size_t m = a.extent(0), k = a.extent(1);
    const std::size_t k2 = b.extent(0), n = b.extent(1);
    if (k != k2) {
        throw ShapeError("matmul inner dimensions disagree: " + std::to_string(k) +
                         " vs " + std::to_string(k2));
    }
    Tensor c({m, n}, 0.0f, combine(a.precision(), b.precision()));
    const float* pa = a.data();
    const float* pb = b.data();
    float* pc = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const float av = pa[i * k + kk];
            const float* brow = pb + kk * n;
            float* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
    if (c.precision() == Precision::Half16) {
        for (std::size_t i = 0; i < c.size(); ++i) pc[i] = half_round(pc[i]);
    }
    return c;
}

Tensor cast(const Tensor& a, Precision target) {
    if (target == a.precision()) {
        return a;
    }
    Tensor c(a.shape(), 0.0f, target);
    const float* pa = a.data();
    float* pc = c.data();
    if (target == Precision::Half16) {
        for (std::size_t i = 0; i < a.size(); ++i) pc[i] = half_round(pa[i]);
    } else {
        std::copy(pa, pa + a.size(), pc);  // widening is exact
    }
    return c;
}

Tensor bilinear_resize(const Tensor& chw, Shape2D out) {
    if (chw.rank() != 3) {
        throw ShapeError("bilinear_resize expects a rank-3 CHW tensor");
    }
    if (out.height < 1 || out.width < 1) {
        throw ShapeError("resize target must be at least 1x1");
    }
    const std::size_t ch = chw.extent(0);
    const std::size_t ih = chw.extent(1);
    const std::size_t iw = chw.extent(2);
    if (static_cast<std::size_t>(out.height) == ih &&
        static_cast<std::size_t>(out.width) == iw) {
        return chw;  // identity, bit-exact
    }

    const std::size_t oh = static_cast<std::size_t>(out.height);
    const std::size_t ow = static_cast<std::size_t>(out.width);
    Tensor dst({ch, oh, ow}, 0.0f, chw.precision());

    const float sy = static_cast<float>(ih) / static_cast<float>(oh);
    const float sx = static_cast<float>(iw) / static_cast<float>(ow);

    std::vector<std::size_t> x0(ow), x1(ow);
    std::vector<float> dx(ow);
    for (std::size_t x = 0; x < ow; ++x) {
        float src = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
        src = std::clamp(src, 0.0f, static_cast<float>(iw - 1));
        const std::size_t lo = static_cast<std::size_t>(src);
        x0[x] = lo;
        x1[x] = std::min(lo + 1, iw - 1);
        dx[x] = src - static_cast<float>(lo);
    }

    const float* in = chw.data();
    float* outp = dst.data();
    const bool half = chw.precision() == Precision::Half16;
    for (std::size_t c = 0; c < ch; ++c) {
        const float* plane = in + c * ih * iw;
        for (std::size_t y = 0; y < oh; ++y) {
            float srcy = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
            srcy = std::clamp(srcy, 0.0f, static_cast<float>(ih - 1));
            const std::size_t y0 = static_cast<std::size_t>(srcy);
            const std::size_t y1 = std::min(y0 + 1, ih - 1);
            const float dy = srcy - static_cast<float>(y0);
            const float* row0 = plane + y0 * iw;
            const float* row1 = plane + y1 * iw;
            float* orow = outp + (c * oh + y) * ow;
            for (std::size_t x = 0; x < ow; ++x) {
                const float top = row0[x0[x]] * (1.0f - dx[x]) + row0[x1[x]] * dx[x];
                const float bot = row1[x0[x]] * (1.0f - dx[x]) + row1[x1[x]] * dx[x];
                const float v = top * (1.0f - dy) + bot * dy;
                orow[x] = half ? half_round(v) : v;
            }
        }
    }
    return dst;
}

Tensor slice_first_dim(const Tensor& t, std::size_t lo, std::size_t hi) {
    if (t.rank() < 1 || lo >= hi || hi > t.extent(0)) {
        throw ShapeError("invalid first-dimension slice");
    }
    std::vector<std::size_t> shape = t.shape();
    shape[0] = hi - lo;
    const std::size_t stride = t.size() / t.extent(0);
    std::vector<float> values(t.data() + lo * stride, t.data() + hi * stride);
    return Tensor(std::move(shape), std::move(values), t.precision());
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace pf
