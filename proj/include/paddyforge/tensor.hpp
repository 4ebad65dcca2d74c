#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "paddyforge/errors.hpp"

namespace pf {

// Storage precision tag. Data is always held as float; Half16 means every
// stored value is exactly representable in IEEE binary16 (rounded to nearest,
// ties to even, overflow saturating to infinity).
enum class Precision { Full32, Half16 };

struct Shape2D {
    int height = 0;
    int width = 0;
    bool operator==(const Shape2D&) const = default;
};

// IEEE binary16 conversions.
std::uint16_t float_to_half_bits(float f);
float half_bits_to_float(std::uint16_t h);

// Round a float to the nearest binary16-representable value.
inline float half_round(float f) { return half_bits_to_float(float_to_half_bits(f)); }

// Dense row-major N-d array with value semantics. Images use NCHW order.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, float fill = 0.0f,
                    Precision prec = Precision::Full32);
    Tensor(std::vector<std::size_t> shape, std::vector<float> values,
           Precision prec = Precision::Full32);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t dim) const { return shape_[dim]; }
    Precision precision() const { return precision_; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    // Flat access. Direct writes must respect the precision tag; internal code
    // only stores half-rounded values into Half16 tensors.
    float operator[](std::size_t i) const { return data_[i]; }
    float& operator[](std::size_t i) { return data_[i]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    std::vector<std::size_t> shape_;
    std::vector<float> data_;
    Precision precision_ = Precision::Full32;
};

enum class EwOp { Add, Sub, Mul };

// c[i] = op(a[i], b[i]); shapes must match exactly.
Tensor elementwise(const Tensor& a, const Tensor& b, EwOp op);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, float s);

// Rank-2 [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);

// Full32 -> Half16 rounds (round-to-nearest-even, saturating to infinity);
// Half16 -> Full32 is exact.
Tensor cast(const Tensor& a, Precision target);

// CHW bilinear resize with half-pixel-center alignment, clamped at borders.
// Resizing to the identical size is a bit-exact copy.
Tensor bilinear_resize(const Tensor& chw, Shape2D out);

// View-copy of rows [lo, hi) along the first dimension.
Tensor slice_first_dim(const Tensor& t, std::size_t lo, std::size_t hi);

// splitmix64-style mixing for deriving independent RNG streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace pf
