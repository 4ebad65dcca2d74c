#pragma once

#include <random>
#include <string>
#include <vector>

#include "paddyforge/nn.hpp"
#include "paddyforge/tensor.hpp"

namespace pf {

// none: identity. minimal: horizontal flip (p=0.5) plus lighting/contrast
// jitter within +-10%. full: minimal plus affine (scale in [0.75,1.33],
// translation <= 10%, shear <= 10 degrees) and a pad-4 random crop back to the
// original size.
enum class AugPolicy { None, Minimal, Full };

AugPolicy parse_aug_policy(const std::string& s);
std::string to_string(AugPolicy policy);

// All image ops take rank-3 CHW tensors with values in [0,1].

Tensor horizontal_flip(const Tensor& chw);

// out = clamp(contrast * (img - mean(img)) + mean(img) + brightness, 0, 1)
Tensor adjust_lighting(const Tensor& chw, float brightness, float contrast);

// Inverse-mapped bilinear affine warp about the image center; samples falling
// outside the source are zero. Translation is in pixels.
Tensor affine_transform(const Tensor& chw, float scale_x, float scale_y, float shear_deg,
                        float translate_x, float translate_y);

// Zero-pads by `pad` on every side, then crops `out` at a uniformly drawn offset.
Tensor random_crop(const Tensor& chw, Shape2D out, int pad, std::mt19937& rng);

// Crops the maximal centered square, then bilinearly resizes it to `out`.
Tensor center_crop(const Tensor& chw, Shape2D out);

// Beta(a, a) via the two-gamma construction.
float sample_beta(float a, std::mt19937& rng);

struct MixupBatch {
    Tensor inputs;                       // [N,...] mixed images
    Tensor targets;                      // [N,K] mixed label distributions
    std::vector<float> lambdas;          // per-example mixing weight
    std::vector<std::size_t> partners;   // index j blended into example i
};

// x~_i = lambda_i * x_i + (1 - lambda_i) * x_j with given lambdas/partners.
MixupBatch mixup_apply(const Tensor& inputs, const Tensor& targets,
                       const std::vector<float>& lambdas,
                       const std::vector<std::size_t>& partners);

// Draws partners from a seeded shuffle and lambda ~ Beta(alpha, alpha).
MixupBatch mixup_batch(const Tensor& inputs, const Tensor& targets, float alpha,
                       std::mt19937& rng);

// Applies the policy to one image / independently to each image of an NCHW
// batch (per-image rng streams, so the result is order- and thread-agnostic).
Tensor augment_image(const Tensor& chw, AugPolicy policy, std::mt19937& rng);
Tensor augment_batch(const Tensor& batch, AugPolicy policy, std::mt19937& rng);

// Mean softmax prediction over the center-cropped original plus k augmented
// copies. With policy none this is exactly the plain center-crop prediction.
Tensor tta_predict(const Network& net, const Tensor& chw, AugPolicy policy, int k,
                   std::mt19937& rng);

}  // namespace pf
