#include "paddyforge/loss.hpp"

#include <algorithm>
#include <cmath>

namespace pf {

namespace {

constexpr double kLogFloor = 1e-12;

void check_rows(const Tensor& t, const char* what) {
    if (t.rank() != 1 && t.rank() != 2) {
        throw ShapeError(std::string(what) + " expects a rank-1 or rank-2 tensor");
    }
}

}  // namespace

Tensor softmax(const Tensor& logits) {
    check_rows(logits, "softmax");
    const std::size_t rows = logits.rank() == 2 ? logits.extent(0) : 1;
    const std::size_t k = logits.rank() == 2 ? logits.extent(1) : logits.extent(0);

    Tensor out(logits.shape(), 0.0f, Precision::Full32);
    const float* in = logits.data();
    float* o = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const float* z = in + r * k;
        float zmax = z[0];
        for (std::size_t i = 0; i < k; ++i) {
            if (!std::isfinite(z[i])) {
                throw NumericError("softmax input contains a non-finite logit");
            }
            zmax = std::max(zmax, z[i]);
        }
        float denom = 0.0f;
        for (std::size_t i = 0; i < k; ++i) {
            o[r * k + i] = std::exp(z[i] - zmax);
            denom += o[r * k + i];
        }
        for (std::size_t i = 0; i < k; ++i) {
            o[r * k + i] /= denom;
        }
    }
    return out;
}

float cross_entropy(const Tensor& probs, const Tensor& targets) {
    check_rows(probs, "cross_entropy");
    if (!probs.same_shape(targets)) {
        throw ShapeError("cross_entropy operands must have equal shapes");
    }
    const std::size_t rows = probs.rank() == 2 ? probs.extent(0) : 1;
    const std::size_t k = probs.size() / rows;
    const float* q = probs.data();
    const float* p = targets.data();
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < k; ++i) {
            const double pi = p[r * k + i];
            if (pi != 0.0) {
                total -= pi * std::log(std::max(static_cast<double>(q[r * k + i]), kLogFloor));
            }
        }
    }
    return static_cast<float>(total / static_cast<double>(rows));
}

Tensor softmax_xent_grad(const Tensor& logits, const Tensor& targets) {
    if (!logits.same_shape(targets)) {
        throw ShapeError("softmax_xent_grad operands must have equal shapes");
    }
    Tensor s = softmax(logits);
    Tensor g = sub(s, cast(targets, Precision::Full32));
    if (logits.rank() == 2 && logits.extent(0) > 1) {
        g = scale(g, 1.0f / static_cast<float>(logits.extent(0)));
    }
    return g;
}

bool is_prob_vector(const Tensor& v, float tol) {
    float sum = 0.0f;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] < 0.0f || v[i] > 1.0f + tol) return false;
        sum += v[i];
    }
    return std::fabs(sum - 1.0f) <= tol;
}

}  // namespace pf
