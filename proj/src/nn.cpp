#include "paddyforge/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace pf {

namespace {

void accumulate(Tensor& dst, const Tensor& src) {
    float* d = dst.data();
    const float* s = src.data();
    for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

Precision working_combine(const Tensor& a, const Tensor& b) {
    return (a.precision() == Precision::Half16 && b.precision() == Precision::Half16)
               ? Precision::Half16
               : Precision::Full32;
}

void round_half_in_place(Tensor& t) {
    float* d = t.data();
    for (std::size_t i = 0; i < t.size(); ++i) d[i] = half_round(d[i]);
}

}  // namespace

Tensor kaiming_init(std::vector<std::size_t> shape, std::size_t fan_in, std::mt19937& rng) {
    if (fan_in < 1) {
        throw ConfigError("kaiming_init requires fan_in >= 1");
    }
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
    Tensor t(std::move(shape));
    float* d = t.data();
    for (std::size_t i = 0; i < t.size(); ++i) d[i] = dist(rng);
    return t;
}

Parameter::Parameter(std::string n, Tensor init) : name(std::move(n)), master(std::move(init)) {
    working = master;
    grad = Tensor(master.shape(), 0.0f);
    comp = Tensor(master.shape(), 0.0f);
}

void Parameter::sync_working(Precision prec) { working = cast(master, prec); }

void Parameter::zero_grad() {
    float* g = grad.data();
    std::fill(g, g + grad.size(), 0.0f);
}

// ---- conv -------------------------------------------------------------------

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                      int stride, int padding) {
    if (input.rank() != 4 || kernel.rank() != 4) {
        throw ShapeError("conv2d expects NCHW input and OIHW kernel");
    }
    if (stride < 1 || padding < 0) {
        throw ShapeError("conv2d requires stride >= 1 and padding >= 0");
    }
    const int n = static_cast<int>(input.extent(0));
    const int cin = static_cast<int>(input.extent(1));
    const int h = static_cast<int>(input.extent(2));
    const int w = static_cast<int>(input.extent(3));
    const int cout = static_cast<int>(kernel.extent(0));
    const int kh = static_cast<int>(kernel.extent(2));
    const int kw = static_cast<int>(kernel.extent(3));
    if (static_cast<int>(kernel.extent(1)) != cin) {
        throw ShapeError("conv2d kernel in-channels do not match input channels");
    }
    if (bias.rank() != 1 || static_cast<int>(bias.extent(0)) != cout) {
        throw ShapeError("conv2d bias must be a length-Cout vector");
    }
    const int oh = (h + 2 * padding - kh) / stride + 1;
    const int ow = (w + 2 * padding - kw) / stride + 1;
    if (h + 2 * padding < kh || w + 2 * padding < kw || oh < 1 || ow < 1) {
        throw ShapeError("conv2d output extent is not positive");
    }

    Tensor out({static_cast<std::size_t>(n), static_cast<std::size_t>(cout),
                static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)},
               0.0f, working_combine(input, kernel));
    const float* in = input.data();
    const float* k = kernel.data();
    const float* b = bias.data();
    float* o = out.data();

    for (int ni = 0; ni < n; ++ni) {
        for (int oc = 0; oc < cout; ++oc) {
            float* oplane = o + ((static_cast<std::size_t>(ni) * cout + oc) * oh) * ow;
            std::fill(oplane, oplane + static_cast<std::size_t>(oh) * ow, b[oc]);
            for (int ic = 0; ic < cin; ++ic) {
                const float* iplane =
                    in + ((static_cast<std::size_t>(ni) * cin + ic) * h) * w;
                const float* kplane =
                    k + ((static_cast<std::size_t>(oc) * cin + ic) * kh) * kw;
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        const float kv = kplane[ky * kw + kx];
                        if (kv == 0.0f) continue;
                        // x range keeping ix = x*stride + kx - padding inside [0, w)
                        int xlo = 0;
                        while (xlo < ow && xlo * stride + kx - padding < 0) ++xlo;
                        int xhi = ow;
                        while (xhi > xlo && (xhi - 1) * stride + kx - padding >= w) --xhi;
                        for (int y = 0; y < oh; ++y) {
                            const int iy = y * stride + ky - padding;
                            if (iy < 0 || iy >= h) continue;
                            const float* __restrict__ irow = iplane + static_cast<std::size_t>(iy) * w;
                            float* __restrict__ orow = oplane + static_cast<std::size_t>(y) * ow;
                            if (stride == 1) {
                                const float* __restrict__ is = irow + kx - padding;
                                for (int x = xlo; x < xhi; ++x) orow[x] += kv * is[x];
                            } else {
                                for (int x = xlo; x < xhi; ++x) {
                                    orow[x] += kv * irow[x * stride + kx - padding];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if (out.precision() == Precision::Half16) round_half_in_place(out);
    return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernel, int stride,
                          int padding, const Tensor& grad_out, bool want_input,
                          bool want_params) {
    const int n = static_cast<int>(input.extent(0));
    const int cin = static_cast<int>(input.extent(1));
    const int h = static_cast<int>(input.extent(2));
    const int w = static_cast<int>(input.extent(3));
    const int cout = static_cast<int>(kernel.extent(0));
    const int kh = static_cast<int>(kernel.extent(2));
    const int kw = static_cast<int>(kernel.extent(3));
    const int oh = (h + 2 * padding - kh) / stride + 1;
    const int ow = (w + 2 * padding - kw) / stride + 1;
    if (grad_out.rank() != 4 || static_cast<int>(grad_out.extent(0)) != n ||
        static_cast<int>(grad_out.extent(1)) != cout ||
        static_cast<int>(grad_out.extent(2)) != oh ||
        static_cast<int>(grad_out.extent(3)) != ow) {
        throw ShapeError("conv2d_backward grad_out shape does not match forward output");
    }

    ConvGrads grads;
    if (want_input) grads.input = Tensor(input.shape(), 0.0f);
    if (want_params) {
        grads.kernel = Tensor(kernel.shape(), 0.0f);
        grads.bias = Tensor({static_cast<std::size_t>(cout)}, 0.0f);
    }

    const float* in = input.data();
    const float* k = kernel.data();
    const float* go = grad_out.data();

    if (want_params) {
        float* gk = grads.kernel.data();
        float* gb = grads.bias.data();
        for (int ni = 0; ni < n; ++ni) {
            for (int oc = 0; oc < cout; ++oc) {
                const float* gplane =
                    go + ((static_cast<std::size_t>(ni) * cout + oc) * oh) * ow;
                double bias_acc = 0.0;
                for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i) {
                    bias_acc += gplane[i];
                }
                gb[oc] += static_cast<float>(bias_acc);
                for (int ic = 0; ic < cin; ++ic) {
                    const float* iplane =
                        in + ((static_cast<std::size_t>(ni) * cin + ic) * h) * w;
                    float* gkplane = gk + ((static_cast<std::size_t>(oc) * cin + ic) * kh) * kw;
                    for (int ky = 0; ky < kh; ++ky) {
                        for (int kx = 0; kx < kw; ++kx) {
                            int xlo = 0;
                            while (xlo < ow && xlo * stride + kx - padding < 0) ++xlo;
                            int xhi = ow;
                            while (xhi > xlo && (xhi - 1) * stride + kx - padding >= w) --xhi;
                            float acc = 0.0f;
                            for (int y = 0; y < oh; ++y) {
                                const int iy = y * stride + ky - padding;
                                if (iy < 0 || iy >= h) continue;
                                const float* __restrict__ irow =
                                    iplane + static_cast<std::size_t>(iy) * w;
                                const float* __restrict__ grow =
                                    gplane + static_cast<std::size_t>(y) * ow;
                                if (stride == 1) {
                                    const float* __restrict__ is = irow + kx - padding;
                                    for (int x = xlo; x < xhi; ++x) acc += is[x] * grow[x];
                                } else {
                                    for (int x = xlo; x < xhi; ++x) {
                                        acc += irow[x * stride + kx - padding] * grow[x];
                                    }
                                }
                            }
                            gkplane[ky * kw + kx] += acc;
                        }
                    }
                }
            }
        }
    }

    if (want_input) {
        float* gi = grads.input.data();
        for (int ni = 0; ni < n; ++ni) {
            for (int oc = 0; oc < cout; ++oc) {
                const float* gplane =
                    go + ((static_cast<std::size_t>(ni) * cout + oc) * oh) * ow;
                for (int ic = 0; ic < cin; ++ic) {
                    float* giplane = gi + ((static_cast<std::size_t>(ni) * cin + ic) * h) * w;
                    const float* kplane =
                        k + ((static_cast<std::size_t>(oc) * cin + ic) * kh) * kw;
                    for (int ky = 0; ky < kh; ++ky) {
                        for (int kx = 0; kx < kw; ++kx) {
                            const float kv = kplane[ky * kw + kx];
                            if (kv == 0.0f) continue;
                            int xlo = 0;
                            while (xlo < ow && xlo * stride + kx - padding < 0) ++xlo;
                            int xhi = ow;
                            while (xhi > xlo && (xhi - 1) * stride + kx - padding >= w) --xhi;
                            for (int y = 0; y < oh; ++y) {
                                const int iy = y * stride + ky - padding;
                                if (iy < 0 || iy >= h) continue;
                                float* __restrict__ girow =
                                    giplane + static_cast<std::size_t>(iy) * w;
                                const float* __restrict__ grow =
                                    gplane + static_cast<std::size_t>(y) * ow;
                                if (stride == 1) {
                                    float* __restrict__ gs = girow + kx - padding;
                                    for (int x = xlo; x < xhi; ++x) gs[x] += kv * grow[x];
                                } else {
                                    for (int x = xlo; x < xhi; ++x) {
                                        girow[x * stride + kx - padding] += kv * grow[x];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return grads;
}

// ---- pool / relu / linear ----------------------------------------------------

PoolResult maxpool_forward(const Tensor& input, Shape2D window, int stride) {
    if (input.rank() != 4) {
        throw ShapeError("maxpool expects an NCHW tensor");
    }
    if (window.height < 1 || window.width < 1 || stride < 1) {
        throw ShapeError("maxpool window and stride must be >= 1");
    }
    const int n = static_cast<int>(input.extent(0));
    const int c = static_cast<int>(input.extent(1));
    const int h = static_cast<int>(input.extent(2));
    const int w = static_cast<int>(input.extent(3));
    if (window.height > h || window.width > w) {
        throw ShapeError("maxpool window larger than input");
    }
    const int oh = (h - window.height) / stride + 1;
    const int ow = (w - window.width) / stride + 1;

    PoolResult res;
    res.output = Tensor({static_cast<std::size_t>(n), static_cast<std::size_t>(c),
                         static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)},
                        0.0f, input.precision());
    res.argmax.resize(res.output.size());

    const float* in = input.data();
    float* out = res.output.data();
    std::size_t oi = 0;
    for (int ni = 0; ni < n; ++ni) {
        for (int ci = 0; ci < c; ++ci) {
            const std::size_t plane = (static_cast<std::size_t>(ni) * c + ci) * h * w;
            for (int y = 0; y < oh; ++y) {
                for (int x = 0; x < ow; ++x) {
                    float best = -std::numeric_limits<float>::infinity();
                    std::uint32_t best_idx = 0;
                    for (int wy = 0; wy < window.height; ++wy) {
                        const int iy = y * stride + wy;
                        for (int wx = 0; wx < window.width; ++wx) {
                            const int ix = x * stride + wx;
                            const std::size_t flat = plane + static_cast<std::size_t>(iy) * w + ix;
                            if (in[flat] > best) {  // first occurrence wins ties
                                best = in[flat];
                                best_idx = static_cast<std::uint32_t>(flat);
                            }
                        }
                    }
                    out[oi] = best;
                    res.argmax[oi] = best_idx;
                    ++oi;
                }
            }
        }
    }
    return res;
}

Tensor maxpool_backward(const std::vector<std::uint32_t>& argmax,
                        const std::vector<std::size_t>& input_shape, const Tensor& grad_out) {
    if (argmax.size() != grad_out.size()) {
        throw ShapeError("maxpool_backward grad_out does not match recorded context");
    }
    Tensor grad_in(input_shape, 0.0f);
    float* gi = grad_in.data();
    const float* go = grad_out.data();
    for (std::size_t i = 0; i < argmax.size(); ++i) {
        gi[argmax[i]] += go[i];
    }
    return grad_in;
}

Tensor relu_forward(const Tensor& input) {
    Tensor out(input.shape(), 0.0f, input.precision());
    const float* in = input.data();
    float* o = out.data();
    for (std::size_t i = 0; i < input.size(); ++i) {
        o[i] = in[i] > 0.0f ? in[i] : 0.0f;
    }
    return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
    if (!input.same_shape(grad_out)) {
        throw ShapeError("relu_backward shapes disagree");
    }
    Tensor grad_in(input.shape(), 0.0f);
    const float* in = input.data();
    const float* go = grad_out.data();
    float* gi = grad_in.data();
    for (std::size_t i = 0; i < input.size(); ++i) {
        gi[i] = in[i] > 0.0f ? go[i] : 0.0f;
    }
    return grad_in;
}

Tensor linear_forward(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    if (input.rank() != 2 || weight.rank() != 2) {
        throw ShapeError("linear expects rank-2 input and weight");
    }
    const std::size_t n = input.extent(0), fin = input.extent(1);
    const std::size_t fout = weight.extent(0);
    if (weight.extent(1) != fin) {
        throw ShapeError("linear input width does not match weight in-features");
    }
    if (bias.rank() != 1 || bias.extent(0) != fout) {
        throw ShapeError("linear bias must be a length-out vector");
    }
    Tensor out({n, fout}, 0.0f, working_combine(input, weight));
    const float* in = input.data();
    const float* wt = weight.data();
    const float* b = bias.data();
    float* o = out.data();
    for (std::size_t i = 0; i < n; ++i) {
        const float* __restrict__ row = in + i * fin;
        for (std::size_t j = 0; j < fout; ++j) {
            const float* __restrict__ wrow = wt + j * fin;
            float acc = b[j];
            for (std::size_t kk = 0; kk < fin; ++kk) acc += row[kk] * wrow[kk];
            o[i * fout + j] = acc;
        }
    }
    if (out.precision() == Precision::Half16) round_half_in_place(out);
    return out;
}

LinearGrads linear_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                            bool want_input, bool want_params) {
    const std::size_t n = input.extent(0), fin = input.extent(1);
    const std::size_t fout = weight.extent(0);
    if (grad_out.rank() != 2 || grad_out.extent(0) != n || grad_out.extent(1) != fout) {
        throw ShapeError("linear_backward grad_out shape does not match forward output");
    }
    LinearGrads grads;
    const float* in = input.data();
    const float* wt = weight.data();
    const float* go = grad_out.data();
    if (want_input) {
        grads.input = Tensor({n, fin}, 0.0f);
        float* gi = grads.input.data();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < fout; ++j) {
                const float g = go[i * fout + j];
                if (g == 0.0f) continue;
                const float* __restrict__ wrow = wt + j * fin;
                float* __restrict__ girow = gi + i * fin;
                for (std::size_t kk = 0; kk < fin; ++kk) girow[kk] += g * wrow[kk];
            }
        }
    }
    if (want_params) {
        grads.weight = Tensor({fout, fin}, 0.0f);
        grads.bias = Tensor({fout}, 0.0f);
        float* gw = grads.weight.data();
        float* gb = grads.bias.data();
        for (std::size_t i = 0; i < n; ++i) {
            const float* __restrict__ row = in + i * fin;
            for (std::size_t j = 0; j < fout; ++j) {
                const float g = go[i * fout + j];
                gb[j] += g;
                if (g == 0.0f) continue;
                float* __restrict__ gwrow = gw + j * fin;
                for (std::size_t kk = 0; kk < fin; ++kk) gwrow[kk] += g * row[kk];
            }
        }
    }
    return grads;
}

// ---- LayerSpec factories -----------------------------------------------------

LayerSpec LayerSpec::conv2d(int out_channels, int kh, int kw, int stride, int padding) {
    LayerSpec s;
    s.kind = Kind::Conv2D;
    s.out_channels = out_channels;
    s.kernel_h = kh;
    s.kernel_w = kw;
    s.stride = stride;
    s.padding = padding;
    return s;
}
LayerSpec LayerSpec::maxpool(int window, int stride) {
    LayerSpec s;
    s.kind = Kind::MaxPool;
    s.window = window;
    s.pool_stride = stride;
    return s;
}
LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = Kind::ReLU;
    return s;
}
LayerSpec LayerSpec::linear(int out_features) {
    LayerSpec s;
    s.kind = Kind::Linear;
    s.out_features = out_features;
    return s;
}
LayerSpec LayerSpec::residual() {
    LayerSpec s;
    s.kind = Kind::Residual;
    return s;
}
LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = Kind::Flatten;
    return s;
}
LayerSpec LayerSpec::global_avg_pool() {
    LayerSpec s;
    s.kind = Kind::GlobalAvgPool;
    return s;
}
LayerSpec LayerSpec::softmax() {
    LayerSpec s;
    s.kind = Kind::Softmax;
    return s;
}

// ---- concrete layers ---------------------------------------------------------

namespace {

class Conv2dLayer : public Layer {
public:
    Conv2dLayer(std::string name, int in_channels, int out_channels, int kh, int kw,
                int stride, int padding, std::mt19937& rng)
        : name_(std::move(name)),
          stride_(stride),
          padding_(padding),
          weight_(name_ + ".weight",
                  kaiming_init({static_cast<std::size_t>(out_channels),
                                static_cast<std::size_t>(in_channels),
                                static_cast<std::size_t>(kh), static_cast<std::size_t>(kw)},
                               static_cast<std::size_t>(in_channels) * kh * kw, rng)),
          bias_(name_ + ".bias", Tensor({static_cast<std::size_t>(out_channels)}, 0.0f)) {}

    Tensor forward(const Tensor& input, LayerCache& cache) const override {
        cache.input = input;
        return conv2d_forward(input, weight_.working, bias_.working, stride_, padding_);
    }

    Tensor backward(const LayerCache& cache, const Tensor& grad_out) override {
        const bool wp = weight_.trainable || bias_.trainable;
        ConvGrads g = conv2d_backward(cache.input, weight_.working, stride_, padding_,
                                      grad_out, true, wp);
        if (weight_.trainable) accumulate(weight_.grad, g.kernel);
        if (bias_.trainable) accumulate(bias_.grad, g.bias);
        return std::move(g.input);
    }

    std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }

    LayerSpec spec() const override {
        return LayerSpec::conv2d(static_cast<int>(weight_.master.extent(0)),
                                 static_cast<int>(weight_.master.extent(2)),
                                 static_cast<int>(weight_.master.extent(3)), stride_, padding_);
    }

    std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2dLayer>(*this); }
    std::string name() const override { return name_; }

private:
    std::string name_;
    int stride_;
    int padding_;
    Parameter weight_;
    Parameter bias_;
};

class MaxPoolLayer : public Layer {
public:
    MaxPoolLayer(std::string name, int window, int stride)
        : name_(std::move(name)), window_(window), stride_(stride) {}

    Tensor forward(const Tensor& input, LayerCache& cache) const override {
        PoolResult res = maxpool_forward(input, {window_, window_}, stride_);
        cache.input = input;
        cache.argmax = std::move(res.argmax);
        return std::move(res.output);
    }

    Tensor backward(const LayerCache& cache, const Tensor& grad_out) override {
        return maxpool_backward(cache.argmax, cache.input.shape(), grad_out);
    }

    LayerSpec spec() const override { return LayerSpec::maxpool(window_, stride_); }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPoolLayer>(*this); }
    std::string name() const override { return name_; }

private:
    std::string name_;
    int window_;
    int stride_;
};

class ReLULayer : public Layer {
public:
    explicit ReLULayer(std::string name) : name_(std::move(name)) {}

    Tensor forward(const Tensor& input, LayerCache& cache) const override {
        cache.input = input;
        return relu_forward(input);
    }

    Tensor backward(const LayerCache& cache, const Tensor& grad_out) override {
        return relu_backward(cache.input, grad_out);
    }

    LayerSpec spec() const override { return LayerSpec::relu(); }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLULayer>(*this); }
    std::string name() const override { return name_; }

private:
    std::string name_;
};

class LinearLayer : public Layer {
public:
    LinearLayer(std::string name, int in_features, int out_features, std::mt19937& rng)
        : name_(std::move(name)),
          weight_(name_ + ".weight",
                  kaiming_init({static_cast<std::size_t>(out_features),
                                static_cast<std::size_t>(in_features)},
                               static_cast<std::size_t>(in_features), rng)),
          bias_(name_ + ".bias", Tensor({static_cast<std::size_t>(out_features)}, 0.0f)) {}

    Tensor forward(const Tensor& input, LayerCache& cache) const override {
        cache.input = input;
        return linear_forward(input, weight_.working, bias_.working);
    }

    Tensor backward(const LayerCache& cache, const Tensor& grad_out) override {
        const bool wp = weight_.trainable || bias_.trainable;
        LinearGrads g = linear_backward(cache.input, weight_.working, grad_out, true, wp);
        if (weight_.trainable) accumulate(weight_.grad, g.weight);
        if (bias_.trainable) accumulate(bias_.grad, g.bias);
        return std::move(g.input);
    }

    std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }

    LayerSpec spec() const override {
        return LayerSpec::linear(static_cast<int>(weight_.master.extent(0)));
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<LinearLayer>(*this); }
    std::string name() const override { return name_; }

private:
    std::string name_;
    Parameter weight_;
    Parameter bias_;
};

// F(x) + x with F = conv -> ReLU -> conv, all shape-preserving. Zeroed weights
// make the block an exact identity.
class ResidualBlock : public Layer {
public:
    ResidualBlock(std::string name, int channels, std::mt19937& rng)
        : name_(std::move(name)),
          conv1_(name_ + ".conv1", channels, channels, 3, 3, 1, 1, rng),
          conv2_(name_ + ".conv2", channels, channels, 3, 3, 1, 1, rng) {}

    Tensor forward(const Tensor& input, LayerCache& cache) const override {
        cache.inner.resize(3);
        Tensor c1 = conv1_.forward(input, cache.inner[0]);
        cache.inner[1].input = c1;
        Tensor r = relu_forward(c1);
        Tensor c2 = conv2_.forward(r, cache.inner[2]);
        if (!c2.same_shape(input)) {
            throw ShapeError("residual block must preserve its input shape");
        }
        return add(c2, input);
    }

    Tensor backward(const LayerCache& cache, const Tensor& grad_out) override {
        Tensor g2 = conv2_.backward(cache.inner[2], grad_out);
        Tensor gr = relu_backward(cache.inner[1].input, g2);
        Tensor g1 = conv1_.backward(cache.inner[0], gr);
        return add(g1, grad_out);  // identity path
    }

    std::vector<Parameter*> parameters() override {
        std::vector<Parameter*> ps = conv1_.parameters();
        for (Parameter* p : conv2_.parameters()) ps.push_back(p);
        return ps;
    }

    LayerSpec spec() const override { return LayerSpec::residual(); }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<ResidualBlock>(*this); }
    std::string name() const override { return name_; }

private:
    std::string name_;
    Conv2dLayer conv1_;
    Conv2dLayer conv2_;
};

class FlattenLayer : public Layer {
public:
    explicit FlattenLayer(std::string name) : name_(std::move(name)) {}

    Tensor forward(const Tensor& input, LayerCache& cache) const override {
        if (input.rank() < 2) {
            throw ShapeError("flatten expects rank >= 2");
        }
        cache.input = input;
        const std::size_t n = input.extent(0);
        std::vector<float> values(input.data(), input.data() + input.size());
        return Tensor({n, input.size() / n}, std::move(values), input.precision());
    }

    Tensor backward(const LayerCache& cache, const Tensor& grad_out) override {
        if (grad_out.size() != cache.input.size()) {
            throw ShapeError("flatten backward size mismatch");
        }
        std::vector<float> values(grad_out.data(), grad_out.data() + grad_out.size());
        return Tensor(cache.input.shape(), std::move(values));
    }

    LayerSpec spec() const override { return LayerSpec::flatten(); }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<FlattenLayer>(*this); }
    std::string name() const override { return name_; }

private:
    std::string name_;
};

class GlobalAvgPoolLayer : public Layer {
public:
    explicit GlobalAvgPoolLayer(std::string name) : name_(std::move(name)) {}

    Tensor forward(const Tensor& input, LayerCache& cache) const override {
        if (input.rank() != 4) {
            throw ShapeError("global average pool expects NCHW");
        }
        cache.input = input;
        const std::size_t n = input.extent(0), c = input.extent(1);
        const std::size_t hw = input.extent(2) * input.extent(3);
        Tensor out({n, c}, 0.0f, input.precision());
        const float* in = input.data();
        float* o = out.data();
        for (std::size_t i = 0; i < n * c; ++i) {
            float acc = 0.0f;
            const float* plane = in + i * hw;
            for (std::size_t j = 0; j < hw; ++j) acc += plane[j];
            const float v = acc / static_cast<float>(hw);
            o[i] = input.precision() == Precision::Half16 ? half_round(v) : v;
        }
        return out;
    }

    Tensor backward(const LayerCache& cache, const Tensor& grad_out) override {
        const std::size_t n = cache.input.extent(0), c = cache.input.extent(1);
        const std::size_t hw = cache.input.extent(2) * cache.input.extent(3);
        if (grad_out.rank() != 2 || grad_out.extent(0) != n || grad_out.extent(1) != c) {
            throw ShapeError("global average pool backward shape mismatch");
        }
        Tensor grad_in(cache.input.shape(), 0.0f);
        float* gi = grad_in.data();
        const float* go = grad_out.data();
        for (std::size_t i = 0; i < n * c; ++i) {
            const float v = go[i] / static_cast<float>(hw);
            float* plane = gi + i * hw;
            for (std::size_t j = 0; j < hw; ++j) plane[j] = v;
        }
        return grad_in;
    }

    LayerSpec spec() const override { return LayerSpec::global_avg_pool(); }
    std::unique_ptr<Layer> clone() const override {
        return std::make_unique<GlobalAvgPoolLayer>(*this);
    }
    std::string name() const override { return name_; }

private:
    std::string name_;
};

class SoftmaxLayer : public Layer {
public:
    explicit SoftmaxLayer(std::string name) : name_(std::move(name)) {}

    Tensor forward(const Tensor& input, LayerCache& cache) const override {
        if (input.rank() != 2) {
            throw ShapeError("softmax layer expects rank-2 input");
        }
        const std::size_t rows = input.extent(0), k = input.extent(1);
        Tensor s(input.shape(), 0.0f);
        const float* in = input.data();
        float* o = s.data();
        for (std::size_t r = 0; r < rows; ++r) {
            const float* z = in + r * k;
            float zmax = z[0];
            for (std::size_t i = 1; i < k; ++i) zmax = std::max(zmax, z[i]);
            float denom = 0.0f;
            for (std::size_t i = 0; i < k; ++i) {
                o[r * k + i] = std::exp(z[i] - zmax);
                denom += o[r * k + i];
            }
            for (std::size_t i = 0; i < k; ++i) o[r * k + i] /= denom;
        }
        cache.input = s;  // backward needs the activations, not the logits
        return s;
    }

    Tensor backward(const LayerCache& cache, const Tensor& grad_out) override {
        const Tensor& s = cache.input;
        if (!s.same_shape(grad_out)) {
            throw ShapeError("softmax backward shape mismatch");
        }
        const std::size_t rows = s.extent(0), k = s.extent(1);
        Tensor grad_in(s.shape(), 0.0f);
        const float* sv = s.data();
        const float* go = grad_out.data();
        float* gi = grad_in.data();
        for (std::size_t r = 0; r < rows; ++r) {
            float dot = 0.0f;
            for (std::size_t i = 0; i < k; ++i) dot += go[r * k + i] * sv[r * k + i];
            for (std::size_t i = 0; i < k; ++i) {
                gi[r * k + i] = sv[r * k + i] * (go[r * k + i] - dot);
            }
        }
        return grad_in;
    }

    LayerSpec spec() const override { return LayerSpec::softmax(); }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<SoftmaxLayer>(*this); }
    std::string name() const override { return name_; }

private:
    std::string name_;
};

}  // namespace

// ---- Network -----------------------------------------------------------------

Network::Network(Shape2D input_size, int in_channels, int num_classes)
    : input_size_(input_size), in_channels_(in_channels), num_classes_(num_classes) {}

void Network::append(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

Network Network::from_specs(const std::vector<LayerSpec>& specs, Shape2D input_size,
                            int in_channels, int num_classes, std::uint64_t seed,
                            std::string arch_name) {
    if (input_size.height < 1 || input_size.width < 1 || in_channels < 1) {
        throw ShapeError("network input must be at least 1x1 with >= 1 channel");
    }
    Network net(input_size, in_channels, num_classes);
    net.arch_name_ = std::move(arch_name);
    std::mt19937 rng(static_cast<std::uint32_t>(mix_seed(seed, 0x6E6574)));

    bool spatial = true;
    int c = in_channels, h = input_size.height, w = input_size.width;
    std::size_t flat = 0;
    int idx = 0;
    for (const LayerSpec& s : specs) {
        const std::string tag = std::to_string(idx);
        switch (s.kind) {
            case LayerSpec::Kind::Conv2D: {
                if (!spatial) throw ShapeError("conv layer after flatten");
                const int oh = (h + 2 * s.padding - s.kernel_h) / s.stride + 1;
                const int ow = (w + 2 * s.padding - s.kernel_w) / s.stride + 1;
                if (h + 2 * s.padding < s.kernel_h || w + 2 * s.padding < s.kernel_w ||
                    oh < 1 || ow < 1) {
                    throw ShapeError("input too small for conv layer " + tag);
                }
                net.append(std::make_unique<Conv2dLayer>("conv" + tag, c, s.out_channels,
                                                         s.kernel_h, s.kernel_w, s.stride,
                                                         s.padding, rng));
                c = s.out_channels;
                h = oh;
                w = ow;
                break;
            }
            case LayerSpec::Kind::MaxPool: {
                if (!spatial) throw ShapeError("pool layer after flatten");
                const int oh = (h - s.window) / s.pool_stride + 1;
                const int ow = (w - s.window) / s.pool_stride + 1;
                if (s.window > h || s.window > w || oh < 1 || ow < 1) {
                    throw ShapeError("input too small for pool layer " + tag);
                }
                net.append(std::make_unique<MaxPoolLayer>("pool" + tag, s.window, s.pool_stride));
                h = oh;
                w = ow;
                break;
            }
            case LayerSpec::Kind::ReLU:
                net.append(std::make_unique<ReLULayer>("relu" + tag));
                break;
            case LayerSpec::Kind::Linear: {
                if (spatial) throw ShapeError("linear layer requires flattened input");
                net.append(std::make_unique<LinearLayer>("fc" + tag, static_cast<int>(flat),
                                                         s.out_features, rng));
                flat = static_cast<std::size_t>(s.out_features);
                break;
            }
            case LayerSpec::Kind::Residual:
                if (!spatial) throw ShapeError("residual block after flatten");
                net.append(std::make_unique<ResidualBlock>("res" + tag, c, rng));
                break;
            case LayerSpec::Kind::Flatten:
                if (!spatial) throw ShapeError("duplicate flatten");
                flat = static_cast<std::size_t>(c) * h * w;
                spatial = false;
                net.append(std::make_unique<FlattenLayer>("flatten" + tag));
                break;
            case LayerSpec::Kind::GlobalAvgPool:
                if (!spatial) throw ShapeError("global pool after flatten");
                flat = static_cast<std::size_t>(c);
                spatial = false;
                net.append(std::make_unique<GlobalAvgPoolLayer>("gap" + tag));
                break;
            case LayerSpec::Kind::Softmax:
                if (spatial) throw ShapeError("softmax layer requires flattened input");
                net.append(std::make_unique<SoftmaxLayer>("softmax" + tag));
                break;
        }
        ++idx;
    }
    if (num_classes > 0) {
        if (spatial || flat != static_cast<std::size_t>(num_classes)) {
            throw ShapeError("network must end with a length-" + std::to_string(num_classes) +
                             " vector per example");
        }
    }
    return net;
}

Tensor Network::forward(const Tensor& batch, ForwardContext& ctx) const {
    if (batch.rank() != 4) {
        throw ShapeError("network forward expects an NCHW batch");
    }
    if (static_cast<int>(batch.extent(1)) != in_channels_) {
        throw ShapeError("batch channel count does not match network");
    }
    if (!accepts_variable_input()) {
        if (static_cast<int>(batch.extent(2)) != input_size_.height ||
            static_cast<int>(batch.extent(3)) != input_size_.width) {
            throw ShapeError("batch spatial size does not match network input size");
        }
    }
    ctx.layers.clear();
    ctx.layers.resize(layers_.size());
    Tensor cur = working_precision_ == Precision::Half16 ? cast(batch, Precision::Half16) : batch;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        cur = layers_[i]->forward(cur, ctx.layers[i]);
    }
    return cur;
}

void Network::backward(const ForwardContext& ctx, const Tensor& grad_logits) {
    if (ctx.layers.size() != layers_.size()) {
        throw ShapeError("forward context does not match this network");
    }
    std::size_t lowest = layers_.size();
    for (std::size_t i = 0; i < layers_.size() && lowest == layers_.size(); ++i) {
        for (Parameter* p : layers_[i]->parameters()) {
            if (p->trainable) {
                lowest = i;
                break;
            }
        }
    }
    if (lowest == layers_.size()) {
        return;  // nothing trainable
    }
    Tensor g = grad_logits;
    for (std::size_t i = layers_.size(); i-- > lowest;) {
        g = layers_[i]->backward(ctx.layers[i], g);
    }
}

std::vector<Parameter*> Network::parameters() {
    std::vector<Parameter*> ps;
    for (auto& l : layers_) {
        for (Parameter* p : l->parameters()) ps.push_back(p);
    }
    return ps;
}

std::vector<const Parameter*> Network::parameters() const {
    std::vector<const Parameter*> ps;
    for (const auto& l : layers_) {
        for (Parameter* p : const_cast<Layer&>(*l).parameters()) ps.push_back(p);
    }
    return ps;
}

std::vector<LayerSpec> Network::specs() const {
    std::vector<LayerSpec> out;
    out.reserve(layers_.size());
    for (const auto& l : layers_) out.push_back(l->spec());
    return out;
}

void Network::set_input_size(Shape2D size) {
    if (!accepts_variable_input()) {
        throw ConfigError("architecture has a size-dependent head; cannot change input size");
    }
    if (size.height < 1 || size.width < 1) {
        throw ShapeError("input size must be at least 1x1");
    }
    input_size_ = size;
}

void Network::set_working_precision(Precision prec) {
    working_precision_ = prec;
    for (Parameter* p : parameters()) p->sync_working(prec);
}

bool Network::accepts_variable_input() const {
    bool has_gap = false;
    for (const auto& l : layers_) {
        const LayerSpec::Kind k = l->spec().kind;
        if (k == LayerSpec::Kind::GlobalAvgPool) has_gap = true;
        if (k == LayerSpec::Kind::Flatten) return false;
    }
    return has_gap;
}

std::size_t Network::head_start() const {
    std::size_t start = layers_.size();
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec::Kind k = layers_[i]->spec().kind;
        if (k == LayerSpec::Kind::Flatten || k == LayerSpec::Kind::GlobalAvgPool) {
            start = i + 1;
        }
    }
    return start;
}

Network Network::clone() const {
    Network copy(input_size_, in_channels_, num_classes_);
    copy.arch_name_ = arch_name_;
    copy.working_precision_ = working_precision_;
    for (const auto& l : layers_) copy.layers_.push_back(l->clone());
    return copy;
}

Network build_network(Arch arch, Shape2D input_size, int num_classes, std::uint64_t seed) {
    if (num_classes < 2) {
        throw ConfigError("network needs at least 2 classes");
    }
    std::vector<LayerSpec> specs;
    std::string name;
    if (arch == Arch::BaselineConvNet) {
        if (input_size.height < 8 || input_size.width < 8) {
            throw ShapeError("convnet needs input of at least 8x8");
        }
        specs = {
            LayerSpec::conv2d(16, 3, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool(2, 2),
            LayerSpec::conv2d(32, 3, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool(2, 2),
            LayerSpec::conv2d(64, 3, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool(2, 2),
            LayerSpec::flatten(),
            LayerSpec::linear(256),           LayerSpec::relu(),
            LayerSpec::linear(64),            LayerSpec::relu(),
            LayerSpec::linear(num_classes),
        };
        name = "convnet";
    } else {
        if (input_size.height < 4 || input_size.width < 4) {
            throw ShapeError("mini-resnet needs input of at least 4x4");
        }
        specs = {
            LayerSpec::conv2d(16, 3, 3, 1, 1), LayerSpec::relu(),
            LayerSpec::residual(),             LayerSpec::residual(),
            LayerSpec::maxpool(2, 2),
            LayerSpec::residual(),             LayerSpec::residual(),
            LayerSpec::global_avg_pool(),
            LayerSpec::linear(num_classes),
        };
        name = "mini-resnet";
    }
    return Network::from_specs(specs, input_size, 3, num_classes, seed, name);
}

void set_trainable(Network& net, TrainableSel sel) {
    if (sel == TrainableSel::All) {
        for (Parameter* p : net.parameters()) p->trainable = true;
        if (net.parameters().empty()) {
            throw ConfigError("network has no parameters");
        }
        return;
    }
    const std::size_t hs = net.head_start();
    if (hs >= net.num_layers()) {
        throw ConfigError("network has no head to keep trainable");
    }
    bool any = false;
    for (std::size_t i = 0; i < net.num_layers(); ++i) {
        const bool in_head = i >= hs;
        for (Parameter* p : net.layer(i).parameters()) {
            p->trainable = in_head;
            any = any || in_head;
        }
    }
    if (!any) {
        throw ConfigError("freezing the body leaves no trainable parameters");
    }
}

void set_trainable(Network& net, const std::vector<bool>& layer_mask) {
    if (layer_mask.size() != net.num_layers()) {
        throw ConfigError("trainable mask must have one entry per layer");
    }
    bool any = false;
    for (std::size_t i = 0; i < net.num_layers(); ++i) {
        for (Parameter* p : net.layer(i).parameters()) {
            p->trainable = layer_mask[i];
            any = any || layer_mask[i];
        }
    }
    if (!any) {
        throw ConfigError("trainable mask selects no parameters");
    }
}

}  // namespace pf
