#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "paddyforge/tensor.hpp"

namespace pf {

// He-normal samples: Normal(0, 2/fan_in), deterministic given the generator state.
Tensor kaiming_init(std::vector<std::size_t> shape, std::size_t fan_in, std::mt19937& rng);

// Trainable weight with a full-precision master copy, a working mirror used by
// forward/backward (Full32 or Half16), and a Full32 gradient accumulator.
// `comp` carries the compensated-summation residue of master updates so long
// runs of sub-ulp steps are not lost to rounding bias.
struct Parameter {
    std::string name;
    Tensor master;
    Tensor working;
    Tensor grad;
    Tensor comp;
    bool trainable = true;

    explicit Parameter(std::string n, Tensor init);
    void sync_working(Precision prec);
    void zero_grad();
};

// ---- layer math on plain tensors -------------------------------------------
//
// These are the pure forward/backward maps; the Layer classes below wrap them
// with Parameters and caching.

// input [N,Cin,H,W], kernel [Cout,Cin,kh,kw], bias [Cout]; zero padding.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                      int stride, int padding);

struct ConvGrads {
    Tensor input;
    Tensor kernel;
    Tensor bias;
};
// Set the want_* flags to skip gradients that will not be consumed.
ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernel, int stride,
                          int padding, const Tensor& grad_out, bool want_input = true,
                          bool want_params = true);

struct PoolResult {
    Tensor output;
    std::vector<std::uint32_t> argmax;  // flat input index per output element
};
PoolResult maxpool_forward(const Tensor& input, Shape2D window, int stride);
Tensor maxpool_backward(const std::vector<std::uint32_t>& argmax,
                        const std::vector<std::size_t>& input_shape, const Tensor& grad_out);

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

// input [N,in], weight [out,in], bias [out]; out = input * weight^T + bias.
Tensor linear_forward(const Tensor& input, const Tensor& weight, const Tensor& bias);
struct LinearGrads {
    Tensor input;
    Tensor weight;
    Tensor bias;
};
LinearGrads linear_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                            bool want_input = true, bool want_params = true);

// ---- layer graph ------------------------------------------------------------

struct LayerSpec {
    enum class Kind { Conv2D, MaxPool, ReLU, Linear, Residual, Flatten, GlobalAvgPool, Softmax };
    Kind kind = Kind::ReLU;
    int out_channels = 0;  // Conv2D
    int kernel_h = 0, kernel_w = 0;
    int stride = 1, padding = 0;
    int window = 0, pool_stride = 0;  // MaxPool
    int out_features = 0;             // Linear

    static LayerSpec conv2d(int out_channels, int kh, int kw, int stride = 1, int padding = 0);
    static LayerSpec maxpool(int window, int stride);
    static LayerSpec relu();
    static LayerSpec linear(int out_features);
    static LayerSpec residual();  // two same-channel 3x3 convs with interior ReLU
    static LayerSpec flatten();
    static LayerSpec global_avg_pool();
    static LayerSpec softmax();
};

// Per-layer activations cached by forward and consumed by the matching backward.
struct LayerCache {
    Tensor input;
    std::vector<std::uint32_t> argmax;
    std::vector<LayerCache> inner;  // residual sub-layers
};

struct ForwardContext {
    std::vector<LayerCache> layers;
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& input, LayerCache& cache) const = 0;
    // Returns grad wrt the layer input and accumulates into trainable
    // parameters' grads; frozen parameters are left untouched.
    virtual Tensor backward(const LayerCache& cache, const Tensor& grad_out) = 0;
    virtual std::vector<Parameter*> parameters() { return {}; }
    virtual LayerSpec spec() const = 0;
    virtual std::unique_ptr<Layer> clone() const = 0;
    virtual std::string name() const = 0;
};

enum class Arch { BaselineConvNet, MiniResNet };

class Network {
public:
    Network() = default;
    Network(Shape2D input_size, int in_channels, int num_classes);
    Network(const Network&) = delete;
    Network& operator=(const Network&) = delete;
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;

    // Materializes layers with Kaiming-initialized parameters.
    static Network from_specs(const std::vector<LayerSpec>& specs, Shape2D input_size,
                              int in_channels, int num_classes, std::uint64_t seed,
                              std::string arch_name = "custom");

    void append(std::unique_ptr<Layer> layer);

    Tensor forward(const Tensor& batch, ForwardContext& ctx) const;
    void backward(const ForwardContext& ctx, const Tensor& grad_logits);

    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
    std::size_t num_layers() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_[i]; }
    const Layer& layer(std::size_t i) const { return *layers_[i]; }
    std::vector<LayerSpec> specs() const;

    Shape2D input_size() const { return input_size_; }
    // Only legal for architectures that tolerate it (global pooling present).
    void set_input_size(Shape2D size);
    int in_channels() const { return in_channels_; }
    int num_classes() const { return num_classes_; }
    const std::string& arch_name() const { return arch_name_; }
    void set_arch_name(std::string n) { arch_name_ = std::move(n); }

    Precision working_precision() const { return working_precision_; }
    void set_working_precision(Precision prec);

    // True when a global-average-pool collapses spatial extent before the head,
    // so the network accepts variable input sizes.
    bool accepts_variable_input() const;
    // Index of the first head layer (after the last Flatten/GlobalAvgPool), or
    // num_layers() when there is none.
    std::size_t head_start() const;

    Network clone() const;

private:
    std::vector<std::unique_ptr<Layer>> layers_;
    Shape2D input_size_{0, 0};
    int in_channels_ = 3;
    int num_classes_ = 0;
    Precision working_precision_ = Precision::Full32;
    std::string arch_name_ = "custom";
};

Network build_network(Arch arch, Shape2D input_size, int num_classes, std::uint64_t seed);

enum class TrainableSel { All, HeadOnly };
void set_trainable(Network& net, TrainableSel sel);
void set_trainable(Network& net, const std::vector<bool>& layer_mask);

}  // namespace pf
