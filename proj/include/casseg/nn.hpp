#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "casseg/fields.hpp"
#include "casseg/losses.hpp"
#include "casseg/tensor.hpp"

namespace casseg {

// All layers act on [H, W, C] tensors. Dense applies the same affine map to
// every pixel's channel vector, so a point cloud is a 1 x n "image".
struct Dense {
    std::size_t in = 0;
    std::size_t out = 0;
};

// Stride 1, zero "same" padding, odd kernel.
struct Conv2d {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 3;
};

struct Relu {};

// Softmax over the channel axis of every pixel. Final layer only.
struct SoftmaxChannels {};

using LayerSpec = std::variant<Dense, Conv2d, Relu, SoftmaxChannels>;

std::string layer_name(const LayerSpec& spec);

// Parameters are stored flat: each Dense/Conv2d layer owns a weight tensor
// followed by a bias tensor.
//   Dense weight  [out, in]
//   Conv2d weight [out, kernel, kernel, in]
inline constexpr std::size_t kNoParameters = std::numeric_limits<std::size_t>::max();

struct Network {
    std::vector<LayerSpec> layers;
    std::vector<Tensor> params;
    std::vector<std::size_t> param_offset;  // index of the layer's weight in params, or kNoParameters
    std::uint64_t seed = 0;

    std::size_t parameter_count() const;
    std::size_t input_channels() const;
    std::size_t output_channels() const;
};

Network network_init(const std::vector<LayerSpec>& specs, std::uint64_t seed);

struct ForwardCache {
    std::vector<Tensor> inputs;  // input to each layer
    Tensor output;
};

ForwardCache forward(const Network& net, const Tensor& input);

struct BackwardResult {
    std::vector<Tensor> param_grads;  // aligned with Network::params
    Tensor grad_input;
};

BackwardResult backward(const Network& net, const ForwardCache& cache, const Tensor& grad_output);

enum class LossKind { cas, ce, cace };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

// Scalar loss of one output field against its partition, and its gradient.
// CE uses the partition labels as class indices; CACE requires labels {0,1}.
LossWithGradient evaluate_loss(LossKind kind, double alpha, const DescriptorField& output,
                               const RegionPartition& target);

struct TrainConfig {
    double learning_rate = 0.05;
    double momentum = 0.9;
    bool adam = false;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t epochs = 200;
    std::size_t batch_size = 4;
    std::uint64_t seed = 0;
    LossKind loss = LossKind::cas;
    double alpha = 0.5;

    void validate() const;
};

struct OptimizerState {
    std::vector<Tensor> first;   // SGD velocity or Adam first moment
    std::vector<Tensor> second;  // Adam second moment
    std::size_t step = 0;
};

OptimizerState make_optimizer_state(const Network& net);

void optimizer_step(Network& net, const std::vector<Tensor>& grads, const TrainConfig& cfg, OptimizerState& state);

// A network input with its loss target.
struct Example {
    Tensor input;
    RegionPartition target;
};

struct ObjectiveResult {
    double loss = 0.0;
    std::vector<Tensor> param_grads;
};

// Mean loss over the examples and its exact gradient w.r.t. every parameter.
ObjectiveResult objective_and_gradient(const Network& net, LossKind kind, double alpha,
                                       const std::vector<const Example*>& batch);
double objective(const Network& net, LossKind kind, double alpha, const std::vector<const Example*>& batch);

// Optional hook applied to the analytic gradients before comparison.
using GradientHook = std::function<void(std::vector<Tensor>&)>;

// Max relative error between analytic parameter gradients and central finite
// differences of the objective, using max(|a|, |n|, 1e-8) as denominator.
double gradcheck(const Network& net, LossKind kind, double alpha, const std::vector<const Example*>& batch,
                 double h = 1e-5, const GradientHook& hook = {});

} // namespace casseg
