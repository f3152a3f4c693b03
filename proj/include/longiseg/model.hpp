#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "longiseg/core.hpp"
#include "longiseg/nn/tensor.hpp"

namespace longiseg::model {

using nn::Tensor;

/// Dense-block encoder-decoder (FC-DenseNet family).
struct BackboneConfig {
  std::string architecture = "fc-densenet56";
  int in_channels = kInputChannels;
  int out_classes = kNumClasses;
  int first_filters = 48;
  int growth_rate = 12;
  std::vector<int> down_layers{4, 4, 4, 4, 4};
  int bottleneck_layers = 4;
  std::vector<int> up_layers{4, 4, 4, 4, 4};
  std::uint64_t seed = 0;
  // Uniform 1/3 outputs at the start. A random head saturates the softmax of rare
  // classes under the MSE loss and they stop learning.
  bool zero_init_head = true;

  /// "fc-densenet56" (4 layers per block, growth 12, five transitions each way),
  /// "fc-densenet-desk" (CPU-sized: 3 transitions, growth 8) and "fc-densenet-tiny"
  /// (a single two-layer dense block, no transitions).
  static BackboneConfig preset(const std::string& name);

  int stride_multiple() const { return 1 << down_layers.size(); }
  void validate() const;
};

void to_json(nlohmann::json& j, const BackboneConfig& c);
void from_json(const nlohmann::json& j, BackboneConfig& c);

template <typename Real>
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<Real> value;
  std::vector<Real> grad;
  bool trainable = true;  // false for batch-norm running statistics
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Real>
class DenseNet {
 public:
  explicit DenseNet(const BackboneConfig& config);

  const BackboneConfig& config() const { return config_; }

  /// Evaluation-mode class probabilities (running batch-norm statistics, no caches).
  /// Spatial extents that are not stride multiples are zero-padded symmetrically and cropped back.
  Tensor<Real> infer(const Tensor<Real>& input) const;

  /// Training-mode forward; keeps activations for backward() and updates running statistics.
  Tensor<Real> forward_train(const Tensor<Real>& input);

  /// Accumulates parameter gradients given dLoss/dProbs for the last forward_train().
  void backward(const Tensor<Real>& dprobs);

  void zero_grad();
  std::vector<Parameter<Real>>& parameters() { return params_; }
  const std::vector<Parameter<Real>>& parameters() const { return params_; }
  std::size_t trainable_count() const;

  /// FNV-1a over every parameter and running statistic.
  std::uint64_t digest() const;

  /// Multiply-accumulates of one forward pass at the given input size.
  double forward_macs(int height, int width) const;

  struct LayerCache {
    Tensor<Real> xhat, act;
    std::vector<Real> mean, var;
  };
  struct BlockCache {
    Tensor<Real> buffer;
    std::vector<LayerCache> layers;
  };
  struct DownCache {
    LayerCache bn;
    Tensor<Real> conv_out;
    std::vector<std::int32_t> argmax;
  };
  struct Tape {
    Tensor<Real> input;
    std::vector<BlockCache> down;
    std::vector<DownCache> transition;
    BlockCache bottleneck;
    std::vector<BlockCache> up;
    Tensor<Real> probs;
    int pad_top = 0, pad_left = 0, out_h = 0, out_w = 0;
    bool valid = false;
  };

 private:
  struct BatchNormRef {
    int channels = 0;
    std::size_t gamma = 0, beta = 0, mean = 0, var = 0;
  };
  struct ConvRef {
    int in = 0, out = 0, kernel = 3;
    std::size_t weight = 0, bias = 0;
  };
  struct DenseLayerRef {
    BatchNormRef bn;
    ConvRef conv;
  };
  struct BlockRef {
    int in_channels = 0;
    std::vector<DenseLayerRef> layers;
    int out_channels(int growth) const { return in_channels + static_cast<int>(layers.size()) * growth; }
  };
  struct TransitionDownRef {
    BatchNormRef bn;
    ConvRef conv;
  };

  std::size_t add_param(const std::string& name, std::vector<int> shape, bool trainable);
  BatchNormRef make_bn(const std::string& name, int channels);
  ConvRef make_conv(const std::string& name, int in, int out, int kernel, bool transposed);
  BlockRef make_block(const std::string& name, int in_channels, int layers);

  void run(Tape& tape, bool training, bool keep) const;
  void block_forward(const BlockRef& blk, BlockCache& cache, bool training, bool keep) const;
  void block_backward(const BlockRef& blk, BlockCache& cache, Tensor<Real>& grad);
  void bn_forward(const BatchNormRef& bn, nn::View<const Real> x, bool training, LayerCache& cache) const;
  void update_running(const BatchNormRef& bn, const LayerCache& cache, std::size_t count);

  BackboneConfig config_;
  std::vector<Parameter<Real>> params_;
  ConvRef first_conv_;
  std::vector<BlockRef> down_;
  std::vector<TransitionDownRef> transition_down_;
  BlockRef bottleneck_;
  std::vector<ConvRef> transition_up_;
  std::vector<BlockRef> up_;
  ConvRef head_;
  Tape tape_;
};

/// Mean over pixels and classes of (p - onehot(gt))^2. Writes dL/dp when `dprobs` is given.
template <typename Real>
Real mse_loss(const Tensor<Real>& probs, std::span<const LabelImage> gt, Tensor<Real>* dprobs = nullptr);

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool amsgrad = true;
};

/// Adam with the AMSGrad maximum of second moments.
template <typename Real>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}
  void step(std::vector<Parameter<Real>>& params);
  long steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_, vmax_;
};

Tensor<float> stack_inputs(std::span<const InputStack> stacks);
std::vector<ProbMap<2>> unstack_probs(const Tensor<float>& probs);

/// Batch forward in evaluation mode.
std::vector<ProbMap<2>> forward(const DenseNet<float>& net, std::span<const InputStack> stacks);

/// One optimiser update; returns the loss. Throws NonFiniteLoss before touching weights.
/// `probs_out` receives the training-mode probabilities when given.
template <typename Real>
Real training_step(DenseNet<Real>& net, const Tensor<Real>& inputs, std::span<const LabelImage> gt,
                   Adam<Real>& optimizer, Tensor<Real>* probs_out = nullptr);

struct CheckpointInfo {
  int epoch = 0;
  double validation_metric = 0.0;
  nlohmann::json extra = nlohmann::json::object();
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary container: "LGSCKPT\0", u32 version, u64 header length, JSON header
/// (config, epoch, metric, tensor table), then float32 payload.
void save_checkpoint(const std::filesystem::path& path, const DenseNet<float>& net, const CheckpointInfo& info);

struct LoadedCheckpoint {
  DenseNet<float> net;
  CheckpointInfo info;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace longiseg::model
