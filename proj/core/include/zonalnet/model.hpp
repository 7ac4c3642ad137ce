#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "zonalnet/image.hpp"
#include "zonalnet/ops.hpp"
#include "zonalnet/tensor.hpp"

namespace zonalnet {

struct ModelConfig {
  std::string arch = "proposed";  // "proposed" | "unet"
  double width_multiplier = 1.0;
  std::int64_t input_size = 192;
  bool use_stem_max_pool = false;  // extra k2/s2 pool after the stem (ablation arm)
  bool layer4_single_dilated = false;  // keep one dilated bottleneck instead of two

  void validate() const;
  // Channel count after width scaling; errors if any stage would vanish.
  std::int64_t scaled(std::int64_t base_channels) const;
  // Input extents must be divisible by this (8, or 16 with the stem pool /
  // for the U-Net baseline).
  std::int64_t size_divisor() const;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct NamedBnState {
  std::string name;  // layer name; buffers are <name>.running_mean / .running_var
  std::shared_ptr<BatchNormState> state;
};

// Collects parameters and batch-norm buffers in construction order and hands
// out Kaiming-initialized conv weights.
class ModuleBuilder {
 public:
  explicit ModuleBuilder(std::uint64_t seed) : rng_(seed) {}

  Tensor param(const std::string& name, Shape shape, std::vector<float> values);
  Tensor kaiming_conv(const std::string& name, std::int64_t out_ch, std::int64_t in_ch,
                      std::int64_t kernel);
  Tensor zeros_param(const std::string& name, Shape shape);
  Tensor ones_param(const std::string& name, Shape shape);
  std::shared_ptr<BatchNormState> bn_state(const std::string& layer_name);

  std::vector<NamedTensor> params;
  std::vector<NamedBnState> bn_states;

 private:
  std::mt19937_64 rng_;
};

// ---------------------------------------------------------------------------
// Layers

struct Conv2dLayer {
  Tensor weight;
  Tensor bias;  // undefined handle when the conv has no bias
  Conv2dOpts opts;
  Tensor forward(const Tensor& x) const { return conv2d(x, weight, bias, opts); }
};

struct BatchNormLayer {
  Tensor gamma, beta;
  std::shared_ptr<BatchNormState> state;
  Tensor forward(const Tensor& x, bool train) const {
    return batch_norm2d(x, gamma, beta, *state, train ? BnMode::train : BnMode::eval);
  }
};

struct ConvBn {
  Conv2dLayer conv;
  BatchNormLayer bn;
  bool relu_after = true;
  Tensor forward(const Tensor& x, bool train) const;
};

// 1x1 reduce -> 3x3 (carries stride/dilation) -> 1x1 expand, with an optional
// projection shortcut; ReLU after the residual add.
struct BottleneckBlock {
  ConvBn reduce, spatial, expand;
  std::optional<ConvBn> projection;
  Tensor forward(const Tensor& x, bool train) const;
};

// Two 3x3 convs with an identity shortcut.
struct BasicBlock {
  ConvBn a, b;
  Tensor forward(const Tensor& x, bool train) const;
};

// ---------------------------------------------------------------------------
// Networks

// ResNet50 variant for dense prediction: no global pooling head, layer4 runs
// at stride 1 where a two-conv basic block precedes dilated bottlenecks, so
// the output stride stays 8 (16 with the optional stem max pool).
struct ImprovedResnet50 {
  ConvBn stem;
  bool use_max_pool = false;
  std::vector<BottleneckBlock> layer1, layer2, layer3;
  BasicBlock layer4_basic;
  std::vector<BottleneckBlock> layer4_dilated;
  Tensor forward(const Tensor& x, bool train) const;
};

// Feature pyramid attention: 7x7/5x5/3x3 stride-2 conv pyramid merged bottom
// up, multiplied into the 1x1-reduced main features, plus a global-pooling
// branch added back. Requires an input extent of at least 8.
struct FeaturePyramidAttention {
  ConvBn main_branch;          // 1x1
  ConvBn down7, down5, down3;  // stride-2 pyramid
  Conv2dLayer global_conv;     // 1x1 with bias, ReLU, no BN
  Tensor forward(const Tensor& x, bool train) const;
};

// 3x3 conv + x4 bilinear upsample + 3x3 logits conv + final upsample back to
// the input grid.
struct SegDecoder {
  ConvBn refine;
  Conv2dLayer logits;
  std::int64_t up_mid = 4;
  std::int64_t up_final = 2;
  Tensor forward(const Tensor& x, bool train) const;
};

// 4-down/4-up U-Net with bilinear upsampling and skip concatenation.
struct UnetBaseline {
  struct Stage {
    ConvBn a, b;
    Tensor forward(const Tensor& x, bool train) const;
  };
  std::vector<Stage> encoder;  // 4 stages + bottleneck
  std::vector<Stage> decoder;  // 4 stages
  Conv2dLayer head;            // 1x1
  Tensor forward(const Tensor& x, bool train) const;
};

ImprovedResnet50 build_improved_resnet50(const ModelConfig& config, ModuleBuilder& builder,
                                         const std::string& prefix);
FeaturePyramidAttention build_fpa(std::int64_t in_channels, std::int64_t out_channels,
                                  ModuleBuilder& builder, const std::string& prefix);
SegDecoder build_decoder(std::int64_t in_channels, std::int64_t mid_channels,
                         std::int64_t up_final, ModuleBuilder& builder, const std::string& prefix);
UnetBaseline build_unet_baseline(const ModelConfig& config, ModuleBuilder& builder,
                                 const std::string& prefix);

// ---------------------------------------------------------------------------
// Assembled model

class ModelGraph {
 public:
  static ModelGraph build(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  // NxCxHxW logits for Nx1xSxS input; S must be divisible by the config's
  // size divisor and large enough for the attention pyramid.
  Tensor forward(const Tensor& input, bool train);
  // Encoder feature map (proposed arch only).
  Tensor forward_encoder(const Tensor& input, bool train);

  const std::vector<NamedTensor>& parameters() const { return params_; }
  const std::vector<NamedBnState>& bn_states() const { return bn_states_; }
  std::int64_t parameter_count() const;
  void zero_grads();

 private:
  ModelConfig config_;
  std::vector<NamedTensor> params_;
  std::vector<NamedBnState> bn_states_;
  std::optional<ImprovedResnet50> encoder_;
  std::optional<FeaturePyramidAttention> fpa_;
  std::optional<SegDecoder> decoder_;
  std::optional<UnetBaseline> unet_;
};

// Softmax probabilities and per-sample argmax masks (ties resolve to the
// lowest class index).
struct SegmentOutput {
  Tensor probabilities;
  std::vector<LabelMask> masks;
};

std::vector<LabelMask> argmax_labels(const Tensor& probabilities);
SegmentOutput forward_segment(ModelGraph& model, const Tensor& input);

}  // namespace zonalnet
