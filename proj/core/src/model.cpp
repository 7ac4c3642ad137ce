#include "zonalnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace zonalnet {

void ModelConfig::validate() const {
  if (arch != "proposed" && arch != "unet")
    throw std::invalid_argument("model: unknown arch '" + arch + "' (proposed | unet)");
  if (!(width_multiplier > 0.0))
    throw std::invalid_argument("model: width multiplier must be positive");
  for (const std::int64_t base : {64, 128, 256, 512, 1024, 2048})
    if (std::llround(base * width_multiplier) < 1)
      throw std::invalid_argument("model: width multiplier " + std::to_string(width_multiplier) +
                                  " collapses a " + std::to_string(base) + "-channel stage");
  if (input_size < size_divisor())
    throw std::invalid_argument("model: input size " + std::to_string(input_size) +
                                " below the minimum " + std::to_string(size_divisor()));
  if (input_size % size_divisor() != 0)
    throw std::invalid_argument("model: input size " + std::to_string(input_size) +
                                " not divisible by " + std::to_string(size_divisor()));
}

std::int64_t ModelConfig::scaled(std::int64_t base_channels) const {
  return std::max<std::int64_t>(1, std::llround(base_channels * width_multiplier));
}

std::int64_t ModelConfig::size_divisor() const {
  if (arch == "unet") return 16;
  return use_stem_max_pool ? 16 : 8;
}

// ---------------------------------------------------------------------------
// ModuleBuilder

Tensor ModuleBuilder::param(const std::string& name, Shape shape, std::vector<float> values) {
  Tensor t = Tensor::from_vector(std::move(shape), std::move(values), /*requires_grad=*/true);
  params.push_back({name, t});
  return t;
}

Tensor ModuleBuilder::kaiming_conv(const std::string& name, std::int64_t out_ch,
                                   std::int64_t in_ch, std::int64_t kernel) {
  const std::int64_t fan_in = in_ch * kernel * kernel;
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  std::vector<float> w(static_cast<std::size_t>(out_ch * in_ch * kernel * kernel));
  for (float& v : w) v = dist(rng_);
  return param(name, {out_ch, in_ch, kernel, kernel}, std::move(w));
}

Tensor ModuleBuilder::zeros_param(const std::string& name, Shape shape) {
  const std::int64_t n = shape_numel(shape);
  return param(name, std::move(shape), std::vector<float>(static_cast<std::size_t>(n), 0.0f));
}

Tensor ModuleBuilder::ones_param(const std::string& name, Shape shape) {
  const std::int64_t n = shape_numel(shape);
  return param(name, std::move(shape), std::vector<float>(static_cast<std::size_t>(n), 1.0f));
}

std::shared_ptr<BatchNormState> ModuleBuilder::bn_state(const std::string& layer_name) {
  auto state = std::make_shared<BatchNormState>();
  bn_states.push_back({layer_name, state});
  return state;
}

namespace {

Conv2dLayer make_conv(ModuleBuilder& b, const std::string& name, std::int64_t out_ch,
                      std::int64_t in_ch, std::int64_t kernel, Conv2dOpts opts, bool with_bias) {
  Conv2dLayer layer;
  layer.weight = b.kaiming_conv(name + ".weight", out_ch, in_ch, kernel);
  if (with_bias) layer.bias = b.zeros_param(name + ".bias", {out_ch});
  layer.opts = opts;
  return layer;
}

BatchNormLayer make_bn(ModuleBuilder& b, const std::string& name, std::int64_t channels) {
  BatchNormLayer layer;
  layer.gamma = b.ones_param(name + ".gamma", {channels});
  layer.beta = b.zeros_param(name + ".beta", {channels});
  layer.state = b.bn_state(name);
  return layer;
}

// conv (no bias) + BN + optional ReLU
ConvBn make_conv_bn(ModuleBuilder& b, const std::string& name, std::int64_t out_ch,
                    std::int64_t in_ch, std::int64_t kernel, Conv2dOpts opts, bool relu_after) {
  ConvBn block;
  block.conv = make_conv(b, name + ".conv", out_ch, in_ch, kernel, opts, /*with_bias=*/false);
  block.bn = make_bn(b, name + ".bn", out_ch);
  block.relu_after = relu_after;
  return block;
}

BottleneckBlock make_bottleneck(ModuleBuilder& b, const std::string& name, std::int64_t in_ch,
                                std::int64_t mid_ch, std::int64_t out_ch, std::int64_t stride,
                                std::int64_t dilation, bool with_projection) {
  BottleneckBlock block;
  block.reduce = make_conv_bn(b, name + ".reduce", mid_ch, in_ch, 1, {}, true);
  // stride lives on the 3x3 conv (the v1.5 placement)
  block.spatial = make_conv_bn(b, name + ".spatial", mid_ch, mid_ch, 3,
                               {stride, dilation, dilation}, true);
  block.expand = make_conv_bn(b, name + ".expand", out_ch, mid_ch, 1, {}, false);
  if (with_projection)
    block.projection = make_conv_bn(b, name + ".projection", out_ch, in_ch, 1,
                                    {stride, 0, 1}, false);
  return block;
}

}  // namespace

// ---------------------------------------------------------------------------
// Forwards

Tensor ConvBn::forward(const Tensor& x, bool train) const {
  Tensor y = bn.forward(conv.forward(x), train);
  return relu_after ? relu(y) : y;
}

Tensor BottleneckBlock::forward(const Tensor& x, bool train) const {
  Tensor y = expand.forward(spatial.forward(reduce.forward(x, train), train), train);
  const Tensor skip = projection ? projection->forward(x, train) : x;
  return relu(add(y, skip));
}

Tensor BasicBlock::forward(const Tensor& x, bool train) const {
  Tensor y = b.forward(a.forward(x, train), train);
  return relu(add(y, x));
}

Tensor ImprovedResnet50::forward(const Tensor& x, bool train) const {
  Tensor y = stem.forward(x, train);
  if (use_max_pool) y = pool2d(y, PoolKind::max, 2, 2);
  for (const auto& blk : layer1) y = blk.forward(y, train);
  for (const auto& blk : layer2) y = blk.forward(y, train);
  for (const auto& blk : layer3) y = blk.forward(y, train);
  y = layer4_basic.forward(y, train);
  for (const auto& blk : layer4_dilated) y = blk.forward(y, train);
  return y;
}

Tensor FeaturePyramidAttention::forward(const Tensor& x, bool train) const {
  const std::int64_t h = x.dim(2), w = x.dim(3);
  if (h < 8 || w < 8)
    throw std::invalid_argument("fpa: input extent " + std::to_string(std::min(h, w)) +
                                " is below the minimum 8");
  const Tensor main = main_branch.forward(x, train);
  const Tensor p7 = down7.forward(x, train);
  const Tensor p5 = down5.forward(p7, train);
  const Tensor p3 = down3.forward(p5, train);
  // bottom-up merge; resize to each level's actual extent (equals x2
  // upsampling whenever the pyramid halves evenly)
  Tensor merged = bilinear_resize(p3, p5.dim(2), p5.dim(3));
  merged = add(merged, p5);
  merged = bilinear_resize(merged, p7.dim(2), p7.dim(3));
  merged = add(merged, p7);
  merged = bilinear_resize(merged, h, w);
  Tensor out = mul(main, merged);
  // global context branch: GAP -> 1x1 conv -> ReLU, broadcast over positions
  Tensor g = pool2d(x, PoolKind::global_avg);
  g = relu(global_conv.forward(g));
  return add(out, g);
}

Tensor SegDecoder::forward(const Tensor& x, bool train) const {
  Tensor y = refine.forward(x, train);
  y = bilinear_upsample(y, up_mid);
  y = logits.forward(y);
  return bilinear_upsample(y, up_final);
}

Tensor UnetBaseline::Stage::forward(const Tensor& x, bool train) const {
  return b.forward(a.forward(x, train), train);
}

Tensor UnetBaseline::forward(const Tensor& x, bool train) const {
  std::vector<Tensor> skips;
  Tensor y = x;
  for (std::size_t i = 0; i + 1 < encoder.size(); ++i) {
    y = encoder[i].forward(y, train);
    skips.push_back(y);
    y = pool2d(y, PoolKind::max, 2, 2);
  }
  y = encoder.back().forward(y, train);
  for (std::size_t i = 0; i < decoder.size(); ++i) {
    y = bilinear_upsample(y, 2);
    y = concat_channels(y, skips[skips.size() - 1 - i]);
    y = decoder[i].forward(y, train);
  }
  return head.forward(y);
}

// ---------------------------------------------------------------------------
// Builders

ImprovedResnet50 build_improved_resnet50(const ModelConfig& config, ModuleBuilder& b,
                                         const std::string& prefix) {
  const auto ch = [&](std::int64_t base) { return config.scaled(base); };
  ImprovedResnet50 net;
  net.stem = make_conv_bn(b, prefix + ".stem", ch(64), 1, 7, {2, 3, 1}, true);
  net.use_max_pool = config.use_stem_max_pool;

  auto make_layer = [&](std::vector<BottleneckBlock>& layer, const std::string& name, int blocks,
                        std::int64_t in_ch, std::int64_t mid_ch, std::int64_t out_ch,
                        std::int64_t stride) {
    for (int i = 0; i < blocks; ++i)
      layer.push_back(make_bottleneck(b, name + "." + std::to_string(i), i == 0 ? in_ch : out_ch,
                                      mid_ch, out_ch, i == 0 ? stride : 1, 1, i == 0));
  };
  make_layer(net.layer1, prefix + ".layer1", 3, ch(64), ch(64), ch(256), 1);
  make_layer(net.layer2, prefix + ".layer2", 4, ch(256), ch(128), ch(512), 2);
  make_layer(net.layer3, prefix + ".layer3", 6, ch(512), ch(256), ch(1024), 2);

  // layer4 keeps stride 1: a two-conv basic block, then dilated bottlenecks
  net.layer4_basic.a = make_conv_bn(b, prefix + ".layer4.0.a", ch(1024), ch(1024), 3,
                                    {1, 1, 1}, true);
  net.layer4_basic.b = make_conv_bn(b, prefix + ".layer4.0.b", ch(1024), ch(1024), 3,
                                    {1, 1, 1}, false);
  const int dilated_blocks = config.layer4_single_dilated ? 1 : 2;
  for (int i = 0; i < dilated_blocks; ++i)
    net.layer4_dilated.push_back(make_bottleneck(
        b, prefix + ".layer4." + std::to_string(i + 1), i == 0 ? ch(1024) : ch(2048), ch(512),
        ch(2048), 1, 2, i == 0));
  return net;
}

FeaturePyramidAttention build_fpa(std::int64_t in_channels, std::int64_t out_channels,
                                  ModuleBuilder& b, const std::string& prefix) {
  if (in_channels < 1 || out_channels < 1)
    throw std::invalid_argument("fpa: channel counts must be positive");
  FeaturePyramidAttention fpa;
  fpa.main_branch = make_conv_bn(b, prefix + ".main", out_channels, in_channels, 1, {}, true);
  fpa.down7 = make_conv_bn(b, prefix + ".down7", out_channels, in_channels, 7, {2, 3, 1}, true);
  fpa.down5 = make_conv_bn(b, prefix + ".down5", out_channels, out_channels, 5, {2, 2, 1}, true);
  fpa.down3 = make_conv_bn(b, prefix + ".down3", out_channels, out_channels, 3, {2, 1, 1}, true);
  fpa.global_conv = make_conv(b, prefix + ".global", out_channels, in_channels, 1, {},
                              /*with_bias=*/true);
  return fpa;
}

SegDecoder build_decoder(std::int64_t in_channels, std::int64_t mid_channels,
                         std::int64_t up_final, ModuleBuilder& b, const std::string& prefix) {
  if (up_final < 1) throw std::invalid_argument("decoder: upsample factor must be positive");
  SegDecoder dec;
  dec.refine = make_conv_bn(b, prefix + ".refine", mid_channels, in_channels, 3, {1, 1, 1}, true);
  dec.logits = make_conv(b, prefix + ".logits", kNumClasses, mid_channels, 3, {1, 1, 1},
                         /*with_bias=*/true);
  dec.up_final = up_final;
  return dec;
}

UnetBaseline build_unet_baseline(const ModelConfig& config, ModuleBuilder& b,
                                 const std::string& prefix) {
  const auto ch = [&](std::int64_t base) { return config.scaled(base); };
  const std::int64_t widths[5] = {ch(64), ch(128), ch(256), ch(512), ch(1024)};
  UnetBaseline net;
  auto stage = [&](const std::string& name, std::int64_t in_ch, std::int64_t out_ch) {
    UnetBaseline::Stage s;
    s.a = make_conv_bn(b, name + ".a", out_ch, in_ch, 3, {1, 1, 1}, true);
    s.b = make_conv_bn(b, name + ".b", out_ch, out_ch, 3, {1, 1, 1}, true);
    return s;
  };
  std::int64_t in_ch = 1;
  for (int i = 0; i < 5; ++i) {
    net.encoder.push_back(stage(prefix + ".enc" + std::to_string(i), in_ch, widths[i]));
    in_ch = widths[i];
  }
  for (int i = 3; i >= 0; --i)
    net.decoder.push_back(
        stage(prefix + ".dec" + std::to_string(i), widths[i + 1] + widths[i], widths[i]));
  net.head = make_conv(b, prefix + ".head", kNumClasses, widths[0], 1, {}, /*with_bias=*/true);
  return net;
}

// ---------------------------------------------------------------------------
// ModelGraph

ModelGraph ModelGraph::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelGraph g;
  g.config_ = config;
  ModuleBuilder builder(seed);
  if (config.arch == "proposed") {
    g.encoder_ = build_improved_resnet50(config, builder, "encoder");
    g.fpa_ = build_fpa(config.scaled(2048), config.scaled(512), builder, "fpa");
    // encoder stride 8 (16 with the stem pool); x4 then x2 (or x4) restores it
    const std::int64_t up_final = config.use_stem_max_pool ? 4 : 2;
    g.decoder_ = build_decoder(config.scaled(512), config.scaled(128), up_final, builder,
                               "decoder");
  } else {
    g.unet_ = build_unet_baseline(config, builder, "unet");
  }
  g.params_ = std::move(builder.params);
  g.bn_states_ = std::move(builder.bn_states);
  return g;
}

namespace {

void check_forward_input(const ModelConfig& config, const Tensor& input) {
  if (input.shape().size() != 4 || input.dim(1) != 1)
    throw std::invalid_argument("model: input must be Nx1xSxS, got " + shape_str(input.shape()));
  const std::int64_t h = input.dim(2), w = input.dim(3);
  const std::int64_t div = config.size_divisor();
  if (h % div != 0 || w % div != 0)
    throw std::invalid_argument("model: input extent " + std::to_string(h) + "x" +
                                std::to_string(w) + " not divisible by " + std::to_string(div));
}

}  // namespace

Tensor ModelGraph::forward_encoder(const Tensor& input, bool train) {
  if (!encoder_) throw std::invalid_argument("model: encoder only exists for the proposed arch");
  check_forward_input(config_, input);
  return encoder_->forward(input, train);
}

Tensor ModelGraph::forward(const Tensor& input, bool train) {
  check_forward_input(config_, input);
  if (unet_) return unet_->forward(input, train);
  Tensor features = encoder_->forward(input, train);
  features = fpa_->forward(features, train);
  return decoder_->forward(features, train);
}

std::int64_t ModelGraph::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ModelGraph::zero_grads() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::vector<LabelMask> argmax_labels(const Tensor& probabilities) {
  if (probabilities.shape().size() != 4)
    throw std::invalid_argument("argmax_labels: expected NxCxHxW");
  const std::int64_t n = probabilities.dim(0), c = probabilities.dim(1);
  const std::int64_t h = probabilities.dim(2), w = probabilities.dim(3);
  if (c != kNumClasses)
    throw std::invalid_argument("argmax_labels: expected " + std::to_string(kNumClasses) +
                                " channels");
  const auto vals = probabilities.values();
  std::vector<LabelMask> out(static_cast<std::size_t>(n));
  const std::int64_t hw = h * w;
  for (std::int64_t b = 0; b < n; ++b) {
    LabelMask& m = out[static_cast<std::size_t>(b)];
    m.width = w;
    m.height = h;
    m.labels.resize(static_cast<std::size_t>(hw));
    const std::int64_t base = b * c * hw;
    for (std::int64_t i = 0; i < hw; ++i) {
      std::uint8_t best = 0;
      float best_v = vals[static_cast<std::size_t>(base + i)];
      for (std::int64_t ch = 1; ch < c; ++ch) {
        const float v = vals[static_cast<std::size_t>(base + ch * hw + i)];
        if (v > best_v) {  // strict: ties keep the lowest class
          best_v = v;
          best = static_cast<std::uint8_t>(ch);
        }
      }
      m.labels[static_cast<std::size_t>(i)] = best;
    }
  }
  return out;
}

SegmentOutput forward_segment(ModelGraph& model, const Tensor& input) {
  NoGradGuard guard;
  SegmentOutput out;
  out.probabilities = softmax_channel(model.forward(input, /*train=*/false));
  out.masks = argmax_labels(out.probabilities);
  return out;
}

}  // namespace zonalnet
