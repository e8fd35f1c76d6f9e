#pragma once

#include <memory>
#include <string>
#include <vector>

#include "semgan/core_types.hpp"
#include "semgan/nn.hpp"
#include "semgan/rng.hpp"

namespace semgan {

struct GeneratorCfg {
  int n_res_blocks = 9;
  int base_width = 64;  // desk-scale runs use 16

  void validate() const;
  bool operator==(const GeneratorCfg&) const = default;
};

enum class DiscKind { kPatch, kResnet };

struct DiscriminatorCfg {
  int n_layers = 3;  // stride-2 stages; 3 gives the ~70x70 patch field
  int base_width = 64;
  DiscKind kind = DiscKind::kPatch;
  bool sigmoid_output = false;  // true in bce mode

  void validate() const;
  bool operator==(const DiscriminatorCfg&) const = default;
};

enum class SegPreset { kFull, kDesk };

struct SegmenterCfg {
  int num_classes = 0;
  SegPreset preset = SegPreset::kDesk;
  int base_width = 32;  // full preset uses 64 for the VGG-style trunk

  void validate() const;
  bool operator==(const SegmenterCfg&) const = default;
};

// ResNet translator: two stride-2 downsampling stages, n_res_blocks residual
// blocks, nearest-upsample + conv decoding, tanh output. Inputs must have
// H, W divisible by 4 so the decoder restores the exact input size.
class Generator {
 public:
  Generator(const GeneratorCfg& cfg, Rng& init_rng);

  Tensor forward(const Tensor& x, bool train);  // [N,3,H,W] -> [N,3,H,W]
  Tensor backward(const Tensor& dy, bool param_grads);

  std::vector<nn::Param*> params();
  std::vector<Tensor*> state();
  const GeneratorCfg& cfg() const { return cfg_; }

 private:
  GeneratorCfg cfg_;
  nn::Sequential net_;
};

// PatchGAN score map, or the residual variant behind DiscKind::kResnet.
// Raw scores by default (lsgan); sigmoid appended in bce mode.
class Discriminator {
 public:
  Discriminator(const DiscriminatorCfg& cfg, Rng& init_rng);

  Tensor forward(const Tensor& x, bool train);  // [N,3,H,W] -> [N,1,H',W']
  Tensor backward(const Tensor& dy, bool param_grads);

  std::vector<nn::Param*> params();
  std::vector<Tensor*> state();
  const DiscriminatorCfg& cfg() const { return cfg_; }

  // Score-map H', W' as a function of the input size (patch variant
  // arithmetic; the resnet variant matches because it uses the same stride
  // layout). Throws when the input is smaller than the receptive field.
  static std::pair<int, int> output_hw(const DiscriminatorCfg& cfg, int h, int w);

 private:
  DiscriminatorCfg cfg_;
  nn::Sequential net_;
};

// Encoder-decoder segmenter producing full-resolution logits [N,K,H,W].
// Desk preset: 4-stage strided encoder with skip-sum decoder (trains on CPU
// in minutes). Full preset: VGG16-style 5-pool trunk with an 8x-upsampled
// three-way skip fusion; inputs must be divisible by 32.
class Segmenter {
 public:
  Segmenter(const SegmenterCfg& cfg, Rng& init_rng);

  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& dy, bool param_grads);

  std::vector<nn::Param*> params();
  std::vector<Tensor*> state();
  const SegmenterCfg& cfg() const { return cfg_; }

 private:
  Tensor forward_desk(const Tensor& x, bool train);
  Tensor backward_desk(const Tensor& dy, bool param_grads);
  Tensor forward_full(const Tensor& x, bool train);
  Tensor backward_full(const Tensor& dy, bool param_grads);

  SegmenterCfg cfg_;
  // Desk graph.
  nn::Sequential stem_, down1_, down2_, up1_, up2_, head_;
  // Full graph.
  nn::Sequential b1_, b2_, b3_, b4_, b5_, head5_;
  std::unique_ptr<nn::Conv2d> skip4_, skip3_;
  nn::Upsample2x up5_, up4_;
  nn::Sequential up_final_;
};

// Single-image wrappers (eval mode, batch of one).
Image translate(Generator& g, const Image& x);
Tensor discriminate(Discriminator& d, const Image& x);
LogitMap segment(Segmenter& s, const Image& x);

// Stacks CHW images into an NCHW batch.
Tensor stack_images(const std::vector<Image>& images);

}  // namespace semgan
