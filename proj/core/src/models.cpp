#include "semgan/models.hpp"

#include <algorithm>
#include <stdexcept>

namespace semgan {

using nn::BatchNorm2d;
using nn::Conv2d;
using nn::InstanceNorm2d;
using nn::LeakyRelu;
using nn::PadMode;
using nn::Relu;
using nn::ResBlock;
using nn::Sequential;
using nn::Sigmoid;
using nn::Tanh;
using nn::Upsample2x;

void GeneratorCfg::validate() const {
  if (n_res_blocks < 1) throw std::invalid_argument("generator: n_res_blocks must be >= 1");
  if (base_width < 4) throw std::invalid_argument("generator: base_width must be >= 4");
}

void DiscriminatorCfg::validate() const {
  if (n_layers < 1) throw std::invalid_argument("discriminator: n_layers must be >= 1");
  if (base_width < 4) throw std::invalid_argument("discriminator: base_width must be >= 4");
}

void SegmenterCfg::validate() const {
  if (num_classes < 2) throw std::invalid_argument("segmenter: K must be >= 2");
  if (base_width < 4) throw std::invalid_argument("segmenter: base_width must be >= 4");
}

namespace {

Conv2d* add_conv(Sequential& net, Rng& rng, const std::string& name, int in_ch, int out_ch,
                 int kernel, int stride, int pad, PadMode mode = PadMode::kZero) {
  Conv2d* c = net.add<Conv2d>(name, in_ch, out_ch, kernel, stride, pad, mode);
  c->init(rng);
  return c;
}

BatchNorm2d* add_bn(Sequential& net, Rng& rng, const std::string& name, int channels) {
  BatchNorm2d* bn = net.add<BatchNorm2d>(name, channels);
  bn->init(rng);
  return bn;
}

std::unique_ptr<Sequential> make_res_body(Rng& rng, const std::string& name, int channels) {
  auto body = std::make_unique<Sequential>();
  add_conv(*body, rng, name + ".conv1", channels, channels, 3, 1, 1, PadMode::kReflect);
  body->add<InstanceNorm2d>();
  body->add<Relu>();
  add_conv(*body, rng, name + ".conv2", channels, channels, 3, 1, 1, PadMode::kReflect);
  body->add<InstanceNorm2d>();
  return body;
}

}  // namespace

Generator::Generator(const GeneratorCfg& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int w = cfg_.base_width;
  add_conv(net_, rng, "g.stem", 3, w, 7, 1, 3, PadMode::kReflect);
  net_.add<InstanceNorm2d>();
  net_.add<Relu>();
  add_conv(net_, rng, "g.down1", w, 2 * w, 3, 2, 1);
  net_.add<InstanceNorm2d>();
  net_.add<Relu>();
  add_conv(net_, rng, "g.down2", 2 * w, 4 * w, 3, 2, 1);
  net_.add<InstanceNorm2d>();
  net_.add<Relu>();
  for (int i = 0; i < cfg_.n_res_blocks; ++i) {
    net_.add<ResBlock>(make_res_body(rng, "g.res" + std::to_string(i), 4 * w));
  }
  net_.add<Upsample2x>();
  add_conv(net_, rng, "g.up1", 4 * w, 2 * w, 3, 1, 1);
  net_.add<InstanceNorm2d>();
  net_.add<Relu>();
  net_.add<Upsample2x>();
  add_conv(net_, rng, "g.up2", 2 * w, w, 3, 1, 1);
  net_.add<InstanceNorm2d>();
  net_.add<Relu>();
  add_conv(net_, rng, "g.head", w, 3, 7, 1, 3, PadMode::kReflect);
  net_.add<Tanh>();
}

Tensor Generator::forward(const Tensor& x, bool train) {
  if (x.ndim() != 4 || x.dim(1) != 3) {
    throw std::invalid_argument("generator: expected [N,3,H,W], got " + x.shape_str());
  }
  if (x.dim(2) % 4 != 0 || x.dim(3) % 4 != 0) {
    throw std::invalid_argument("generator: H and W must be divisible by 4, got " +
                                std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)));
  }
  return net_.forward(x, train);
}

Tensor Generator::backward(const Tensor& dy, bool param_grads) {
  return net_.backward(dy, param_grads);
}

std::vector<nn::Param*> Generator::params() {
  std::vector<nn::Param*> out;
  net_.params(out);
  return out;
}

std::vector<Tensor*> Generator::state() {
  std::vector<Tensor*> out;
  net_.state(out);
  return out;
}

Discriminator::Discriminator(const DiscriminatorCfg& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int w = cfg_.base_width;
  if (cfg_.kind == DiscKind::kPatch) {
    add_conv(net_, rng, "d.stem", 3, w, 4, 2, 1);
    net_.add<LeakyRelu>(0.2f);
    int prev = 1;
    for (int i = 1; i < cfg_.n_layers; ++i) {
      const int mult = std::min(1 << i, 8);
      add_conv(net_, rng, "d.down" + std::to_string(i), prev * w, mult * w, 4, 2, 1);
      net_.add<InstanceNorm2d>();
      net_.add<LeakyRelu>(0.2f);
      prev = mult;
    }
    const int mult = std::min(1 << cfg_.n_layers, 8);
    add_conv(net_, rng, "d.pre", prev * w, mult * w, 4, 1, 1);
    net_.add<InstanceNorm2d>();
    net_.add<LeakyRelu>(0.2f);
    add_conv(net_, rng, "d.head", mult * w, 1, 4, 1, 1);
  } else {
    // Residual variant: same stride layout as the patch discriminator, with
    // a residual block inserted at every scale.
    add_conv(net_, rng, "d.stem", 3, w, 4, 2, 1);
    net_.add<LeakyRelu>(0.2f);
    net_.add<ResBlock>(make_res_body(rng, "d.res0", w));
    int prev = 1;
    for (int i = 1; i < cfg_.n_layers; ++i) {
      const int mult = std::min(1 << i, 8);
      add_conv(net_, rng, "d.down" + std::to_string(i), prev * w, mult * w, 4, 2, 1);
      net_.add<InstanceNorm2d>();
      net_.add<LeakyRelu>(0.2f);
      net_.add<ResBlock>(make_res_body(rng, "d.res" + std::to_string(i), mult * w));
      prev = mult;
    }
    const int mult = std::min(1 << cfg_.n_layers, 8);
    add_conv(net_, rng, "d.pre", prev * w, mult * w, 4, 1, 1);
    net_.add<InstanceNorm2d>();
    net_.add<LeakyRelu>(0.2f);
    add_conv(net_, rng, "d.head", mult * w, 1, 4, 1, 1);
  }
  if (cfg_.sigmoid_output) net_.add<Sigmoid>();
}

std::pair<int, int> Discriminator::output_hw(const DiscriminatorCfg& cfg, int h, int w) {
  cfg.validate();
  auto step = [](int v, int stride) { return (v + 2 - 4) / stride + 1; };
  for (int i = 0; i < cfg.n_layers; ++i) {
    h = step(h, 2);
    w = step(w, 2);
    if (h < 1 || w < 1) throw std::invalid_argument("discriminator: input smaller than receptive field");
  }
  for (int i = 0; i < 2; ++i) {
    h = step(h, 1);
    w = step(w, 1);
    if (h < 1 || w < 1) throw std::invalid_argument("discriminator: input smaller than receptive field");
  }
  return {h, w};
}

Tensor Discriminator::forward(const Tensor& x, bool train) {
  if (x.ndim() != 4 || x.dim(1) != 3) {
    throw std::invalid_argument("discriminator: expected [N,3,H,W], got " + x.shape_str());
  }
  output_hw(cfg_, x.dim(2), x.dim(3));  // receptive-field check with a clear error
  return net_.forward(x, train);
}

Tensor Discriminator::backward(const Tensor& dy, bool param_grads) {
  return net_.backward(dy, param_grads);
}

std::vector<nn::Param*> Discriminator::params() {
  std::vector<nn::Param*> out;
  net_.params(out);
  return out;
}

std::vector<Tensor*> Discriminator::state() {
  std::vector<Tensor*> out;
  net_.state(out);
  return out;
}

Segmenter::Segmenter(const SegmenterCfg& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int w = cfg_.base_width;
  const int k = cfg_.num_classes;
  if (cfg_.preset == SegPreset::kDesk) {
    add_conv(stem_, rng, "s.stem", 3, w, 3, 1, 1);
    add_bn(stem_, rng, "s.stem.bn", w);
    stem_.add<Relu>();

    add_conv(down1_, rng, "s.d1a", w, 2 * w, 3, 2, 1);
    add_bn(down1_, rng, "s.d1a.bn", 2 * w);
    down1_.add<Relu>();
    add_conv(down1_, rng, "s.d1b", 2 * w, 2 * w, 3, 1, 1);
    add_bn(down1_, rng, "s.d1b.bn", 2 * w);
    down1_.add<Relu>();

    add_conv(down2_, rng, "s.d2a", 2 * w, 4 * w, 3, 2, 1);
    add_bn(down2_, rng, "s.d2a.bn", 4 * w);
    down2_.add<Relu>();
    add_conv(down2_, rng, "s.d2b", 4 * w, 4 * w, 3, 1, 1);
    add_bn(down2_, rng, "s.d2b.bn", 4 * w);
    down2_.add<Relu>();

    up1_.add<Upsample2x>();
    add_conv(up1_, rng, "s.u1", 4 * w, 2 * w, 3, 1, 1);
    add_bn(up1_, rng, "s.u1.bn", 2 * w);
    up1_.add<Relu>();

    up2_.add<Upsample2x>();
    add_conv(up2_, rng, "s.u2", 2 * w, w, 3, 1, 1);
    add_bn(up2_, rng, "s.u2.bn", w);
    up2_.add<Relu>();

    add_conv(head_, rng, "s.head", w, k, 1, 1, 0);
  } else {
    auto vgg_block = [&](Sequential& block, const std::string& name, int in_ch, int out_ch,
                         int convs) {
      int c = in_ch;
      for (int i = 0; i < convs; ++i) {
        add_conv(block, rng, name + ".conv" + std::to_string(i), c, out_ch, 3, 1, 1);
        add_bn(block, rng, name + ".bn" + std::to_string(i), out_ch);
        block.add<Relu>();
        c = out_ch;
      }
      block.add<nn::MaxPool2d>();
    };
    vgg_block(b1_, "s.b1", 3, w, 2);
    vgg_block(b2_, "s.b2", w, 2 * w, 2);
    vgg_block(b3_, "s.b3", 2 * w, 4 * w, 3);
    vgg_block(b4_, "s.b4", 4 * w, 8 * w, 3);
    vgg_block(b5_, "s.b5", 8 * w, 8 * w, 3);
    add_conv(head5_, rng, "s.fc6", 8 * w, 16 * w, 3, 1, 1);
    add_bn(head5_, rng, "s.fc6.bn", 16 * w);
    head5_.add<Relu>();
    add_conv(head5_, rng, "s.fc7", 16 * w, 16 * w, 1, 1, 0);
    add_bn(head5_, rng, "s.fc7.bn", 16 * w);
    head5_.add<Relu>();
    add_conv(head5_, rng, "s.score5", 16 * w, k, 1, 1, 0);
    skip4_ = std::make_unique<Conv2d>("s.skip4", 8 * w, k, 1, 1, 0);
    skip4_->init(rng);
    skip3_ = std::make_unique<Conv2d>("s.skip3", 4 * w, k, 1, 1, 0);
    skip3_->init(rng);
    up_final_.add<Upsample2x>();
    up_final_.add<Upsample2x>();
    up_final_.add<Upsample2x>();
  }
}

Tensor Segmenter::forward(const Tensor& x, bool train) {
  if (x.ndim() != 4 || x.dim(1) != 3) {
    throw std::invalid_argument("segmenter: expected [N,3,H,W], got " + x.shape_str());
  }
  return cfg_.preset == SegPreset::kDesk ? forward_desk(x, train) : forward_full(x, train);
}

Tensor Segmenter::backward(const Tensor& dy, bool param_grads) {
  return cfg_.preset == SegPreset::kDesk ? backward_desk(dy, param_grads)
                                         : backward_full(dy, param_grads);
}

Tensor Segmenter::forward_desk(const Tensor& x, bool train) {
  if (x.dim(2) % 4 != 0 || x.dim(3) % 4 != 0) {
    throw std::invalid_argument("segmenter: H and W must be divisible by 4");
  }
  Tensor s = stem_.forward(x, train);
  Tensor d1 = down1_.forward(s, train);
  Tensor d2 = down2_.forward(d1, train);
  Tensor u1 = up1_.forward(d2, train);
  u1.add_scaled(d1, 1.0f);  // skip fusion at 1/2 resolution
  Tensor u2 = up2_.forward(u1, train);
  u2.add_scaled(s, 1.0f);  // skip fusion at full resolution
  return head_.forward(u2, train);
}

Tensor Segmenter::backward_desk(const Tensor& dy, bool param_grads) {
  Tensor du2 = head_.backward(dy, param_grads);
  Tensor du1 = up2_.backward(du2, param_grads);
  Tensor dd2 = up1_.backward(du1, param_grads);
  Tensor dd1 = down2_.backward(dd2, param_grads);
  dd1.add_scaled(du1, 1.0f);
  Tensor ds = down1_.backward(dd1, param_grads);
  ds.add_scaled(du2, 1.0f);
  return stem_.backward(ds, param_grads);
}

Tensor Segmenter::forward_full(const Tensor& x, bool train) {
  if (x.dim(2) % 32 != 0 || x.dim(3) % 32 != 0) {
    throw std::invalid_argument("segmenter(full): H and W must be divisible by 32");
  }
  Tensor p1 = b1_.forward(x, train);
  Tensor p2 = b2_.forward(p1, train);
  Tensor p3 = b3_.forward(p2, train);
  Tensor p4 = b4_.forward(p3, train);
  Tensor p5 = b5_.forward(p4, train);
  Tensor s5 = head5_.forward(p5, train);
  Tensor f4 = up5_.forward(s5, train);
  f4.add_scaled(skip4_->forward(p4, train), 1.0f);
  Tensor f3 = up4_.forward(f4, train);
  f3.add_scaled(skip3_->forward(p3, train), 1.0f);
  return up_final_.forward(f3, train);
}

Tensor Segmenter::backward_full(const Tensor& dy, bool param_grads) {
  Tensor df3 = up_final_.backward(dy, param_grads);
  Tensor dskip3_in = skip3_->backward(df3, param_grads);
  Tensor df4 = up4_.backward(df3, param_grads);
  Tensor dskip4_in = skip4_->backward(df4, param_grads);
  Tensor ds5 = up5_.backward(df4, param_grads);
  Tensor dp5 = head5_.backward(ds5, param_grads);
  Tensor dp4 = b5_.backward(dp5, param_grads);
  dp4.add_scaled(dskip4_in, 1.0f);
  Tensor dp3 = b4_.backward(dp4, param_grads);
  dp3.add_scaled(dskip3_in, 1.0f);
  Tensor dp2 = b3_.backward(dp3, param_grads);
  Tensor dp1 = b2_.backward(dp2, param_grads);
  return b1_.backward(dp1, param_grads);
}

std::vector<nn::Param*> Segmenter::params() {
  std::vector<nn::Param*> out;
  for (Sequential* s : {&stem_, &down1_, &down2_, &up1_, &up2_, &head_, &b1_, &b2_, &b3_, &b4_,
                        &b5_, &head5_}) {
    s->params(out);
  }
  if (skip4_) skip4_->params(out);
  if (skip3_) skip3_->params(out);
  return out;
}

std::vector<Tensor*> Segmenter::state() {
  std::vector<Tensor*> out;
  for (Sequential* s : {&stem_, &down1_, &down2_, &up1_, &up2_, &head_, &b1_, &b2_, &b3_, &b4_,
                        &b5_, &head5_}) {
    s->state(out);
  }
  return out;
}

Image translate(Generator& g, const Image& x) {
  x.validate();
  Tensor out = g.forward(stack_images({x}), /*train=*/false);
  Image y(Tensor({3, x.height(), x.width()},
                 std::vector<float>(out.data(), out.data() + out.size())));
  return y;
}

Tensor discriminate(Discriminator& d, const Image& x) {
  x.validate();
  Tensor out = d.forward(stack_images({x}), /*train=*/false);
  return out.reshaped({1, out.dim(2), out.dim(3)});
}

LogitMap segment(Segmenter& s, const Image& x) {
  x.validate();
  Tensor out = s.forward(stack_images({x}), /*train=*/false);
  return LogitMap(out.reshaped({out.dim(1), out.dim(2), out.dim(3)}));
}

Tensor stack_images(const std::vector<Image>& images) {
  if (images.empty()) throw std::invalid_argument("stack_images: empty batch");
  const int h = images[0].height();
  const int w = images[0].width();
  Tensor out({static_cast<int>(images.size()), 3, h, w});
  const std::size_t sample = static_cast<std::size_t>(3) * h * w;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].height() != h || images[i].width() != w) {
      throw std::invalid_argument("stack_images: inconsistent image sizes in batch");
    }
    std::copy(images[i].data.data(), images[i].data.data() + sample,
              out.data() + i * sample);
  }
  return out;
}

}  // namespace semgan
