#include "semgan/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "semgan/checkpoint.hpp"
#include "semgan/png_io.hpp"

namespace fs = std::filesystem;

namespace semgan {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (lr <= 0) throw std::invalid_argument("train: lr must be > 0");
  if (p_ab < 0 || p_ab > 1 || p_ba < 0 || p_ba > 1) {
    throw std::invalid_argument("train: dropout probabilities must be in [0, 1]");
  }
  if (pool_size < 0) throw std::invalid_argument("train: pool_size must be >= 0");
  weights.validate();
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.epochs = cfg.get_int("epochs");
  t.batch_size = cfg.get_int("batch_size");
  t.lr = cfg.get_double("lr");
  t.adam_beta1 = cfg.get_double("adam_beta1");
  t.adam_beta2 = cfg.get_double("adam_beta2");
  t.weights = loss_weights(cfg);
  const double p = cfg.get_double("semantic_dropout_p");
  const double p_ab = cfg.get_double("p_ab");
  const double p_ba = cfg.get_double("p_ba");
  t.p_ab = p_ab < 0 ? p : p_ab;
  t.p_ba = p_ba < 0 ? p : p_ba;
  t.warmup.kind = cfg.get_string("warmup_policy") == "fixed" ? WarmupPolicy::Kind::kFixedEpochs
                                                             : WarmupPolicy::Kind::kThreshold;
  t.warmup.fixed_epochs = cfg.get_int("warmup_epochs");
  t.warmup.acc_threshold = cfg.get_double("warmup_acc_threshold");
  t.pool_size = cfg.get_int("pool_size");
  t.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  t.checkpoint_every = cfg.get_int("checkpoint_every");
  t.eval_every = cfg.get_int("eval_every");
  t.sample_every = cfg.get_int("sample_every");
  t.seg_train_on_fakes = cfg.get_bool("seg_train_on_fakes");
  t.seg_use_gt = cfg.get_string("seg_ref_mode") == "gt";
  t.seg_label_remap = label_remap_from_config(cfg);
  t.crop = cfg.get_int("crop");
  t.hflip = cfg.get_bool("hflip");
  t.validate();
  return t;
}

Tensor ImagePool::query(const Tensor& fakes, Rng& rng) {
  if (capacity_ == 0) return fakes;
  const int n = fakes.dim(0);
  const int c = fakes.dim(1), h = fakes.dim(2), w = fakes.dim(3);
  const std::size_t sample = static_cast<std::size_t>(c) * h * w;
  Tensor out(fakes.shape());
  for (int i = 0; i < n; ++i) {
    Tensor img({c, h, w});
    std::copy(fakes.data() + i * sample, fakes.data() + (i + 1) * sample, img.data());
    if (static_cast<int>(buffer_.size()) < capacity_) {
      buffer_.push_back(img);
      std::copy(img.data(), img.data() + sample, out.data() + i * sample);
    } else if (rng.uniform() < 0.5) {
      const std::size_t j =
          static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(buffer_.size())));
      std::copy(buffer_[j].data(), buffer_[j].data() + sample, out.data() + i * sample);
      buffer_[j] = img;
    } else {
      std::copy(img.data(), img.data() + sample, out.data() + i * sample);
    }
  }
  return out;
}

std::vector<nn::Param*> TrainState::generator_params() {
  std::vector<nn::Param*> p = g_ab->params();
  for (auto* q : g_ba->params()) p.push_back(q);
  return p;
}

std::vector<nn::Param*> TrainState::discriminator_params() {
  std::vector<nn::Param*> p = d_a->params();
  for (auto* q : d_b->params()) p.push_back(q);
  return p;
}

std::vector<nn::Param*> TrainState::segmenter_params() {
  std::vector<nn::Param*> p = s_a->params();
  for (auto* q : s_b->params()) p.push_back(q);
  return p;
}

TrainState init_train_state(const RunConfig& cfg) {
  const TrainConfig t = train_config(cfg);
  TrainState st;
  // One init stream; construction order pins the parameter draws.
  Rng init_rng(t.seed * 0x9e3779b97f4a7c15ull + 0x1234567ull);
  st.g_ab = std::make_unique<Generator>(generator_cfg(cfg), init_rng);
  st.g_ba = std::make_unique<Generator>(generator_cfg(cfg), init_rng);
  st.d_a = std::make_unique<Discriminator>(discriminator_cfg(cfg), init_rng);
  st.d_b = std::make_unique<Discriminator>(discriminator_cfg(cfg), init_rng);
  st.s_a = std::make_unique<Segmenter>(segmenter_cfg(cfg), init_rng);
  st.s_b = std::make_unique<Segmenter>(segmenter_cfg(cfg), init_rng);
  const auto b1 = static_cast<float>(t.adam_beta1);
  const auto b2 = static_cast<float>(t.adam_beta2);
  st.opt_g = nn::Adam(st.generator_params(), b1, b2);
  st.opt_d = nn::Adam(st.discriminator_params(), b1, b2);
  st.opt_s = nn::Adam(st.segmenter_params(), b1, b2);
  st.pool_fake_a = ImagePool(t.pool_size);
  st.pool_fake_b = ImagePool(t.pool_size);
  st.rng_data = Rng(t.seed * 6364136223846793005ull + 1);
  st.rng_aug = Rng(t.seed * 6364136223846793005ull + 2);
  st.rng_dropout = Rng(t.seed * 6364136223846793005ull + 3);
  st.rng_pool = Rng(t.seed * 6364136223846793005ull + 4);
  return st;
}

bool warmup_active(const TrainState& state, const TrainConfig& cfg) {
  if (cfg.warmup.kind == WarmupPolicy::Kind::kFixedEpochs) {
    return state.epoch < cfg.warmup.fixed_epochs;
  }
  if (state.warmup_latched_off) return false;
  return !(state.val_acc_a >= cfg.warmup.acc_threshold &&
           state.val_acc_b >= cfg.warmup.acc_threshold);
}

double lr_for_epoch(const TrainConfig& cfg, int epoch) {
  const int decay_start = cfg.epochs / 2;
  if (epoch < decay_start) return cfg.lr;
  return cfg.lr * static_cast<double>(cfg.epochs - epoch) /
         static_cast<double>(cfg.epochs - decay_start);
}

namespace {

std::vector<SegMask> masks_of(const std::vector<LabeledSample>& batch) {
  std::vector<SegMask> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(s.mask);
  return out;
}

std::vector<Image> images_of(const std::vector<LabeledSample>& batch) {
  std::vector<Image> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(s.image);
  return out;
}

// Pseudo-label reference (no ground truth): argmax of the source-domain
// segmenter on the source image, detached. Eval mode so the reference does
// not depend on batch statistics.
std::vector<SegMask> pseudo_refs(Segmenter& s, const Tensor& x) {
  Tensor logits = s.forward(x, /*train=*/false);
  std::vector<SegMask> refs;
  const int n = logits.dim(0);
  const int k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  const std::size_t sample = static_cast<std::size_t>(k) * h * w;
  for (int i = 0; i < n; ++i) {
    LogitMap m(Tensor({k, h, w}, std::vector<float>(logits.data() + i * sample,
                                                    logits.data() + (i + 1) * sample)));
    refs.push_back(m.argmax());
  }
  return refs;
}

struct DirectionOutcome {
  double g_adv = 0.0;
  double cycle = 0.0;
  double identity = 0.0;
  double seg = 0.0;
  bool seg_used_gt = true;
  Tensor fake;  // generated target-domain batch (values reused by D and S phases)
};

}  // namespace

LossRecord training_step(TrainState& state, const PairedBatch& ab, const PairedBatch& ba,
                         const TrainConfig& cfg, double lr, StepDiagnostics* diag) {
  cfg.validate();
  if (ab.a.empty() || ab.a.size() != ab.b.size() || ba.a.size() != ba.b.size() ||
      ab.a.size() != ba.a.size()) {
    throw std::invalid_argument("training_step: batch size mismatch");
  }
  const AdvMode mode = cfg.weights.adv_mode;
  const bool warmup = warmup_active(state, cfg);
  if (diag) diag->warmup_was_active = warmup;

  LossRecord rec;
  rec.step = state.step;

  // ---- Generator phase: D and S frozen (their parameter gradients are
  // never touched; their backward calls only transport dL/dx).
  state.opt_g.zero_grad();

  auto run_direction = [&](Generator& gen, Generator& inverse, Discriminator& disc,
                           Segmenter& seg_target, Segmenter& seg_source,
                           const std::vector<LabeledSample>& src,
                           const std::vector<LabeledSample>& tgt) {
    DirectionOutcome out;
    const Tensor x_src = stack_images(images_of(src));
    out.fake = gen.forward(x_src, /*train=*/true);

    // Adversarial component on fresh fakes.
    Tensor scores = disc.forward(out.fake, /*train=*/false);
    Tensor d_scores;
    out.g_adv = adversarial_g_loss_grad<float>(scores, mode, &d_scores);
    Tensor d_fake = disc.backward(d_scores, /*param_grads=*/false);

    // Cycle component; backpropagates through the inverse generator too.
    Tensor rec_src = inverse.forward(out.fake, /*train=*/true);
    Tensor d_rec;
    out.cycle = cycle_loss_grad<float>(x_src, rec_src, &d_rec);
    if (cfg.weights.lambda_cycle > 0) {
      for (auto& v : d_rec.vec()) v *= static_cast<float>(cfg.weights.lambda_cycle);
      Tensor d_fake_cycle = inverse.backward(d_rec, /*param_grads=*/true);
      d_fake.add_scaled(d_fake_cycle, 1.0f);
    }

    // Segmentation-consistency component: the target-domain segmenter must
    // see source classes in the translated image.
    if (cfg.weights.lambda_seg > 0) {
      std::vector<SegMask> refs;
      if (cfg.seg_use_gt) {
        refs = masks_of(src);
        out.seg_used_gt = true;
      } else {
        refs = pseudo_refs(seg_source, x_src);
        out.seg_used_gt = false;
      }
      Tensor logits = seg_target.forward(out.fake, /*train=*/false);
      Tensor d_logits;
      const auto seg_res =
          seg_consistency_loss_batch_grad<float>(logits, refs, cfg.seg_label_remap, &d_logits);
      out.seg = seg_res.value;
      if (!seg_res.all_ignore) {
        for (auto& v : d_logits.vec()) v *= static_cast<float>(cfg.weights.lambda_seg);
        Tensor d_fake_seg = seg_target.backward(d_logits, /*param_grads=*/false);
        d_fake.add_scaled(d_fake_seg, 1.0f);
      }
    }

    gen.backward(d_fake, /*param_grads=*/true);

    // Identity component: the generator fed a target-domain image should
    // approximate the identity. Weight 0 disables the term entirely.
    if (cfg.weights.lambda_idt > 0) {
      const Tensor x_tgt = stack_images(images_of(tgt));
      Tensor idt = gen.forward(x_tgt, /*train=*/true);
      Tensor d_idt;
      out.identity = identity_loss_grad<float>(x_tgt, idt, &d_idt);
      for (auto& v : d_idt.vec()) v *= static_cast<float>(cfg.weights.lambda_idt);
      gen.backward(d_idt, /*param_grads=*/true);
    }
    return out;
  };

  DirectionOutcome dir_ab = run_direction(*state.g_ab, *state.g_ba, *state.d_b, *state.s_b,
                                          *state.s_a, ab.a, ab.b);
  DirectionOutcome dir_ba = run_direction(*state.g_ba, *state.g_ab, *state.d_a, *state.s_a,
                                          *state.s_b, ba.b, ba.a);
  rec.g_adv_ab = dir_ab.g_adv;
  rec.g_adv_ba = dir_ba.g_adv;
  rec.cycle = dir_ab.cycle + dir_ba.cycle;
  rec.identity = dir_ab.identity + dir_ba.identity;
  rec.seg_ab = dir_ab.seg;
  rec.seg_ba = dir_ba.seg;
  rec.total_g = total_generator_loss(rec, cfg.weights);
  if (diag) {
    diag->seg_ref_gt_ab = dir_ab.seg_used_gt;
    diag->seg_ref_gt_ba = dir_ba.seg_used_gt;
    if (diag->capture_g_grads) {
      diag->g_grads.clear();
      for (nn::Param* p : state.generator_params()) {
        diag->g_grads.insert(diag->g_grads.end(), p->grad.vec().begin(), p->grad.vec().end());
      }
    }
  }

  // ---- Discriminator phase: real batches vs pool-mixed fakes.
  state.opt_d.zero_grad();
  auto run_disc = [&](Discriminator& disc, const std::vector<LabeledSample>& real,
                      const Tensor& fresh_fakes, ImagePool& pool) {
    const Tensor x_real = stack_images(images_of(real));
    Tensor scores_real = disc.forward(x_real, /*train=*/true);
    Tensor d_real;
    double loss = adversarial_d_real_term_grad<float>(scores_real, mode, &d_real);
    disc.backward(d_real, /*param_grads=*/true);
    const Tensor mixed = pool.query(fresh_fakes, state.rng_pool);
    Tensor scores_fake = disc.forward(mixed, /*train=*/true);
    Tensor d_fake;
    loss += adversarial_d_fake_term_grad<float>(scores_fake, mode, &d_fake);
    disc.backward(d_fake, /*param_grads=*/true);
    return loss;
  };
  rec.d_b = run_disc(*state.d_b, ab.b, dir_ab.fake, state.pool_fake_b);
  rec.d_a = run_disc(*state.d_a, ba.a, dir_ba.fake, state.pool_fake_a);

  // ---- Segmenter phase. During warmup: ground-truth pairs only. After
  // warmup the joint flag additionally trains on (translated image, same
  // reference) with the fakes detached.
  state.opt_s.zero_grad();
  double seg_gt_loss = 0.0;
  double gen_path_norm = 0.0;
  if (!warmup && cfg.seg_train_on_fakes && cfg.weights.lambda_seg > 0) {
    auto fake_step = [&](Segmenter& seg, const Tensor& fakes,
                         const std::vector<LabeledSample>& src, Segmenter& seg_source) {
      std::vector<SegMask> refs = cfg.seg_use_gt
                                      ? masks_of(src)
                                      : pseudo_refs(seg_source, stack_images(images_of(src)));
      Tensor logits = seg.forward(fakes, /*train=*/true);
      Tensor d_logits;
      const auto res =
          seg_consistency_loss_batch_grad<float>(logits, refs, cfg.seg_label_remap, &d_logits);
      if (!res.all_ignore) seg.backward(d_logits, /*param_grads=*/true);
      return static_cast<double>(res.value);
    };
    seg_gt_loss += fake_step(*state.s_b, dir_ab.fake, ab.a, *state.s_a);
    seg_gt_loss += fake_step(*state.s_a, dir_ba.fake, ba.b, *state.s_b);
    gen_path_norm = nn::grad_norm(state.segmenter_params());
  }
  if (diag) diag->seg_gen_path_grad_norm = gen_path_norm;
  auto gt_step = [&](Segmenter& seg, const std::vector<LabeledSample>& samples) {
    const Tensor x = stack_images(images_of(samples));
    Tensor logits = seg.forward(x, /*train=*/true);
    Tensor d_logits;
    const auto res = seg_consistency_loss_batch_grad<float>(logits, masks_of(samples),
                                                            std::nullopt, &d_logits);
    if (!res.all_ignore) seg.backward(d_logits, /*param_grads=*/true);
    return static_cast<double>(res.value);
  };
  // S_B pairs with the dropout class of the direction where it scores fakes
  // (A->B uses the `ab` pair), S_A with the B->A pair.
  seg_gt_loss += gt_step(*state.s_a, ba.a);
  seg_gt_loss += gt_step(*state.s_b, ab.b);

  // ---- Finiteness gate, then all three optimizer moves.
  if (!rec.all_finite()) {
    for (const auto& [name, value] :
         std::initializer_list<std::pair<const char*, double>>{{"g_adv_ab", rec.g_adv_ab},
                                                               {"g_adv_ba", rec.g_adv_ba},
                                                               {"d_a", rec.d_a},
                                                               {"d_b", rec.d_b},
                                                               {"cycle", rec.cycle},
                                                               {"identity", rec.identity},
                                                               {"seg_ab", rec.seg_ab},
                                                               {"seg_ba", rec.seg_ba}}) {
      if (!std::isfinite(value)) throw NonFiniteLossError(name);
    }
    throw NonFiniteLossError("total_g");
  }
  if (!std::isfinite(seg_gt_loss)) throw NonFiniteLossError("seg_gt");

  const auto flr = static_cast<float>(lr);
  state.opt_g.step(flr);
  state.opt_d.step(flr);
  state.opt_s.step(flr);
  ++state.step;
  return rec;
}

double segmenter_pixel_accuracy(Segmenter& s, const std::vector<LabeledSample>& samples) {
  std::int64_t correct = 0, total = 0;
  for (const LabeledSample& sample : samples) {
    const LogitMap logits = segment(s, sample.image);
    const SegMask pred = logits.argmax();
    for (std::size_t p = 0; p < sample.mask.labels.size(); ++p) {
      if (sample.mask.labels[p] == kIgnoreLabel) continue;
      ++total;
      if (pred.labels[p] == sample.mask.labels[p]) ++correct;
    }
  }
  return total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

namespace {

ClassTaxonomy taxonomy_for(const RunConfig& cfg, const std::string& key) {
  const std::string path = cfg.get_string(key);
  if (path.empty()) return ClassTaxonomy::identity(cfg.get_int("num_classes"));
  ClassTaxonomy t = ClassTaxonomy::load_csv(path);
  if (t.num_classes != cfg.get_int("num_classes")) {
    throw std::runtime_error("taxonomy " + path + " has K=" + std::to_string(t.num_classes) +
                             " but config num_classes=" + cfg.get_string("num_classes"));
  }
  return t;
}

DatasetSplits make_splits(const RunConfig& cfg, const Dataset& ds) {
  if (cfg.get_string("split_mode") == "stems") return split_dataset_by_stems(ds);
  SplitRatios r{cfg.get_double("split_train"), cfg.get_double("split_val"),
                cfg.get_double("split_test")};
  return split_dataset(ds, r, static_cast<std::uint64_t>(cfg.get_int("split_seed")));
}

std::vector<LabeledSample> eval_crop_all(const Dataset& ds, int crop, std::size_t limit = 0) {
  Rng unused(0);
  std::vector<LabeledSample> out;
  const std::size_t n = limit == 0 ? ds.size() : std::min(limit, ds.size());
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(augment(ds.get(i), AugmentMode::kEval, crop, false, unused));
  }
  return out;
}

// Side-by-side grid [real, fake, cycle] x both directions for a few
// validation samples.
void write_sample_grid(const std::string& path, TrainState& st,
                       const std::vector<LabeledSample>& val_a,
                       const std::vector<LabeledSample>& val_b) {
  const std::size_t rows = std::min<std::size_t>(3, std::min(val_a.size(), val_b.size()));
  if (rows == 0) return;
  const int h = val_a[0].image.height();
  const int w = val_a[0].image.width();
  const int pad = 2;
  const int grid_w = 6 * w + 7 * pad;
  const int grid_h = static_cast<int>(rows) * h + (static_cast<int>(rows) + 1) * pad;
  Rgb8Image grid;
  grid.height = grid_h;
  grid.width = grid_w;
  grid.pixels.assign(static_cast<std::size_t>(grid_h) * grid_w * 3, 30);
  auto blit = [&](const Image& img, std::size_t row, int col) {
    const std::vector<std::uint8_t> rgb = rgb8_from_image(img);
    const int y0 = static_cast<int>(row) * (h + pad) + pad;
    const int x0 = col * (w + pad) + pad;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        for (int ch = 0; ch < 3; ++ch) {
          grid.pixels[((static_cast<std::size_t>(y0 + r)) * grid_w + (x0 + c)) * 3 + ch] =
              rgb[(static_cast<std::size_t>(r) * w + c) * 3 + ch];
        }
      }
    }
  };
  for (std::size_t i = 0; i < rows; ++i) {
    const Image& real_a = val_a[i].image;
    const Image fake_b = translate(*st.g_ab, real_a);
    const Image rec_a = translate(*st.g_ba, fake_b);
    const Image& real_b = val_b[i].image;
    const Image fake_a = translate(*st.g_ba, real_b);
    const Image rec_b = translate(*st.g_ab, fake_a);
    blit(real_a, i, 0);
    blit(fake_b, i, 1);
    blit(rec_a, i, 2);
    blit(real_b, i, 3);
    blit(fake_a, i, 4);
    blit(rec_b, i, 5);
  }
  write_png_rgb8(path, grid);
}

}  // namespace

TrainRunResult train(const RunConfig& cfg, const std::string& run_dir, bool resume) {
  const TrainConfig tc = train_config(cfg);
  if (cfg.get_string("data_a").empty() || cfg.get_string("data_b").empty()) {
    throw std::invalid_argument("train: data_a and data_b must be set");
  }

  const fs::path dir(run_dir);
  const fs::path ckpt_dir = dir / "checkpoints";
  const fs::path eval_dir = dir / "eval";
  const fs::path samples_dir = dir / "samples";
  const fs::path config_path = dir / "config.cfg";
  const fs::path losses_path = dir / "losses.csv";
  const fs::path last_ckpt = ckpt_dir / "last.ckpt";

  if (resume) {
    if (!fs::exists(last_ckpt)) {
      throw std::runtime_error("train: --resume requested but " + last_ckpt.string() +
                               " does not exist");
    }
    const RunConfig stored = RunConfig::load(config_path.string());
    if (!(stored == cfg)) {
      throw std::runtime_error("train: resume config does not match the stored snapshot at " +
                               config_path.string());
    }
  } else if (fs::exists(losses_path)) {
    throw std::runtime_error("train: run dir " + run_dir +
                             " already contains a run (pass --resume to continue)");
  }
  fs::create_directories(ckpt_dir);
  fs::create_directories(eval_dir);
  fs::create_directories(samples_dir);
  if (!resume) cfg.save(config_path.string());

  const ClassTaxonomy tax_a = taxonomy_for(cfg, "taxonomy_a");
  const ClassTaxonomy tax_b = taxonomy_for(cfg, "taxonomy_b");
  ResizeSpec resize{cfg.get_int("resize_h"), cfg.get_int("resize_w")};
  const Dataset ds_a = Dataset::load(cfg.get_string("data_a"), tax_a, Domain::kA, resize);
  const Dataset ds_b = Dataset::load(cfg.get_string("data_b"), tax_b, Domain::kB, resize);
  const DatasetSplits split_a = make_splits(cfg, ds_a);
  const DatasetSplits split_b = make_splits(cfg, ds_b);
  if (split_a.train.empty() || split_b.train.empty()) {
    throw std::runtime_error("train: empty training split");
  }

  TrainState st = init_train_state(cfg);
  if (resume) {
    load_train_checkpoint(last_ckpt.string(), st);
  }

  std::ofstream losses(losses_path, resume ? std::ios::app : std::ios::out);
  if (!losses) throw std::runtime_error("train: cannot write " + losses_path.string());
  if (!resume) losses << LossRecord::csv_header() << "\n";

  // Pre-decoded validation crops for periodic eval and warmup accuracy.
  const std::vector<LabeledSample> val_a = eval_crop_all(split_a.val, tc.crop);
  const std::vector<LabeledSample> val_b = eval_crop_all(split_b.val, tc.crop);

  const int steps_per_epoch = static_cast<int>(
      (std::max(split_a.train.size(), split_b.train.size()) + tc.batch_size - 1) /
      tc.batch_size);
  int consecutive_skips = 0;
  bool logged_seg_ref = false;
  double best_val_miou = -1.0;

  for (int epoch = st.epoch; epoch < tc.epochs; ++epoch) {
    const double lr = lr_for_epoch(tc, epoch);
    for (int s = 0; s < steps_per_epoch; ++s) {
      auto [batch_a, batch_b] =
          sample_unpaired_batch(split_a.train, split_b.train, tc.batch_size, st.rng_data);
      for (auto& x : batch_a) x = augment(x, AugmentMode::kTrain, tc.crop, tc.hflip, st.rng_aug);
      for (auto& x : batch_b) x = augment(x, AugmentMode::kTrain, tc.crop, tc.hflip, st.rng_aug);

      // One dropout draw per sample pair governs both directions.
      PairedBatch ab, ba;
      const double p_max = std::max(tc.p_ab, tc.p_ba);
      for (std::size_t i = 0; i < batch_a.size(); ++i) {
        const LabeledSample& a = batch_a[i];
        const LabeledSample& b = batch_b[i];
        if (p_max == 0.0) {
          ab.a.push_back(a);
          ab.b.push_back(b);
          ba.a.push_back(a);
          ba.b.push_back(b);
          continue;
        }
        const double u = st.rng_dropout.uniform();
        DropoutResult masked{a, b, false, std::nullopt};
        if (u <= p_max) {
          masked = mask_common_label(a, b, st.rng_dropout);
        }
        const bool use_ab = masked.applied && u <= tc.p_ab;
        const bool use_ba = masked.applied && u <= tc.p_ba;
        ab.a.push_back(use_ab ? masked.a : a);
        ab.b.push_back(use_ab ? masked.b : b);
        ba.a.push_back(use_ba ? masked.a : a);
        ba.b.push_back(use_ba ? masked.b : b);
      }

      try {
        StepDiagnostics diag;
        const LossRecord rec = training_step(st, ab, ba, tc, lr, &diag);
        if (!logged_seg_ref && tc.weights.lambda_seg > 0) {
          std::cout << "[train] seg reference: A->B " << (diag.seg_ref_gt_ab ? "gt" : "pseudo")
                    << ", B->A " << (diag.seg_ref_gt_ba ? "gt" : "pseudo") << "\n";
          logged_seg_ref = true;
        }
        losses << rec.csv_row() << "\n";
        losses.flush();
        consecutive_skips = 0;
      } catch (const NonFiniteLossError& e) {
        ++consecutive_skips;
        std::cerr << "[train] step skipped (" << e.what() << "), consecutive skips "
                  << consecutive_skips << "\n";
        if (consecutive_skips > tc.max_consecutive_skips) {
          throw std::runtime_error("train: aborted after " +
                                   std::to_string(consecutive_skips) +
                                   " consecutive non-finite steps");
        }
      }
    }
    st.epoch = epoch + 1;

    const bool last_epoch = st.epoch == tc.epochs;
    if ((tc.eval_every > 0 && st.epoch % tc.eval_every == 0) || last_epoch) {
      st.val_acc_a = segmenter_pixel_accuracy(*st.s_a, val_a);
      st.val_acc_b = segmenter_pixel_accuracy(*st.s_b, val_b);
      if (st.val_acc_a >= tc.warmup.acc_threshold && st.val_acc_b >= tc.warmup.acc_threshold) {
        st.warmup_latched_off = true;  // threshold policy: latched forever
      }
      double val_miou = 0.0;
      nlohmann::json j;
      j["epoch"] = st.epoch;
      j["val_pixel_acc_a"] = st.val_acc_a;
      j["val_pixel_acc_b"] = st.val_acc_b;
      j["warmup_active"] = warmup_active(st, tc);
      if (!val_a.empty() && !val_b.empty()) {
        const MetricsReport ab_rep =
            evaluate_translation_samples(*st.g_ab, *st.s_b, val_a, tax_a);
        const MetricsReport ba_rep =
            evaluate_translation_samples(*st.g_ba, *st.s_a, val_b, tax_b);
        val_miou = 0.5 * (ab_rep.miou + ba_rep.miou);
        j["val_trans_miou_ab"] = ab_rep.miou;
        j["val_trans_miou_ba"] = ba_rep.miou;
      }
      char name[64];
      std::snprintf(name, sizeof(name), "epoch_%04d.json", st.epoch);
      std::ofstream out(eval_dir / name);
      out << j.dump(2) << "\n";
      std::cout << "[train] epoch " << st.epoch << " val acc S_A " << st.val_acc_a << " S_B "
                << st.val_acc_b << " val trans mIoU " << val_miou << "\n";
      if (val_miou > best_val_miou) {
        best_val_miou = val_miou;
        save_train_checkpoint((ckpt_dir / "best.ckpt").string(), st, cfg);
      }
    }
    if (tc.sample_every > 0 && (st.epoch % tc.sample_every == 0 || last_epoch) &&
        !val_a.empty() && !val_b.empty()) {
      char name[64];
      std::snprintf(name, sizeof(name), "epoch_%04d.png", st.epoch);
      write_sample_grid((samples_dir / name).string(), st, val_a, val_b);
    }
    if (st.epoch % tc.checkpoint_every == 0 || last_epoch) {
      char name[64];
      std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", st.epoch);
      save_train_checkpoint((ckpt_dir / name).string(), st, cfg);
      save_train_checkpoint(last_ckpt.string(), st, cfg);
    }
  }

  // Final summary on the test split. The in-run segmenters act as the
  // scoring model here; the ablation pipeline swaps in independently trained
  // evaluation segmenters.
  TrainRunResult result;
  result.run_dir = run_dir;
  const std::vector<LabeledSample> test_a = eval_crop_all(split_a.test, tc.crop);
  const std::vector<LabeledSample> test_b = eval_crop_all(split_b.test, tc.crop);
  if (!test_a.empty() && !test_b.empty()) {
    result.test_ab = evaluate_translation_samples(*st.g_ab, *st.s_b, test_a, tax_a);
    result.test_ba = evaluate_translation_samples(*st.g_ba, *st.s_a, test_b, tax_b);
    nlohmann::json j;
    j["test_ab"] = nlohmann::json::parse(result.test_ab.to_json());
    j["test_ba"] = nlohmann::json::parse(result.test_ba.to_json());
    std::ofstream out(eval_dir / "final_test.json");
    out << j.dump(2) << "\n";
  }
  return result;
}

}  // namespace semgan
