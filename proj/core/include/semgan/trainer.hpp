#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "semgan/data.hpp"
#include "semgan/eval.hpp"
#include "semgan/losses.hpp"
#include "semgan/models.hpp"
#include "semgan/nn.hpp"
#include "semgan/rng.hpp"
#include "semgan/run_config.hpp"
#include "semgan/semantic_dropout.hpp"

namespace semgan {

struct WarmupPolicy {
  enum class Kind { kFixedEpochs, kThreshold };
  Kind kind = Kind::kThreshold;
  int fixed_epochs = 5;
  double acc_threshold = 0.70;
};

struct TrainConfig {
  int epochs = 50;
  int batch_size = 1;
  double lr = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  LossWeights weights;
  // Per-direction dropout thresholds; one uniform draw per sample pair
  // governs both (a direction uses the masked pair iff the draw is below its
  // own threshold).
  double p_ab = 0.0;
  double p_ba = 0.0;
  WarmupPolicy warmup;
  int pool_size = 50;
  std::uint64_t seed = 1;
  int checkpoint_every = 10;
  int eval_every = 5;
  int sample_every = 10;
  // After warmup, also train segmenters on translated images (off by
  // default: the warmup rule is kept for the whole run unless enabled).
  bool seg_train_on_fakes = false;
  bool seg_use_gt = true;  // false: reference is the source segmenter argmax
  std::optional<LabelRemap> seg_label_remap;
  int crop = 256;
  bool hflip = true;
  int max_consecutive_skips = 5;

  void validate() const;
};

TrainConfig train_config(const RunConfig& cfg);

// Replay buffer of previously generated images, mixed into discriminator
// updates. Queries are per image: while filling, the new image is stored and
// returned; once full, with probability 0.5 a stored image is returned (and
// replaced by the new one), otherwise the new image passes through.
class ImagePool {
 public:
  ImagePool() = default;
  explicit ImagePool(int capacity) : capacity_(capacity) {}

  Tensor query(const Tensor& fakes, Rng& rng);  // [N,C,H,W] -> [N,C,H,W]

  int capacity() const { return capacity_; }
  std::vector<Tensor>& buffer() { return buffer_; }
  const std::vector<Tensor>& buffer() const { return buffer_; }

 private:
  int capacity_ = 0;
  std::vector<Tensor> buffer_;  // stored as [C,H,W]
};

struct TrainState {
  std::unique_ptr<Generator> g_ab, g_ba;
  std::unique_ptr<Discriminator> d_a, d_b;
  std::unique_ptr<Segmenter> s_a, s_b;
  nn::Adam opt_g, opt_d, opt_s;
  ImagePool pool_fake_a, pool_fake_b;

  int epoch = 0;           // completed epochs
  std::int64_t step = 0;   // executed steps
  double val_acc_a = 0.0;  // latest segmenter validation pixel accuracy
  double val_acc_b = 0.0;
  bool warmup_latched_off = false;

  Rng rng_data{0}, rng_aug{0}, rng_dropout{0}, rng_pool{0};

  std::vector<nn::Param*> generator_params();
  std::vector<nn::Param*> discriminator_params();
  std::vector<nn::Param*> segmenter_params();
};

TrainState init_train_state(const RunConfig& cfg);

struct PairedBatch {
  std::vector<LabeledSample> a, b;
};

struct StepDiagnostics {
  bool capture_g_grads = false;            // in
  std::vector<float> g_grads;              // out: flattened G_AB+G_BA gradients
  double seg_gen_path_grad_norm = 0.0;     // out: ||dL/dS|| from translated images
  bool warmup_was_active = false;          // out
  bool seg_ref_gt_ab = true;               // out: which reference Eq. variant ran
  bool seg_ref_gt_ba = true;
};

struct NonFiniteLossError : std::runtime_error {
  explicit NonFiniteLossError(const std::string& term)
      : std::runtime_error("non-finite loss term: " + term), term_name(term) {}
  std::string term_name;
};

// One optimization step over a pair of (possibly dropout-masked) batches:
// gradients for the generators (with discriminators and segmenters frozen),
// then the discriminators on real vs pool-mixed fakes, then the segmenters
// (ground-truth only during warmup). All gradients are computed before any
// parameter moves, so a non-finite loss aborts the step with every network
// still at its pre-step values.
LossRecord training_step(TrainState& state, const PairedBatch& ab, const PairedBatch& ba,
                         const TrainConfig& cfg, double lr, StepDiagnostics* diag = nullptr);

// fixed_epochs: active while epoch < N. threshold: active until both
// segmenters' validation pixel accuracy reached tau, then latched off for
// the rest of the run (the trainer sets warmup_latched_off when evals land).
bool warmup_active(const TrainState& state, const TrainConfig& cfg);

// Constant for the first half of training, then linear decay to zero.
double lr_for_epoch(const TrainConfig& cfg, int epoch);

// Segmenter validation pixel accuracy (eval mode, IGNORE pixels excluded).
double segmenter_pixel_accuracy(Segmenter& s, const std::vector<LabeledSample>& samples);

struct TrainRunResult {
  std::string run_dir;
  MetricsReport test_ab;  // A->B translated mIoU on the test split (in-run segmenter proxy)
  MetricsReport test_ba;
};

// Full training run: writes config snapshot, losses.csv, checkpoints/,
// eval/*.json and samples/ grids into run_dir. Deterministic given the seed.
TrainRunResult train(const RunConfig& cfg, const std::string& run_dir, bool resume);

}  // namespace semgan
