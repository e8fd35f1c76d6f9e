#pragma once

#include <optional>
#include <string>
#include <vector>

#include "semgan/eval.hpp"
#include "semgan/run_config.hpp"
#include "semgan/trainer.hpp"

namespace semgan {

// ---- Standalone segmenter training (evaluation networks) ----

struct SegTrainOptions {
  std::string data_root;
  std::string taxonomy_path;  // empty -> identity taxonomy over num_classes
  int num_classes = 5;
  Domain domain = Domain::kA;
  std::string split_mode = "stems";  // or "ratios"
  std::uint64_t split_seed = 0;
  int epochs = 40;
  int batch_size = 4;
  double lr = 2e-4;
  int base_width = 32;
  SegPreset preset = SegPreset::kDesk;
  int crop = 64;
  bool hflip = true;
  std::uint64_t seed = 7;
};

struct SegTrainReport {
  double val_pixel_acc = 0.0;
  MetricsReport test_report;  // segmenter quality on its own test split
  std::string checkpoint_path;
};

SegTrainReport train_segmenter(const SegTrainOptions& opt, const std::string& out_ckpt);

// ---- Checkpoint-driven helpers behind the CLI ----

// Loads a full GAN training state from a checkpoint (the embedded config
// snapshot rebuilds the network shapes).
struct LoadedGan {
  RunConfig config;
  TrainState state;
};
LoadedGan load_gan(const std::string& ckpt_path);

// Translates every PNG in input_dir through the requested direction,
// writing same-stem PNGs into out_dir. Returns the number of images.
int translate_directory(const std::string& ckpt_path, const std::string& input_dir,
                        const std::string& direction, const std::string& out_dir);

// §-style evaluation: frozen eval segmenter scores translated test images
// against source ground truth.
MetricsReport evaluate_checkpoint(const std::string& gan_ckpt, const std::string& seg_ckpt,
                                  const std::string& dataset_root,
                                  const std::string& taxonomy_path, const std::string& direction,
                                  std::optional<int> crop_override = std::nullopt);

// ---- Ablation over loss configurations ----

struct AblationOptions {
  RunConfig base;                     // must have lambda_seg > 0 and dropout p > 0
  std::vector<std::string> variants;  // subset of {cycle, seg, seg_sm}
  int seeds = 3;
  std::string out_dir;
  int eval_seg_epochs = 40;
  int eval_seg_batch = 4;
};

struct AblationCell {
  std::string variant;
  std::vector<double> miou_ab, miou_ba;  // per seed
  std::vector<double> acc_ab, acc_ba;    // overall accuracy per seed
  std::vector<bool> ok;                  // per-seed run success
  bool failed() const;
  double mean_miou(const std::string& direction) const;
  double sd_miou(const std::string& direction) const;
  double mean_acc(const std::string& direction) const;
};

struct AblationReport {
  std::vector<AblationCell> cells;
  bool any_failure = false;

  const AblationCell* cell(const std::string& variant) const;
  // mean mIoU ordering seg_sm >= seg >= cycle in each direction, over the
  // variants that were actually run.
  bool ordering_holds() const;
  std::string table_text() const;
  std::string table_csv() const;
};

// Trains the frozen eval segmenters (cached in out_dir), then one GAN run
// per variant and seed; each run is evaluated in both directions. Individual
// run failures are recorded, not fatal. Completed runs are detected and
// reused, so an interrupted ablation continues where it stopped.
AblationReport run_ablation(const AblationOptions& opt);

// Variant overlays: cycle disables the seg loss and dropout; seg disables
// dropout only; seg_sm is the base config. The seed offset is added on top
// of the base seed.
RunConfig ablation_variant_config(const RunConfig& base, const std::string& variant,
                                  int seed_offset);

}  // namespace semgan
