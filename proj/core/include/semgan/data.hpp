#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "semgan/core_types.hpp"
#include "semgan/rng.hpp"

namespace semgan {

struct ResizeSpec {
  int height = 0;  // 0 disables resizing
  int width = 0;
  bool enabled() const { return height > 0 && width > 0; }
};

// Lazily-decoded image/mask dataset rooted at <root>/{images,masks}/<stem>.png.
// Masks are remapped through the taxonomy on access; images may be resized
// (bilinear) before cropping, masks with nearest-neighbor so labels are
// never invented.
class Dataset {
 public:
  Dataset() = default;

  static Dataset load(const std::string& root, ClassTaxonomy taxonomy, Domain domain,
                      ResizeSpec resize = {});

  std::size_t size() const { return stems_.size(); }
  bool empty() const { return stems_.empty(); }
  const std::vector<std::string>& stems() const { return stems_; }
  const std::string& stem(std::size_t i) const { return stems_.at(i); }
  const std::string& root() const { return root_; }
  const ClassTaxonomy& taxonomy() const { return taxonomy_; }
  Domain domain() const { return domain_; }

  LabeledSample get(std::size_t i) const;
  std::string image_path(std::size_t i) const;
  std::string mask_path(std::size_t i) const;

  Dataset subset(const std::vector<std::size_t>& indices) const;

 private:
  std::string root_;
  std::vector<std::string> stems_;
  ClassTaxonomy taxonomy_;
  Domain domain_ = Domain::kA;
  ResizeSpec resize_;
};

struct SplitRatios {
  double train = 0.85;
  double val = 0.05;
  double test = 0.10;
};

struct DatasetSplits {
  Dataset train, val, test;
};

// Seed-deterministic disjoint partition. Sizes are floor(n*val), floor(n*test)
// with the remainder going to train. Requires at least 3 samples.
DatasetSplits split_dataset(const Dataset& ds, SplitRatios ratios, std::uint64_t seed);

// Partition by stem prefix train_/val_/test_ (the layout the toy generator
// emits, where per-split counts are chosen up front).
DatasetSplits split_dataset_by_stems(const Dataset& ds);

enum class AugmentMode { kTrain, kEval };

// Train: random crop + optional horizontal flip (p=0.5), applied jointly to
// image and mask. Eval: deterministic center crop, no flip.
LabeledSample augment(const LabeledSample& sample, AugmentMode mode, int crop, bool hflip,
                      Rng& rng);

// Independent uniform draws (with replacement) from each dataset.
std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> sample_unpaired_batch(
    const Dataset& ds_a, const Dataset& ds_b, int batch_size, Rng& rng);

// Procedural two-domain dataset: layered scenes of background, a tilted
// ground region, a horizontal sky band, and 1-4 elliptic blobs. Domain B has
// its own palette plus stronger additive noise. With `ambiguity` on, the
// sky-band and blob-1 palettes swap between the domains, so a translator
// that merely matches color statistics is rewarded for exchanging the two
// classes while cycle consistency stays satisfied.
struct ToyWorldCfg {
  int image_size = 64;
  int num_classes = 5;  // background, ground, sky_band, blob_1, blob_2
  int count_train = 200;
  int count_val = 20;
  int count_test = 40;
  bool ambiguity = false;
  std::uint64_t seed = 0;

  void validate() const;
  int total_count() const { return count_train + count_val + count_test; }
};

std::vector<std::string> toy_class_names(int num_classes);

// Writes <out_root>/domain_a and <out_root>/domain_b (each in Dataset
// layout, with a taxonomy.csv), plus a manifest.json recording cfg and seed.
// Refuses to touch a non-empty out_root unless force is set.
void generate_toy_domains(const ToyWorldCfg& cfg, const std::string& out_root, bool force);

// Decoding helpers shared with the CLI.
Image image_from_rgb8(const std::vector<std::uint8_t>& rgb, int height, int width);
std::vector<std::uint8_t> rgb8_from_image(const Image& image);

}  // namespace semgan
