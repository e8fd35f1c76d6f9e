#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semgan/tensor.hpp"

namespace semgan {

// Sentinel label excluded from every loss and metric. Matches the common
// indexed-PNG convention of reserving 255 for "void".
inline constexpr int kIgnoreLabel = 255;

// Tolerance on the nominal [-1, 1] pixel range.
inline constexpr float kImageRangeEps = 1e-4f;

enum class Domain : std::uint8_t { kA = 0, kB = 1 };

inline const char* domain_name(Domain d) { return d == Domain::kA ? "A" : "B"; }

// Normalized RGB image, stored CHW with C == 3 and values in [-1, 1].
// Height and width must be multiples of 4 (network down/upsampling).
struct Image {
  Tensor data;  // shape [3, H, W]

  Image() = default;
  explicit Image(Tensor t);
  Image(int height, int width) : data(Tensor({3, height, width})) {}

  int height() const { return data.dim(1); }
  int width() const { return data.dim(2); }

  // Throws std::invalid_argument when an invariant is broken.
  void validate() const;
};

// Per-pixel class labels in {0..K-1} plus the IGNORE sentinel. Also doubles
// as the carrier for binary masks (values in {0, 1}).
struct SegMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;  // row-major [H, W]

  SegMask() = default;
  SegMask(int h, int w, std::uint8_t fill_value = 0)
      : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill_value) {}

  std::uint8_t& at(int r, int c) { return labels[static_cast<std::size_t>(r) * width + c]; }
  std::uint8_t at(int r, int c) const { return labels[static_cast<std::size_t>(r) * width + c]; }
  std::size_t size() const { return labels.size(); }

  // Every non-IGNORE label must be < num_classes.
  void validate(int num_classes) const;
};

// Unnormalized per-class scores, shape [K, H, W].
struct LogitMap {
  Tensor scores;

  LogitMap() = default;
  explicit LogitMap(Tensor t);

  int num_classes() const { return scores.dim(0); }
  int height() const { return scores.dim(1); }
  int width() const { return scores.dim(2); }

  // Argmax over the class axis; never produces IGNORE.
  SegMask argmax() const;

  void validate() const;
};

// Shared class vocabulary plus the per-dataset raw-label remap. The remap
// must be total over the raw labels that actually occur in a dataset;
// unknown raw labels fault loudly at load time.
struct ClassTaxonomy {
  int num_classes = 0;
  std::vector<std::string> names;           // size == num_classes
  std::map<int, int> remap;                 // raw label -> {0..K-1} or kIgnoreLabel

  // Identity taxonomy over K classes with generated names; raw 255 -> IGNORE.
  static ClassTaxonomy identity(int num_classes);

  void validate() const;

  // Returns mapped label; throws naming the label when no remap row exists.
  int map_label(int raw) const;

  // CSV with columns raw_label,mapped_label,name. IGNORE rows use 255.
  static ClassTaxonomy load_csv(const std::string& path);
  void save_csv(const std::string& path) const;
};

struct LabeledSample {
  Image image;
  SegMask mask;
  Domain domain = Domain::kA;

  void validate(int num_classes) const;
};

// Per-pixel product with a binary mask, broadcast over channels. Masked-out
// pixels become 0.0, the mid-gray of the normalized range.
Image apply_mask(const Image& image, const SegMask& binary_mask);

// One-hot encoding [K, H, W]; IGNORE pixels are all-zero across channels.
Tensor one_hot(const SegMask& mask, int num_classes);

}  // namespace semgan
