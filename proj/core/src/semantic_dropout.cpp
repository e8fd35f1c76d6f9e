#include "semgan/semantic_dropout.hpp"

#include <algorithm>
#include <stdexcept>

namespace semgan {

void DropoutConfig::validate() const {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("dropout: p must be in [0, 1]");
}

std::vector<int> get_labels(const SegMask& mask) {
  bool present[256] = {};
  for (std::uint8_t v : mask.labels) present[v] = true;
  std::vector<int> out;
  for (int v = 0; v < 256; ++v) {
    if (present[v] && v != kIgnoreLabel) out.push_back(v);
  }
  return out;
}

SegMask get_mask(int label, const SegMask& mask) {
  SegMask out(mask.height, mask.width);
  bool found = false;
  for (std::size_t i = 0; i < mask.labels.size(); ++i) {
    if (mask.labels[i] == label) {
      out.labels[i] = 1;
      found = true;
    }
  }
  if (!found) {
    throw std::invalid_argument("get_mask: label " + std::to_string(label) +
                                " not present in mask");
  }
  return out;
}

namespace {

// Keeps the chosen class; everything else becomes (0.0 image, IGNORE mask).
LabeledSample mask_to_class(const LabeledSample& s, int label) {
  LabeledSample out;
  out.domain = s.domain;
  const SegMask keep = get_mask(label, s.mask);
  out.image = apply_mask(s.image, keep);
  out.mask = SegMask(s.mask.height, s.mask.width, kIgnoreLabel);
  for (std::size_t i = 0; i < keep.labels.size(); ++i) {
    if (keep.labels[i]) out.mask.labels[i] = static_cast<std::uint8_t>(label);
  }
  return out;
}

}  // namespace

DropoutResult mask_common_label(const LabeledSample& a, const LabeledSample& b, Rng& rng) {
  DropoutResult res{a, b, false, std::nullopt};
  const std::vector<int> labels_a = get_labels(a.mask);
  const std::vector<int> labels_b = get_labels(b.mask);
  std::vector<int> common;
  std::set_intersection(labels_a.begin(), labels_a.end(), labels_b.begin(), labels_b.end(),
                        std::back_inserter(common));
  if (common.empty()) return res;

  const int k = common[static_cast<std::size_t>(rng.uniform_int(
      static_cast<std::int64_t>(common.size())))];
  res.a = mask_to_class(a, k);
  res.b = mask_to_class(b, k);
  res.applied = true;
  res.chosen_label = k;
  return res;
}

DropoutResult apply_semantic_dropout(const LabeledSample& a, const LabeledSample& b,
                                     const DropoutConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.p == 0.0) return {a, b, false, std::nullopt};  // exact identity, no rng consumed
  if (rng.uniform() > cfg.p) return {a, b, false, std::nullopt};
  return mask_common_label(a, b, rng);
}

}  // namespace semgan
