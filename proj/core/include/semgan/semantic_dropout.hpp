#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "semgan/core_types.hpp"
#include "semgan/rng.hpp"

namespace semgan {

struct DropoutConfig {
  double p = 0.0;  // probability of masking a sample pair
  std::uint64_t rng_seed = 0;

  void validate() const;
};

// Sorted distinct non-IGNORE labels present in the mask.
std::vector<int> get_labels(const SegMask& mask);

// Binary mask: 1 where the mask equals `label`, else 0. The label must be
// present in the mask.
SegMask get_mask(int label, const SegMask& mask);

struct DropoutResult {
  LabeledSample a;
  LabeledSample b;
  bool applied = false;
  std::optional<int> chosen_label;
};

// Stochastic single-class masking of an unpaired sample pair. With
// probability p, a class common to both masks is drawn uniformly and
// everything else is blanked: image pixels outside the class become 0.0 and
// mask pixels become IGNORE, so they drop out of the segmentation loss.
// Degenerate cases (p miss, empty label intersection) return the inputs
// unchanged. p == 0 consumes no randomness, making it an exact no-op on the
// rng stream as well as on the samples.
DropoutResult apply_semantic_dropout(const LabeledSample& a, const LabeledSample& b,
                                     const DropoutConfig& cfg, Rng& rng);

// The unconditional masking core: draws only the class choice (no
// probability gate). Returns unchanged inputs when the label sets do not
// intersect. The trainer uses this with its own per-direction gate.
DropoutResult mask_common_label(const LabeledSample& a, const LabeledSample& b, Rng& rng);

}  // namespace semgan
