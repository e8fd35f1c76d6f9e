#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "semgan/core_types.hpp"
#include "semgan/tensor.hpp"

namespace semgan {

enum class AdvMode { kBce, kLsgan };

inline const char* adv_mode_name(AdvMode m) { return m == AdvMode::kBce ? "bce" : "lsgan"; }

// Probabilities fed to log() are clamped to [kBceEps, 1 - kBceEps].
inline constexpr double kBceEps = 1e-7;

struct LossWeights {
  double lambda_cycle = 10.0;  // lambda1
  double lambda_seg = 1.0;     // lambda2
  double lambda_idt = 5.0;
  AdvMode adv_mode = AdvMode::kLsgan;

  void validate() const;
};

// Per-step scalar terms. `cycle` and `identity` hold the sum over both
// translation directions; `total_g` is the weighted generator objective.
struct LossRecord {
  std::int64_t step = 0;
  double g_adv_ab = 0.0;
  double g_adv_ba = 0.0;
  double d_a = 0.0;
  double d_b = 0.0;
  double cycle = 0.0;
  double identity = 0.0;
  double seg_ab = 0.0;
  double seg_ba = 0.0;
  double total_g = 0.0;

  bool all_finite() const;
  static std::string csv_header();
  std::string csv_row() const;
  // Parses a row previously produced by csv_row().
  static LossRecord from_csv_row(const std::string& row);
};

namespace detail {

template <typename T>
T clamp01(T v) {
  const T lo = static_cast<T>(kBceEps);
  const T hi = static_cast<T>(1.0 - kBceEps);
  return v < lo ? lo : (v > hi ? hi : v);
}

}  // namespace detail

// Discriminator objective on real and generated score maps. The two means
// are taken independently, so real and fake may differ in element count.
//   bce:   -mean(log real) - mean(log(1 - fake))
//   lsgan: mean((real - 1)^2) + mean(fake^2)
template <typename T>
T adversarial_d_loss_grad(const TensorT<T>& real, const TensorT<T>& fake, AdvMode mode,
                          TensorT<T>* d_real, TensorT<T>* d_fake) {
  if (real.size() == 0 || fake.size() == 0) {
    throw std::invalid_argument("adversarial_d_loss: empty score tensor");
  }
  const T inv_nr = T(1) / static_cast<T>(real.size());
  const T inv_nf = T(1) / static_cast<T>(fake.size());
  if (d_real) *d_real = TensorT<T>(real.shape());
  if (d_fake) *d_fake = TensorT<T>(fake.shape());
  T loss = T(0);
  if (mode == AdvMode::kBce) {
    for (std::size_t i = 0; i < real.size(); ++i) {
      const T r = detail::clamp01(real[i]);
      loss -= std::log(r) * inv_nr;
      if (d_real && real[i] > kBceEps && real[i] < T(1) - kBceEps) {
        (*d_real)[i] = -inv_nr / r;
      }
    }
    for (std::size_t i = 0; i < fake.size(); ++i) {
      const T f = detail::clamp01(fake[i]);
      loss -= std::log(T(1) - f) * inv_nf;
      if (d_fake && fake[i] > kBceEps && fake[i] < T(1) - kBceEps) {
        (*d_fake)[i] = inv_nf / (T(1) - f);
      }
    }
  } else {
    for (std::size_t i = 0; i < real.size(); ++i) {
      const T e = real[i] - T(1);
      loss += e * e * inv_nr;
      if (d_real) (*d_real)[i] = T(2) * e * inv_nr;
    }
    for (std::size_t i = 0; i < fake.size(); ++i) {
      loss += fake[i] * fake[i] * inv_nf;
      if (d_fake) (*d_fake)[i] = T(2) * fake[i] * inv_nf;
    }
  }
  return loss;
}

template <typename T>
T adversarial_d_loss(const TensorT<T>& real, const TensorT<T>& fake, AdvMode mode) {
  return adversarial_d_loss_grad<T>(real, fake, mode, nullptr, nullptr);
}

// The two halves of the discriminator objective are separable, which lets
// the trainer run forward/backward on real and pooled-fake batches one after
// the other. adversarial_d_loss == real term + fake term.
template <typename T>
T adversarial_d_real_term_grad(const TensorT<T>& real, AdvMode mode, TensorT<T>* d_real) {
  if (real.size() == 0) throw std::invalid_argument("adversarial_d_loss: empty score tensor");
  const T inv_n = T(1) / static_cast<T>(real.size());
  if (d_real) *d_real = TensorT<T>(real.shape());
  T loss = T(0);
  if (mode == AdvMode::kBce) {
    for (std::size_t i = 0; i < real.size(); ++i) {
      const T r = detail::clamp01(real[i]);
      loss -= std::log(r) * inv_n;
      if (d_real && real[i] > kBceEps && real[i] < T(1) - kBceEps) (*d_real)[i] = -inv_n / r;
    }
  } else {
    for (std::size_t i = 0; i < real.size(); ++i) {
      const T e = real[i] - T(1);
      loss += e * e * inv_n;
      if (d_real) (*d_real)[i] = T(2) * e * inv_n;
    }
  }
  return loss;
}

template <typename T>
T adversarial_d_fake_term_grad(const TensorT<T>& fake, AdvMode mode, TensorT<T>* d_fake) {
  if (fake.size() == 0) throw std::invalid_argument("adversarial_d_loss: empty score tensor");
  const T inv_n = T(1) / static_cast<T>(fake.size());
  if (d_fake) *d_fake = TensorT<T>(fake.shape());
  T loss = T(0);
  if (mode == AdvMode::kBce) {
    for (std::size_t i = 0; i < fake.size(); ++i) {
      const T f = detail::clamp01(fake[i]);
      loss -= std::log(T(1) - f) * inv_n;
      if (d_fake && fake[i] > kBceEps && fake[i] < T(1) - kBceEps) {
        (*d_fake)[i] = inv_n / (T(1) - f);
      }
    }
  } else {
    for (std::size_t i = 0; i < fake.size(); ++i) {
      loss += fake[i] * fake[i] * inv_n;
      if (d_fake) (*d_fake)[i] = T(2) * fake[i] * inv_n;
    }
  }
  return loss;
}

// Generator objective on fresh fake scores. bce uses the non-saturating
// surrogate -mean(log fake); lsgan uses mean((fake - 1)^2).
template <typename T>
T adversarial_g_loss_grad(const TensorT<T>& fake, AdvMode mode, TensorT<T>* d_fake) {
  if (fake.size() == 0) throw std::invalid_argument("adversarial_g_loss: empty score tensor");
  const T inv_n = T(1) / static_cast<T>(fake.size());
  if (d_fake) *d_fake = TensorT<T>(fake.shape());
  T loss = T(0);
  if (mode == AdvMode::kBce) {
    for (std::size_t i = 0; i < fake.size(); ++i) {
      const T f = detail::clamp01(fake[i]);
      loss -= std::log(f) * inv_n;
      if (d_fake && fake[i] > kBceEps && fake[i] < T(1) - kBceEps) {
        (*d_fake)[i] = -inv_n / f;
      }
    }
  } else {
    for (std::size_t i = 0; i < fake.size(); ++i) {
      const T e = fake[i] - T(1);
      loss += e * e * inv_n;
      if (d_fake) (*d_fake)[i] = T(2) * e * inv_n;
    }
  }
  return loss;
}

template <typename T>
T adversarial_g_loss(const TensorT<T>& fake, AdvMode mode) {
  return adversarial_g_loss_grad<T>(fake, mode, nullptr);
}

// Mean absolute difference over all elements. Gradient is reported w.r.t.
// the second argument; the gradient w.r.t. the first is its negation.
template <typename T>
T l1_mean_loss_grad(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>* d_b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("l1 loss: shape mismatch " + a.shape_str() + " vs " +
                                b.shape_str());
  }
  if (a.size() == 0) throw std::invalid_argument("l1 loss: empty input");
  const T inv_n = T(1) / static_cast<T>(a.size());
  if (d_b) *d_b = TensorT<T>(b.shape());
  T loss = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T d = b[i] - a[i];
    loss += std::abs(d) * inv_n;
    if (d_b) (*d_b)[i] = (d > T(0) ? inv_n : (d < T(0) ? -inv_n : T(0)));
  }
  return loss;
}

template <typename T>
T cycle_loss_grad(const TensorT<T>& x, const TensorT<T>& x_roundtrip, TensorT<T>* d_roundtrip) {
  return l1_mean_loss_grad(x, x_roundtrip, d_roundtrip);
}

template <typename T>
T cycle_loss(const TensorT<T>& x, const TensorT<T>& x_roundtrip) {
  return l1_mean_loss_grad<T>(x, x_roundtrip, nullptr);
}

inline float cycle_loss(const Image& x, const Image& x_roundtrip) {
  return cycle_loss(x.data, x_roundtrip.data);
}

template <typename T>
T identity_loss_grad(const TensorT<T>& x, const TensorT<T>& g_same, TensorT<T>* d_g_same) {
  return l1_mean_loss_grad(x, g_same, d_g_same);
}

template <typename T>
T identity_loss(const TensorT<T>& x, const TensorT<T>& g_same) {
  return l1_mean_loss_grad<T>(x, g_same, nullptr);
}

inline float identity_loss(const Image& x, const Image& g_same) {
  return identity_loss(x.data, g_same.data);
}

// A bijection on {0..K-1}; entry i is the class that reference label i is
// rewritten to before comparison ("switch the labels" cross-class training).
using LabelRemap = std::vector<int>;

void validate_label_remap(const LabelRemap& remap, int num_classes);

template <typename T>
struct SegLossResult {
  T value = T(0);
  bool all_ignore = false;
  std::size_t scored_pixels = 0;
};

// Pixelwise softmax cross-entropy of `logits` [K, H, W] against `ref`,
// averaged over non-IGNORE pixels of the (possibly remapped) reference.
// Returns 0 with all_ignore=true when no pixel is scored.
template <typename T>
SegLossResult<T> seg_consistency_loss_grad(const TensorT<T>& logits, const SegMask& ref,
                                           const std::optional<LabelRemap>& remap,
                                           TensorT<T>* d_logits) {
  if (logits.ndim() != 3) throw std::invalid_argument("seg loss: logits must be [K, H, W]");
  const int k = logits.dim(0);
  const int h = logits.dim(1);
  const int w = logits.dim(2);
  if (ref.height != h || ref.width != w) {
    throw std::invalid_argument("seg loss: reference mask does not match logits H, W");
  }
  ref.validate(k);
  if (remap) validate_label_remap(*remap, k);
  if (d_logits) *d_logits = TensorT<T>(logits.shape());

  const std::size_t plane = static_cast<std::size_t>(h) * w;
  // First pass: count scored pixels so per-pixel gradients carry 1/M.
  std::size_t scored = 0;
  for (std::size_t p = 0; p < plane; ++p) {
    if (ref.labels[p] != kIgnoreLabel) ++scored;
  }
  SegLossResult<T> res;
  res.scored_pixels = scored;
  if (scored == 0) {
    res.all_ignore = true;
    return res;
  }
  const T inv_m = T(1) / static_cast<T>(scored);
  std::vector<T> probs(static_cast<std::size_t>(k));
  T total = T(0);
  for (std::size_t p = 0; p < plane; ++p) {
    const std::uint8_t raw_ref = ref.labels[p];
    if (raw_ref == kIgnoreLabel) continue;
    const int target = remap ? (*remap)[raw_ref] : raw_ref;
    T max_logit = logits[p];
    for (int c = 1; c < k; ++c) max_logit = std::max(max_logit, logits[c * plane + p]);
    T denom = T(0);
    for (int c = 0; c < k; ++c) {
      probs[static_cast<std::size_t>(c)] = std::exp(logits[c * plane + p] - max_logit);
      denom += probs[static_cast<std::size_t>(c)];
    }
    total += (std::log(denom) - (logits[static_cast<std::size_t>(target) * plane + p] - max_logit)) * inv_m;
    if (d_logits) {
      for (int c = 0; c < k; ++c) {
        T g = probs[static_cast<std::size_t>(c)] / denom;
        if (c == target) g -= T(1);
        (*d_logits)[static_cast<std::size_t>(c) * plane + p] = g * inv_m;
      }
    }
  }
  res.value = total;
  return res;
}

template <typename T>
SegLossResult<T> seg_consistency_loss(const TensorT<T>& logits, const SegMask& ref,
                                      const std::optional<LabelRemap>& remap = std::nullopt) {
  return seg_consistency_loss_grad<T>(logits, ref, remap, nullptr);
}

inline SegLossResult<float> seg_consistency_loss(const LogitMap& pred, const SegMask& ref,
                                                 const std::optional<LabelRemap>& remap =
                                                     std::nullopt) {
  return seg_consistency_loss<float>(pred.scores, ref, remap);
}

// Batched variant: the mean is taken over all scored pixels of the whole
// batch, so samples with more labeled pixels weigh proportionally more.
template <typename T>
SegLossResult<T> seg_consistency_loss_batch_grad(const TensorT<T>& logits /* [N,K,H,W] */,
                                                 const std::vector<SegMask>& refs,
                                                 const std::optional<LabelRemap>& remap,
                                                 TensorT<T>* d_logits) {
  if (logits.ndim() != 4) throw std::invalid_argument("seg loss: batch logits must be [N,K,H,W]");
  const int n = logits.dim(0);
  if (refs.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("seg loss: batch size mismatch");
  }
  const int k = logits.dim(1);
  const int h = logits.dim(2);
  const int w = logits.dim(3);
  if (remap) validate_label_remap(*remap, k);
  if (d_logits) *d_logits = TensorT<T>(logits.shape());

  std::size_t scored = 0;
  for (const SegMask& m : refs) {
    if (m.height != h || m.width != w) {
      throw std::invalid_argument("seg loss: reference mask does not match logits H, W");
    }
    m.validate(k);
    for (std::uint8_t v : m.labels) {
      if (v != kIgnoreLabel) ++scored;
    }
  }
  SegLossResult<T> res;
  res.scored_pixels = scored;
  if (scored == 0) {
    res.all_ignore = true;
    return res;
  }
  const T inv_m = T(1) / static_cast<T>(scored);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t sample = static_cast<std::size_t>(k) * plane;
  std::vector<T> probs(static_cast<std::size_t>(k));
  T total = T(0);
  for (int i = 0; i < n; ++i) {
    const T* base = logits.data() + i * sample;
    T* dbase = d_logits ? d_logits->data() + i * sample : nullptr;
    const SegMask& ref = refs[static_cast<std::size_t>(i)];
    for (std::size_t p = 0; p < plane; ++p) {
      const std::uint8_t raw_ref = ref.labels[p];
      if (raw_ref == kIgnoreLabel) continue;
      const int target = remap ? (*remap)[raw_ref] : raw_ref;
      T max_logit = base[p];
      for (int c = 1; c < k; ++c) max_logit = std::max(max_logit, base[c * plane + p]);
      T denom = T(0);
      for (int c = 0; c < k; ++c) {
        probs[static_cast<std::size_t>(c)] = std::exp(base[c * plane + p] - max_logit);
        denom += probs[static_cast<std::size_t>(c)];
      }
      total += (std::log(denom) - (base[static_cast<std::size_t>(target) * plane + p] - max_logit)) * inv_m;
      if (dbase) {
        for (int c = 0; c < k; ++c) {
          T g = probs[static_cast<std::size_t>(c)] / denom;
          if (c == target) g -= T(1);
          dbase[static_cast<std::size_t>(c) * plane + p] = g * inv_m;
        }
      }
    }
  }
  res.value = total;
  return res;
}

// Weighted generator objective:
//   g_adv_ab + g_adv_ba + lambda1*cycle + lambda2*(seg_ab + seg_ba)
//   + lambda_idt*identity
// Discriminator terms are excluded; they drive separate optimizers.
// Throws naming the offending term when a component is non-finite.
double total_generator_loss(const LossRecord& terms, const LossWeights& weights);

}  // namespace semgan
