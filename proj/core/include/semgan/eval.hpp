#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "semgan/core_types.hpp"
#include "semgan/data.hpp"
#include "semgan/models.hpp"

namespace semgan {

// Rows are ground truth, columns are predictions; IGNORE pixels never score.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<std::int64_t> counts;  // K*K, row-major

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int k)
      : num_classes(k), counts(static_cast<std::size_t>(k) * k, 0) {}

  std::int64_t& at(int gt, int pred) {
    return counts[static_cast<std::size_t>(gt) * num_classes + pred];
  }
  std::int64_t at(int gt, int pred) const {
    return counts[static_cast<std::size_t>(gt) * num_classes + pred];
  }
  std::int64_t total() const;
  void merge(const ConfusionMatrix& other);
};

void accumulate(ConfusionMatrix& cm, const SegMask& pred, const SegMask& gt);

struct PerClassIoU {
  int class_id = 0;
  std::string name;
  double iou = 0.0;   // percent
  bool present = false;  // row + col > 0
};

// All values in percent.
struct MetricsReport {
  double overall_acc = 0.0;
  double avg_class_acc = 0.0;
  double miou = 0.0;
  double fw_acc = 0.0;  // frequency-weighted IoU
  std::vector<PerClassIoU> per_class_iou;

  std::string to_json(int indent = 2) const;
  static MetricsReport from_json(const std::string& text);
};

// overall      = trace / total
// avg class    = mean of cm[k,k]/row_k over classes with row_k > 0
// IoU_k        = cm[k,k] / (row_k + col_k - cm[k,k]); classes with
//                row_k + col_k == 0 are excluded from the mIoU average
// fw_acc       = sum_k (row_k/total) * IoU_k
MetricsReport metrics_from_confusion(const ConfusionMatrix& cm,
                                     const std::vector<std::string>& class_names = {});

// Translated-image segmentation score: every sample of `source` is
// center-cropped, translated through `g`, segmented by the frozen
// `eval_segmenter` (trained on the target domain), and the argmax prediction
// is scored against the SOURCE ground-truth mask.
MetricsReport evaluate_translation(Generator& g, Segmenter& eval_segmenter,
                                   const Dataset& source, const ClassTaxonomy& taxonomy,
                                   int crop);

// Same protocol with precomputed samples (used for val-split monitoring).
MetricsReport evaluate_translation_samples(Generator& g, Segmenter& eval_segmenter,
                                           const std::vector<LabeledSample>& samples,
                                           const ClassTaxonomy& taxonomy);

}  // namespace semgan
