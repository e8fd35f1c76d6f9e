#include "semgan/eval.hpp"

#include <json.hpp>

#include <stdexcept>

namespace semgan {

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (std::int64_t v : counts) t += v;
  return t;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes != num_classes) {
    throw std::invalid_argument("confusion: cannot merge different K");
  }
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

void accumulate(ConfusionMatrix& cm, const SegMask& pred, const SegMask& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw std::invalid_argument("confusion: pred and gt shapes differ");
  }
  pred.validate(cm.num_classes);
  gt.validate(cm.num_classes);
  for (std::size_t p = 0; p < gt.labels.size(); ++p) {
    const std::uint8_t g = gt.labels[p];
    if (g == kIgnoreLabel) continue;
    const std::uint8_t q = pred.labels[p];
    if (q == kIgnoreLabel) {
      throw std::invalid_argument("confusion: IGNORE is not a valid prediction");
    }
    ++cm.at(g, q);
  }
}

MetricsReport metrics_from_confusion(const ConfusionMatrix& cm,
                                     const std::vector<std::string>& class_names) {
  const int k = cm.num_classes;
  const std::int64_t total = cm.total();
  if (k <= 0 || total <= 0) {
    throw std::invalid_argument("metrics: empty confusion matrix");
  }
  std::vector<std::int64_t> row(static_cast<std::size_t>(k), 0);
  std::vector<std::int64_t> col(static_cast<std::size_t>(k), 0);
  std::int64_t trace = 0;
  for (int g = 0; g < k; ++g) {
    for (int p = 0; p < k; ++p) {
      row[static_cast<std::size_t>(g)] += cm.at(g, p);
      col[static_cast<std::size_t>(p)] += cm.at(g, p);
    }
    trace += cm.at(g, g);
  }
  MetricsReport rep;
  rep.overall_acc = 100.0 * static_cast<double>(trace) / static_cast<double>(total);
  double acc_sum = 0.0;
  int acc_n = 0;
  double iou_sum = 0.0;
  int iou_n = 0;
  double fw = 0.0;
  for (int c = 0; c < k; ++c) {
    PerClassIoU entry;
    entry.class_id = c;
    entry.name = c < static_cast<int>(class_names.size()) ? class_names[static_cast<std::size_t>(c)]
                                                          : "class_" + std::to_string(c);
    const std::int64_t r = row[static_cast<std::size_t>(c)];
    const std::int64_t cl = col[static_cast<std::size_t>(c)];
    const std::int64_t tp = cm.at(c, c);
    if (r > 0) {
      acc_sum += static_cast<double>(tp) / static_cast<double>(r);
      ++acc_n;
    }
    const std::int64_t denom = r + cl - tp;
    if (denom > 0) {
      const double iou = static_cast<double>(tp) / static_cast<double>(denom);
      entry.present = true;
      entry.iou = 100.0 * iou;
      iou_sum += iou;
      ++iou_n;
      fw += (static_cast<double>(r) / static_cast<double>(total)) * iou;
    }
    rep.per_class_iou.push_back(std::move(entry));
  }
  rep.avg_class_acc = acc_n > 0 ? 100.0 * acc_sum / acc_n : 0.0;
  rep.miou = iou_n > 0 ? 100.0 * iou_sum / iou_n : 0.0;
  rep.fw_acc = 100.0 * fw;
  return rep;
}

std::string MetricsReport::to_json(int indent) const {
  nlohmann::json j;
  j["overall_acc"] = overall_acc;
  j["avg_class_acc"] = avg_class_acc;
  j["miou"] = miou;
  j["fw_acc"] = fw_acc;
  j["per_class_iou"] = nlohmann::json::array();
  for (const auto& e : per_class_iou) {
    nlohmann::json row;
    row["class"] = e.class_id;
    row["name"] = e.name;
    if (e.present) {
      row["iou"] = e.iou;
    } else {
      row["iou"] = nullptr;
    }
    j["per_class_iou"].push_back(row);
  }
  return j.dump(indent);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  MetricsReport rep;
  rep.overall_acc = j.at("overall_acc").get<double>();
  rep.avg_class_acc = j.at("avg_class_acc").get<double>();
  rep.miou = j.at("miou").get<double>();
  rep.fw_acc = j.at("fw_acc").get<double>();
  for (const auto& row : j.at("per_class_iou")) {
    PerClassIoU e;
    e.class_id = row.at("class").get<int>();
    e.name = row.at("name").get<std::string>();
    if (!row.at("iou").is_null()) {
      e.present = true;
      e.iou = row.at("iou").get<double>();
    }
    rep.per_class_iou.push_back(std::move(e));
  }
  return rep;
}

MetricsReport evaluate_translation_samples(Generator& g, Segmenter& eval_segmenter,
                                           const std::vector<LabeledSample>& samples,
                                           const ClassTaxonomy& taxonomy) {
  if (eval_segmenter.cfg().num_classes != taxonomy.num_classes) {
    throw std::invalid_argument("evaluate: segmenter K does not match taxonomy K");
  }
  ConfusionMatrix cm(taxonomy.num_classes);
  for (const LabeledSample& s : samples) {
    const Image translated = translate(g, s.image);
    const LogitMap logits = segment(eval_segmenter, translated);
    accumulate(cm, logits.argmax(), s.mask);
  }
  return metrics_from_confusion(cm, taxonomy.names);
}

MetricsReport evaluate_translation(Generator& g, Segmenter& eval_segmenter,
                                   const Dataset& source, const ClassTaxonomy& taxonomy,
                                   int crop) {
  if (source.empty()) throw std::invalid_argument("evaluate: empty source dataset");
  Rng unused(0);
  std::vector<LabeledSample> samples;
  samples.reserve(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    samples.push_back(augment(source.get(i), AugmentMode::kEval, crop, false, unused));
  }
  return evaluate_translation_samples(g, eval_segmenter, samples, taxonomy);
}

}  // namespace semgan
