#include "semgan/losses.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace semgan {

void LossWeights::validate() const {
  if (lambda_cycle < 0 || lambda_seg < 0 || lambda_idt < 0) {
    throw std::invalid_argument("loss weights must be >= 0");
  }
}

bool LossRecord::all_finite() const {
  for (double v : {g_adv_ab, g_adv_ba, d_a, d_b, cycle, identity, seg_ab, seg_ba, total_g}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string LossRecord::csv_header() {
  return "step,g_adv_ab,g_adv_ba,d_a,d_b,cycle,identity,seg_ab,seg_ba,total_g";
}

std::string LossRecord::csv_row() const {
  char buf[320];
  std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                static_cast<long long>(step), g_adv_ab, g_adv_ba, d_a, d_b, cycle, identity,
                seg_ab, seg_ba, total_g);
  return buf;
}

LossRecord LossRecord::from_csv_row(const std::string& row) {
  LossRecord r;
  std::istringstream is(row);
  std::string cell;
  auto next = [&]() -> double {
    if (!std::getline(is, cell, ',')) throw std::runtime_error("loss csv: short row");
    return std::stod(cell);
  };
  r.step = static_cast<std::int64_t>(next());
  r.g_adv_ab = next();
  r.g_adv_ba = next();
  r.d_a = next();
  r.d_b = next();
  r.cycle = next();
  r.identity = next();
  r.seg_ab = next();
  r.seg_ba = next();
  r.total_g = next();
  return r;
}

void validate_label_remap(const LabelRemap& remap, int num_classes) {
  if (remap.size() != static_cast<std::size_t>(num_classes)) {
    throw std::invalid_argument("label remap: expected " + std::to_string(num_classes) +
                                " entries, got " + std::to_string(remap.size()));
  }
  std::vector<bool> seen(static_cast<std::size_t>(num_classes), false);
  for (int v : remap) {
    if (v < 0 || v >= num_classes || seen[static_cast<std::size_t>(v)]) {
      throw std::invalid_argument("label remap: not a bijection on {0.." +
                                  std::to_string(num_classes - 1) + "}");
    }
    seen[static_cast<std::size_t>(v)] = true;
  }
}

double total_generator_loss(const LossRecord& terms, const LossWeights& weights) {
  weights.validate();
  const std::pair<const char*, double> components[] = {
      {"g_adv_ab", terms.g_adv_ab}, {"g_adv_ba", terms.g_adv_ba}, {"cycle", terms.cycle},
      {"identity", terms.identity}, {"seg_ab", terms.seg_ab},     {"seg_ba", terms.seg_ba},
  };
  for (const auto& [name, value] : components) {
    if (!std::isfinite(value)) {
      throw std::runtime_error(std::string("total_generator_loss: non-finite term ") + name);
    }
  }
  return terms.g_adv_ab + terms.g_adv_ba + weights.lambda_cycle * terms.cycle +
         weights.lambda_seg * (terms.seg_ab + terms.seg_ba) +
         weights.lambda_idt * terms.identity;
}

}  // namespace semgan
