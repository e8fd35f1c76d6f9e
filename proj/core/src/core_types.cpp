#include "semgan/core_types.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace semgan {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

}  // namespace

Image::Image(Tensor t) : data(std::move(t)) {
  if (data.ndim() != 3 || data.dim(0) != 3) {
    fail("image: expected shape [3, H, W], got " + data.shape_str());
  }
}

void Image::validate() const {
  if (data.ndim() != 3 || data.dim(0) != 3) {
    fail("image: expected shape [3, H, W], got " + data.shape_str());
  }
  if (height() % 4 != 0 || width() % 4 != 0) {
    fail("image: H and W must be multiples of 4, got " + std::to_string(height()) + "x" +
         std::to_string(width()));
  }
  if (!data.all_finite()) fail("image: non-finite pixel value");
  const float lo = data.min();
  const float hi = data.max();
  if (lo < -1.0f - kImageRangeEps || hi > 1.0f + kImageRangeEps) {
    fail("image: pixel range [" + std::to_string(lo) + ", " + std::to_string(hi) +
         "] exceeds [-1, 1]");
  }
}

void SegMask::validate(int num_classes) const {
  if (labels.size() != static_cast<std::size_t>(height) * width) {
    fail("mask: label buffer does not match H*W");
  }
  for (std::uint8_t v : labels) {
    if (v != kIgnoreLabel && v >= num_classes) {
      fail("mask: label " + std::to_string(int(v)) + " out of range for K=" +
           std::to_string(num_classes));
    }
  }
}

LogitMap::LogitMap(Tensor t) : scores(std::move(t)) {
  if (scores.ndim() != 3) fail("logits: expected shape [K, H, W]");
}

SegMask LogitMap::argmax() const {
  const int k = num_classes();
  const int h = height();
  const int w = width();
  SegMask out(h, w);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const float* base = scores.data();
  for (std::size_t p = 0; p < plane; ++p) {
    int best = 0;
    float best_v = base[p];
    for (int c = 1; c < k; ++c) {
      const float v = base[c * plane + p];
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    out.labels[p] = static_cast<std::uint8_t>(best);
  }
  return out;
}

void LogitMap::validate() const {
  if (scores.ndim() != 3) fail("logits: expected shape [K, H, W]");
  if (!scores.all_finite()) fail("logits: non-finite score");
}

ClassTaxonomy ClassTaxonomy::identity(int num_classes) {
  ClassTaxonomy t;
  t.num_classes = num_classes;
  for (int i = 0; i < num_classes; ++i) {
    t.names.push_back("class_" + std::to_string(i));
    t.remap[i] = i;
  }
  t.remap[kIgnoreLabel] = kIgnoreLabel;
  t.validate();
  return t;
}

void ClassTaxonomy::validate() const {
  if (num_classes < 2) fail("taxonomy: K must be >= 2");
  if (names.size() != static_cast<std::size_t>(num_classes)) {
    fail("taxonomy: expected " + std::to_string(num_classes) + " names, got " +
         std::to_string(names.size()));
  }
  for (const auto& [raw, mapped] : remap) {
    if (mapped != kIgnoreLabel && (mapped < 0 || mapped >= num_classes)) {
      fail("taxonomy: remap of raw label " + std::to_string(raw) + " lands outside {0.." +
           std::to_string(num_classes - 1) + "} u {IGNORE}");
    }
  }
}

int ClassTaxonomy::map_label(int raw) const {
  auto it = remap.find(raw);
  if (it == remap.end()) {
    fail("taxonomy: no remap row for raw label " + std::to_string(raw));
  }
  return it->second;
}

ClassTaxonomy ClassTaxonomy::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("taxonomy: cannot open " + path);
  ClassTaxonomy t;
  std::map<int, std::string> names_by_class;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (first && line.rfind("raw_label", 0) == 0) {
      first = false;
      continue;  // header
    }
    first = false;
    std::istringstream ls(line);
    std::string raw_s, mapped_s, name;
    if (!std::getline(ls, raw_s, ',') || !std::getline(ls, mapped_s, ',')) {
      throw std::runtime_error("taxonomy: malformed row '" + line + "' in " + path);
    }
    std::getline(ls, name);
    const int raw = std::stoi(raw_s);
    const int mapped = std::stoi(mapped_s);
    t.remap[raw] = mapped;
    if (mapped != kIgnoreLabel) {
      names_by_class[mapped] = name;
      t.num_classes = std::max(t.num_classes, mapped + 1);
    }
  }
  t.names.resize(t.num_classes);
  for (int i = 0; i < t.num_classes; ++i) {
    auto it = names_by_class.find(i);
    t.names[i] = it != names_by_class.end() && !it->second.empty()
                     ? it->second
                     : "class_" + std::to_string(i);
  }
  if (!t.remap.count(kIgnoreLabel)) t.remap[kIgnoreLabel] = kIgnoreLabel;
  t.validate();
  return t;
}

void ClassTaxonomy::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("taxonomy: cannot write " + path);
  out << "raw_label,mapped_label,name\n";
  for (const auto& [raw, mapped] : remap) {
    const std::string name =
        mapped == kIgnoreLabel ? "ignore" : names[static_cast<std::size_t>(mapped)];
    out << raw << "," << mapped << "," << name << "\n";
  }
}

void LabeledSample::validate(int num_classes) const {
  image.validate();
  mask.validate(num_classes);
  if (mask.height != image.height() || mask.width != image.width()) {
    fail("sample: image and mask disagree on H, W");
  }
}

Image apply_mask(const Image& image, const SegMask& binary_mask) {
  const int h = image.height();
  const int w = image.width();
  if (binary_mask.height != h || binary_mask.width != w) {
    fail("apply_mask: mask " + std::to_string(binary_mask.height) + "x" +
         std::to_string(binary_mask.width) + " does not match image " + std::to_string(h) + "x" +
         std::to_string(w));
  }
  Image out(h, w);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t p = 0; p < plane; ++p) {
    const std::uint8_t m = binary_mask.labels[p];
    if (m > 1) fail("apply_mask: mask values must be 0 or 1");
    if (m == 1) {
      for (int c = 0; c < 3; ++c) out.data[c * plane + p] = image.data[c * plane + p];
    }
  }
  return out;
}

Tensor one_hot(const SegMask& mask, int num_classes) {
  mask.validate(num_classes);
  Tensor out({num_classes, mask.height, mask.width});
  const std::size_t plane = mask.size();
  for (std::size_t p = 0; p < plane; ++p) {
    const std::uint8_t v = mask.labels[p];
    if (v == kIgnoreLabel) continue;
    out[static_cast<std::size_t>(v) * plane + p] = 1.0f;
  }
  return out;
}

}  // namespace semgan
