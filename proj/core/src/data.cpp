#include "semgan/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "semgan/png_io.hpp"

namespace fs = std::filesystem;

namespace semgan {

namespace {

Image decode_image(const Rgb8Image& rgb) {
  Image out(rgb.height, rgb.width);
  const std::size_t plane = static_cast<std::size_t>(rgb.height) * rgb.width;
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < 3; ++c) {
      out.data[c * plane + p] = static_cast<float>(rgb.pixels[p * 3 + c]) / 127.5f - 1.0f;
    }
  }
  return out;
}

Image resize_bilinear(const Image& src, int out_h, int out_w) {
  const int h = src.height(), w = src.width();
  Image dst(out_h, out_w);
  const float sy = static_cast<float>(h) / out_h;
  const float sx = static_cast<float>(w) / out_w;
  const std::size_t sp = static_cast<std::size_t>(h) * w;
  const std::size_t dp = static_cast<std::size_t>(out_h) * out_w;
  for (int r = 0; r < out_h; ++r) {
    float fy = (r + 0.5f) * sy - 0.5f;
    fy = std::clamp(fy, 0.0f, static_cast<float>(h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const float wy = fy - y0;
    for (int c = 0; c < out_w; ++c) {
      float fx = (c + 0.5f) * sx - 0.5f;
      fx = std::clamp(fx, 0.0f, static_cast<float>(w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const float wx = fx - x0;
      for (int ch = 0; ch < 3; ++ch) {
        const float* s = src.data.data() + ch * sp;
        const float v00 = s[static_cast<std::size_t>(y0) * w + x0];
        const float v01 = s[static_cast<std::size_t>(y0) * w + x1];
        const float v10 = s[static_cast<std::size_t>(y1) * w + x0];
        const float v11 = s[static_cast<std::size_t>(y1) * w + x1];
        dst.data[ch * dp + static_cast<std::size_t>(r) * out_w + c] =
            (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
      }
    }
  }
  return dst;
}

SegMask resize_nearest(const SegMask& src, int out_h, int out_w) {
  SegMask dst(out_h, out_w);
  const float sy = static_cast<float>(src.height) / out_h;
  const float sx = static_cast<float>(src.width) / out_w;
  for (int r = 0; r < out_h; ++r) {
    const int y = std::clamp(static_cast<int>((r + 0.5f) * sy), 0, src.height - 1);
    for (int c = 0; c < out_w; ++c) {
      const int x = std::clamp(static_cast<int>((c + 0.5f) * sx), 0, src.width - 1);
      dst.at(r, c) = src.at(y, x);
    }
  }
  return dst;
}

}  // namespace

Dataset Dataset::load(const std::string& root, ClassTaxonomy taxonomy, Domain domain,
                      ResizeSpec resize) {
  taxonomy.validate();
  const fs::path images = fs::path(root) / "images";
  const fs::path masks = fs::path(root) / "masks";
  if (!fs::is_directory(images) || !fs::is_directory(masks)) {
    throw std::runtime_error("dataset: " + root + " must contain images/ and masks/");
  }
  Dataset ds;
  ds.root_ = root;
  ds.taxonomy_ = std::move(taxonomy);
  ds.domain_ = domain;
  ds.resize_ = resize;
  for (const auto& entry : fs::directory_iterator(images)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    ds.stems_.push_back(entry.path().stem().string());
  }
  std::sort(ds.stems_.begin(), ds.stems_.end());
  std::vector<std::string> missing;
  for (const std::string& stem : ds.stems_) {
    if (!fs::exists(masks / (stem + ".png"))) missing.push_back(stem);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& s : missing) list += (list.empty() ? "" : ", ") + s;
    throw std::runtime_error("dataset: missing masks for stems: " + list);
  }
  return ds;
}

std::string Dataset::image_path(std::size_t i) const {
  return (fs::path(root_) / "images" / (stems_.at(i) + ".png")).string();
}

std::string Dataset::mask_path(std::size_t i) const {
  return (fs::path(root_) / "masks" / (stems_.at(i) + ".png")).string();
}

LabeledSample Dataset::get(std::size_t i) const {
  const Rgb8Image rgb = read_png_rgb8(image_path(i));
  const Gray8Image raw = read_png_labels(mask_path(i));
  if (rgb.height != raw.height || rgb.width != raw.width) {
    throw std::runtime_error("dataset: image and mask sizes differ for stem " + stems_.at(i));
  }
  LabeledSample s;
  s.domain = domain_;
  s.image = decode_image(rgb);
  s.mask = SegMask(raw.height, raw.width);
  for (std::size_t p = 0; p < raw.pixels.size(); ++p) {
    int mapped;
    try {
      mapped = taxonomy_.map_label(raw.pixels[p]);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(std::string(e.what()) + " (file " + mask_path(i) + ")");
    }
    s.mask.labels[p] = static_cast<std::uint8_t>(mapped);
  }
  if (resize_.enabled()) {
    s.image = resize_bilinear(s.image, resize_.height, resize_.width);
    s.mask = resize_nearest(s.mask, resize_.height, resize_.width);
  }
  return s;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out = *this;
  out.stems_.clear();
  for (std::size_t i : indices) out.stems_.push_back(stems_.at(i));
  return out;
}

DatasetSplits split_dataset(const Dataset& ds, SplitRatios ratios, std::uint64_t seed) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("split: ratios must sum to 1");
  }
  const std::size_t n = ds.size();
  if (n < 3) throw std::invalid_argument("split: dataset must have at least 3 samples");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  // Fisher-Yates on the stem order.
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i + 1)));
    std::swap(order[i], order[j]);
  }
  const std::size_t n_val = static_cast<std::size_t>(std::floor(ratios.val * static_cast<double>(n)));
  const std::size_t n_test = static_cast<std::size_t>(std::floor(ratios.test * static_cast<double>(n)));
  const std::size_t n_train = n - n_val - n_test;
  DatasetSplits s;
  s.train = ds.subset({order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train)});
  s.val = ds.subset({order.begin() + static_cast<std::ptrdiff_t>(n_train),
                     order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val)});
  s.test = ds.subset({order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end()});
  return s;
}

DatasetSplits split_dataset_by_stems(const Dataset& ds) {
  std::vector<std::size_t> train, val, test;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::string& s = ds.stem(i);
    if (s.rfind("train_", 0) == 0) {
      train.push_back(i);
    } else if (s.rfind("val_", 0) == 0) {
      val.push_back(i);
    } else if (s.rfind("test_", 0) == 0) {
      test.push_back(i);
    } else {
      throw std::runtime_error("split: stem '" + s + "' has no train_/val_/test_ prefix");
    }
  }
  DatasetSplits out;
  out.train = ds.subset(train);
  out.val = ds.subset(val);
  out.test = ds.subset(test);
  return out;
}

LabeledSample augment(const LabeledSample& sample, AugmentMode mode, int crop, bool hflip,
                      Rng& rng) {
  const int h = sample.image.height();
  const int w = sample.image.width();
  if (h < crop || w < crop) {
    throw std::invalid_argument("augment: image " + std::to_string(h) + "x" + std::to_string(w) +
                                " smaller than crop " + std::to_string(crop));
  }
  int r0, c0;
  bool flip = false;
  if (mode == AugmentMode::kTrain) {
    r0 = static_cast<int>(rng.uniform_int(h - crop + 1));
    c0 = static_cast<int>(rng.uniform_int(w - crop + 1));
    if (hflip) flip = rng.bernoulli(0.5);
  } else {
    r0 = (h - crop) / 2;
    c0 = (w - crop) / 2;
  }
  LabeledSample out;
  out.domain = sample.domain;
  out.image = Image(crop, crop);
  out.mask = SegMask(crop, crop);
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = static_cast<std::size_t>(crop) * crop;
  for (int r = 0; r < crop; ++r) {
    for (int c = 0; c < crop; ++c) {
      const int sc = flip ? (c0 + crop - 1 - c) : (c0 + c);
      const std::size_t src = static_cast<std::size_t>(r0 + r) * w + sc;
      const std::size_t dst = static_cast<std::size_t>(r) * crop + c;
      for (int ch = 0; ch < 3; ++ch) {
        out.image.data[ch * out_plane + dst] = sample.image.data[ch * in_plane + src];
      }
      out.mask.labels[dst] = sample.mask.labels[src];
    }
  }
  return out;
}

std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> sample_unpaired_batch(
    const Dataset& ds_a, const Dataset& ds_b, int batch_size, Rng& rng) {
  if (ds_a.empty() || ds_b.empty()) {
    throw std::invalid_argument("sample_unpaired_batch: empty dataset");
  }
  std::vector<LabeledSample> a, b;
  for (int i = 0; i < batch_size; ++i) {
    a.push_back(ds_a.get(static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(ds_a.size())))));
  }
  for (int i = 0; i < batch_size; ++i) {
    b.push_back(ds_b.get(static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(ds_b.size())))));
  }
  return {std::move(a), std::move(b)};
}

void ToyWorldCfg::validate() const {
  if (image_size < 16 || image_size % 4 != 0) {
    throw std::invalid_argument("toy: image_size must be >= 16 and divisible by 4");
  }
  if (num_classes < 4 || num_classes > 8) {
    throw std::invalid_argument("toy: num_classes must be in [4, 8]");
  }
  if (count_train < 1 || count_val < 1 || count_test < 1) {
    throw std::invalid_argument("toy: split counts must be >= 1");
  }
}

std::vector<std::string> toy_class_names(int num_classes) {
  std::vector<std::string> names = {"background", "ground", "sky_band"};
  for (int i = 3; i < num_classes; ++i) names.push_back("blob_" + std::to_string(i - 2));
  return names;
}

namespace {

using Palette = std::vector<std::array<float, 3>>;

// Base colors per class; domain B carries its own palette. With the
// ambiguity flag the sky_band/blob_1 rows of domain B are swapped, so a
// blue band translated with unchanged colors lands on B's blob_1 mode.
Palette toy_palette(Domain domain, bool ambiguity, int num_classes) {
  Palette a = {
      {52, 46, 48},     // background
      {150, 102, 60},   // ground
      {70, 110, 225},   // sky_band: blue
      {62, 185, 85},    // blob_1: green
      {226, 94, 60},    // blob_2: red
      {210, 180, 70},   // blob_3
      {160, 70, 200},   // blob_4
      {90, 210, 205},   // blob_5
  };
  Palette b = {
      {84, 88, 96},
      {172, 136, 92},
      {96, 150, 240},   // sky_band: blue family
      {90, 205, 118},   // blob_1: green family
      {240, 120, 88},
      {226, 198, 92},
      {180, 92, 216},
      {110, 226, 220},
  };
  Palette p = domain == Domain::kA ? a : b;
  if (domain == Domain::kB && ambiguity) std::swap(p[2], p[3]);
  p.resize(static_cast<std::size_t>(num_classes));
  return p;
}

struct Scene {
  SegMask mask;
  Rgb8Image image;
};

SegMask draw_toy_mask(const ToyWorldCfg& cfg, Rng& rng) {
  const int s = cfg.image_size;
  SegMask mask(s, s, 0);
  // Ground: tilted lower region.
  const double g0 = s * rng.uniform(0.60, 0.75);
  const double slope = rng.uniform(-0.10, 0.10);
  for (int c = 0; c < s; ++c) {
    const int top = std::clamp(static_cast<int>(g0 + slope * c), 0, s - 1);
    for (int r = top; r < s; ++r) mask.at(r, c) = 1;
  }
  // Sky band: horizontal stripe above the ground region.
  const int b0 = static_cast<int>(s * rng.uniform(0.05, 0.18));
  const int bh = std::max(2, static_cast<int>(s * rng.uniform(0.12, 0.22)));
  for (int r = b0; r < std::min(b0 + bh, s); ++r) {
    for (int c = 0; c < s; ++c) mask.at(r, c) = 2;
  }
  // Blobs: 1-4 ellipses of the blob classes, drawn on top.
  const int n_blobs = 1 + static_cast<int>(rng.uniform_int(4));
  for (int i = 0; i < n_blobs; ++i) {
    const int cls = 3 + static_cast<int>(rng.uniform_int(cfg.num_classes - 3));
    const double cy = s * rng.uniform(0.22, 0.72);
    const double cx = s * rng.uniform(0.12, 0.88);
    const double ry = s * rng.uniform(0.09, 0.17);
    const double rx = s * rng.uniform(0.09, 0.17);
    for (int r = 0; r < s; ++r) {
      for (int c = 0; c < s; ++c) {
        const double dy = (r - cy) / ry;
        const double dx = (c - cx) / rx;
        if (dy * dy + dx * dx <= 1.0) mask.at(r, c) = static_cast<std::uint8_t>(cls);
      }
    }
  }
  return mask;
}

bool toy_mask_acceptable(const ToyWorldCfg& cfg, const SegMask& mask) {
  std::array<int, 8> counts{};
  for (std::uint8_t v : mask.labels) counts[v]++;
  const double total = static_cast<double>(mask.size());
  int blob_pixels = 0;
  for (int c = 3; c < cfg.num_classes; ++c) blob_pixels += counts[static_cast<std::size_t>(c)];
  return counts[0] / total >= 0.02 && counts[1] / total >= 0.08 && counts[2] / total >= 0.04 &&
         blob_pixels / total >= 0.015;
}

Scene draw_toy_scene(const ToyWorldCfg& cfg, const Palette& palette, double noise_sigma,
                     Rng& rng) {
  Scene scene;
  for (int attempt = 0; attempt < 64; ++attempt) {
    scene.mask = draw_toy_mask(cfg, rng);
    if (toy_mask_acceptable(cfg, scene.mask)) break;
  }
  const int s = cfg.image_size;
  scene.image.height = s;
  scene.image.width = s;
  scene.image.pixels.resize(static_cast<std::size_t>(s) * s * 3);
  const double brightness = rng.uniform(-9.0, 9.0);
  for (int r = 0; r < s; ++r) {
    for (int c = 0; c < s; ++c) {
      const auto& base = palette[scene.mask.at(r, c)];
      for (int ch = 0; ch < 3; ++ch) {
        const double v = base[static_cast<std::size_t>(ch)] + brightness +
                         noise_sigma * rng.normal();
        scene.image.pixels[(static_cast<std::size_t>(r) * s + c) * 3 +
                           static_cast<std::size_t>(ch)] =
            static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
    }
  }
  return scene;
}

void write_toy_domain(const ToyWorldCfg& cfg, const fs::path& root, Domain domain, Rng& rng) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  const Palette palette = toy_palette(domain, cfg.ambiguity, cfg.num_classes);
  const double noise_sigma = domain == Domain::kA ? 7.0 : 13.0;
  std::vector<std::array<std::uint8_t, 3>> png_palette;
  for (const auto& c : palette) {
    png_palette.push_back({static_cast<std::uint8_t>(c[0]), static_cast<std::uint8_t>(c[1]),
                           static_cast<std::uint8_t>(c[2])});
  }
  const std::array<std::pair<const char*, int>, 3> splits = {
      std::make_pair("train", cfg.count_train), std::make_pair("val", cfg.count_val),
      std::make_pair("test", cfg.count_test)};
  for (const auto& [split, count] : splits) {
    for (int i = 0; i < count; ++i) {
      char stem[64];
      std::snprintf(stem, sizeof(stem), "%s_%05d", split, i);
      const Scene scene = draw_toy_scene(cfg, palette, noise_sigma, rng);
      write_png_rgb8((root / "images" / (std::string(stem) + ".png")).string(), scene.image);
      Gray8Image labels{scene.mask.height, scene.mask.width, scene.mask.labels};
      write_png_labels((root / "masks" / (std::string(stem) + ".png")).string(), labels,
                       png_palette);
    }
  }
  ClassTaxonomy tax = ClassTaxonomy::identity(cfg.num_classes);
  tax.names = toy_class_names(cfg.num_classes);
  tax.save_csv((root / "taxonomy.csv").string());
}

}  // namespace

void generate_toy_domains(const ToyWorldCfg& cfg, const std::string& out_root, bool force) {
  cfg.validate();
  const fs::path root(out_root);
  if (fs::exists(root) && !fs::is_empty(root) && !force) {
    throw std::runtime_error("toy: output dir " + out_root +
                             " exists and is not empty (use --force to overwrite)");
  }
  fs::create_directories(root);
  // Independent streams per domain keep the two sides unpaired.
  Rng rng_a(cfg.seed * 2654435761u + 1);
  Rng rng_b(cfg.seed * 2654435761u + 2);
  write_toy_domain(cfg, root / "domain_a", Domain::kA, rng_a);
  write_toy_domain(cfg, root / "domain_b", Domain::kB, rng_b);

  nlohmann::json manifest;
  manifest["generator"] = "toy";
  manifest["image_size"] = cfg.image_size;
  manifest["num_classes"] = cfg.num_classes;
  manifest["counts"] = {cfg.count_train, cfg.count_val, cfg.count_test};
  manifest["ambiguity"] = cfg.ambiguity;
  manifest["seed"] = cfg.seed;
  manifest["class_names"] = toy_class_names(cfg.num_classes);
  std::ofstream out(root / "manifest.json");
  out << manifest.dump(2) << "\n";
}

Image image_from_rgb8(const std::vector<std::uint8_t>& rgb, int height, int width) {
  Rgb8Image tmp{height, width, rgb};
  return decode_image(tmp);
}

std::vector<std::uint8_t> rgb8_from_image(const Image& image) {
  const std::size_t plane = static_cast<std::size_t>(image.height()) * image.width();
  std::vector<std::uint8_t> out(plane * 3);
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < 3; ++c) {
      const float v = (image.data[c * plane + p] + 1.0f) * 127.5f;
      out[p * 3 + static_cast<std::size_t>(c)] =
          static_cast<std::uint8_t>(std::clamp(v, 0.0f, 255.0f));
    }
  }
  return out;
}

}  // namespace semgan
