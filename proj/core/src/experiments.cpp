#include "semgan/experiments.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "semgan/checkpoint.hpp"
#include "semgan/png_io.hpp"

namespace fs = std::filesystem;

namespace semgan {

namespace {

ClassTaxonomy taxonomy_or_identity(const std::string& path, int num_classes) {
  if (path.empty()) return ClassTaxonomy::identity(num_classes);
  ClassTaxonomy t = ClassTaxonomy::load_csv(path);
  if (t.num_classes != num_classes) {
    throw std::runtime_error("taxonomy " + path + " has K=" + std::to_string(t.num_classes) +
                             ", expected " + std::to_string(num_classes));
  }
  return t;
}

}  // namespace

SegTrainReport train_segmenter(const SegTrainOptions& opt, const std::string& out_ckpt) {
  const ClassTaxonomy tax = taxonomy_or_identity(opt.taxonomy_path, opt.num_classes);
  const Dataset ds = Dataset::load(opt.data_root, tax, opt.domain);
  DatasetSplits splits;
  if (opt.split_mode == "stems") {
    splits = split_dataset_by_stems(ds);
  } else {
    splits = split_dataset(ds, SplitRatios{}, opt.split_seed);
  }
  if (splits.train.empty()) throw std::runtime_error("train_segmenter: empty training split");

  SegmenterCfg cfg;
  cfg.num_classes = opt.num_classes;
  cfg.preset = opt.preset;
  cfg.base_width = opt.base_width;
  Rng init_rng(opt.seed * 0x9e3779b97f4a7c15ull + 99);
  Segmenter seg(cfg, init_rng);
  nn::Adam adam(seg.params(), 0.9f, 0.999f);
  Rng rng_data(opt.seed * 1000003 + 1);
  Rng rng_aug(opt.seed * 1000003 + 2);

  const int steps_per_epoch =
      static_cast<int>((splits.train.size() + opt.batch_size - 1) / opt.batch_size);
  const int decay_start = opt.epochs / 2;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    const double lr = epoch < decay_start
                          ? opt.lr
                          : opt.lr * static_cast<double>(opt.epochs - epoch) /
                                static_cast<double>(opt.epochs - decay_start);
    for (int s = 0; s < steps_per_epoch; ++s) {
      std::vector<Image> images;
      std::vector<SegMask> masks;
      for (int i = 0; i < opt.batch_size; ++i) {
        const std::size_t idx = static_cast<std::size_t>(
            rng_data.uniform_int(static_cast<std::int64_t>(splits.train.size())));
        LabeledSample sample = augment(splits.train.get(idx), AugmentMode::kTrain, opt.crop,
                                       opt.hflip, rng_aug);
        images.push_back(std::move(sample.image));
        masks.push_back(std::move(sample.mask));
      }
      adam.zero_grad();
      Tensor logits = seg.forward(stack_images(images), /*train=*/true);
      Tensor d_logits;
      const auto res =
          seg_consistency_loss_batch_grad<float>(logits, masks, std::nullopt, &d_logits);
      if (res.all_ignore) continue;
      if (!std::isfinite(static_cast<double>(res.value))) {
        throw std::runtime_error("train_segmenter: non-finite loss");
      }
      seg.backward(d_logits, /*param_grads=*/true);
      adam.step(static_cast<float>(lr));
    }
  }

  SegTrainReport report;
  Rng unused(0);
  std::vector<LabeledSample> val;
  for (std::size_t i = 0; i < splits.val.size(); ++i) {
    val.push_back(augment(splits.val.get(i), AugmentMode::kEval, opt.crop, false, unused));
  }
  report.val_pixel_acc = segmenter_pixel_accuracy(seg, val);
  ConfusionMatrix cm(opt.num_classes);
  for (std::size_t i = 0; i < splits.test.size(); ++i) {
    const LabeledSample s =
        augment(splits.test.get(i), AugmentMode::kEval, opt.crop, false, unused);
    accumulate(cm, segment(seg, s.image).argmax(), s.mask);
  }
  report.test_report = metrics_from_confusion(cm, tax.names);
  save_segmenter_checkpoint(out_ckpt, seg);
  report.checkpoint_path = out_ckpt;
  return report;
}

LoadedGan load_gan(const std::string& ckpt_path) {
  LoadedGan out{peek_checkpoint_config(ckpt_path), TrainState{}};
  out.state = init_train_state(out.config);
  load_train_checkpoint(ckpt_path, out.state);
  return out;
}

int translate_directory(const std::string& ckpt_path, const std::string& input_dir,
                        const std::string& direction, const std::string& out_dir) {
  if (direction != "ab" && direction != "ba") {
    throw std::invalid_argument("translate: direction must be ab or ba");
  }
  LoadedGan gan = load_gan(ckpt_path);
  Generator& g = direction == "ab" ? *gan.state.g_ab : *gan.state.g_ba;
  if (!fs::is_directory(input_dir)) {
    throw std::runtime_error("translate: input dir " + input_dir + " does not exist");
  }
  std::vector<fs::path> inputs;
  for (const auto& entry : fs::directory_iterator(input_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      inputs.push_back(entry.path());
    }
  }
  std::sort(inputs.begin(), inputs.end());
  fs::create_directories(out_dir);
  for (const fs::path& p : inputs) {
    const Rgb8Image rgb = read_png_rgb8(p.string());
    const Image x = image_from_rgb8(rgb.pixels, rgb.height, rgb.width);
    const Image y = translate(g, x);
    Rgb8Image out_rgb{y.height(), y.width(), rgb8_from_image(y)};
    write_png_rgb8((fs::path(out_dir) / p.filename()).string(), out_rgb);
  }
  return static_cast<int>(inputs.size());
}

MetricsReport evaluate_checkpoint(const std::string& gan_ckpt, const std::string& seg_ckpt,
                                  const std::string& dataset_root,
                                  const std::string& taxonomy_path, const std::string& direction,
                                  std::optional<int> crop_override) {
  if (direction != "ab" && direction != "ba") {
    throw std::invalid_argument("evaluate: direction must be ab or ba");
  }
  LoadedGan gan = load_gan(gan_ckpt);
  const SegmenterCfg seg_cfg = peek_segmenter_cfg(seg_ckpt);
  Rng tmp_rng(0);
  Segmenter eval_seg(seg_cfg, tmp_rng);
  load_segmenter_checkpoint(seg_ckpt, eval_seg);

  const int k = gan.config.get_int("num_classes");
  if (seg_cfg.num_classes != k) {
    throw std::invalid_argument("evaluate: segmenter K=" + std::to_string(seg_cfg.num_classes) +
                                " does not match run K=" + std::to_string(k));
  }
  const ClassTaxonomy tax = taxonomy_or_identity(taxonomy_path, k);
  const Domain domain = direction == "ab" ? Domain::kA : Domain::kB;
  const Dataset source = Dataset::load(dataset_root, tax, domain);
  Generator& g = direction == "ab" ? *gan.state.g_ab : *gan.state.g_ba;
  const int crop = crop_override.value_or(gan.config.get_int("crop"));
  return evaluate_translation(g, eval_seg, source, tax, crop);
}

// ---- Ablation ----

RunConfig ablation_variant_config(const RunConfig& base, const std::string& variant,
                                  int seed_offset) {
  RunConfig cfg = base;
  if (variant == "cycle") {
    cfg.set("lambda_seg", "0");
    cfg.set("semantic_dropout_p", "0");
    cfg.set("p_ab", "-1");
    cfg.set("p_ba", "-1");
  } else if (variant == "seg") {
    cfg.set("semantic_dropout_p", "0");
    cfg.set("p_ab", "-1");
    cfg.set("p_ba", "-1");
  } else if (variant == "seg_sm") {
    // base config carries the seg weight and dropout probability
  } else {
    throw std::invalid_argument("ablate: unknown variant '" + variant +
                                "' (expected cycle, seg or seg_sm)");
  }
  cfg.set("seed", std::to_string(base.get_int("seed") + seed_offset));
  return cfg;
}

bool AblationCell::failed() const {
  return std::any_of(ok.begin(), ok.end(), [](bool v) { return !v; });
}

namespace {

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

double AblationCell::mean_miou(const std::string& direction) const {
  return mean_of(direction == "ab" ? miou_ab : miou_ba);
}
double AblationCell::sd_miou(const std::string& direction) const {
  return sd_of(direction == "ab" ? miou_ab : miou_ba);
}
double AblationCell::mean_acc(const std::string& direction) const {
  return mean_of(direction == "ab" ? acc_ab : acc_ba);
}

const AblationCell* AblationReport::cell(const std::string& variant) const {
  for (const auto& c : cells) {
    if (c.variant == variant) return &c;
  }
  return nullptr;
}

bool AblationReport::ordering_holds() const {
  if (any_failure) return false;
  for (const std::string dir : {"ab", "ba"}) {
    const AblationCell* cy = cell("cycle");
    const AblationCell* sg = cell("seg");
    const AblationCell* sm = cell("seg_sm");
    if (sg && cy && !(sg->mean_miou(dir) >= cy->mean_miou(dir))) return false;
    if (sm && sg && !(sm->mean_miou(dir) >= sg->mean_miou(dir))) return false;
    if (sm && cy && !sg && !(sm->mean_miou(dir) >= cy->mean_miou(dir))) return false;
  }
  return true;
}

std::string AblationReport::table_text() const {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-8s %-9s %10s %16s %6s\n", "variant", "direction",
                "mean_acc", "miou (mean+-sd)", "seeds");
  out += line;
  out += std::string(52, '-') + "\n";
  for (const auto& c : cells) {
    for (const std::string dir : {"ab", "ba"}) {
      if (c.failed()) {
        std::snprintf(line, sizeof(line), "%-8s %-9s %10s %16s %6zu\n", c.variant.c_str(),
                      dir.c_str(), "FAILED", "FAILED", c.ok.size());
      } else {
        char miou[64];
        std::snprintf(miou, sizeof(miou), "%.2f +- %.2f", c.mean_miou(dir), c.sd_miou(dir));
        std::snprintf(line, sizeof(line), "%-8s %-9s %10.2f %16s %6zu\n", c.variant.c_str(),
                      dir.c_str(), c.mean_acc(dir), miou, c.ok.size());
      }
      out += line;
    }
  }
  return out;
}

std::string AblationReport::table_csv() const {
  std::string out = "variant,direction,mean_acc,miou,miou_sd,seeds,status\n";
  char line[256];
  for (const auto& c : cells) {
    for (const std::string dir : {"ab", "ba"}) {
      std::snprintf(line, sizeof(line), "%s,%s,%.4f,%.4f,%.4f,%zu,%s\n", c.variant.c_str(),
                    dir.c_str(), c.mean_acc(dir), c.mean_miou(dir), c.sd_miou(dir), c.ok.size(),
                    c.failed() ? "failed" : "ok");
      out += line;
    }
  }
  return out;
}

AblationReport run_ablation(const AblationOptions& opt) {
  if (opt.variants.empty()) throw std::invalid_argument("ablate: no variants requested");
  if (opt.seeds < 1) throw std::invalid_argument("ablate: seeds must be >= 1");
  const RunConfig& base = opt.base;
  if (base.get_string("data_a").empty() || base.get_string("data_b").empty()) {
    throw std::invalid_argument("ablate: base config must set data_a and data_b");
  }
  const bool wants_seg = std::any_of(opt.variants.begin(), opt.variants.end(),
                                     [](const std::string& v) { return v != "cycle"; });
  if (wants_seg && base.get_double("lambda_seg") <= 0) {
    throw std::invalid_argument("ablate: base config needs lambda_seg > 0 for seg variants");
  }
  const bool wants_sm = std::any_of(opt.variants.begin(), opt.variants.end(),
                                    [](const std::string& v) { return v == "seg_sm"; });
  if (wants_sm && base.get_double("semantic_dropout_p") <= 0 && base.get_double("p_ab") <= 0 &&
      base.get_double("p_ba") <= 0) {
    throw std::invalid_argument("ablate: base config needs a dropout probability for seg_sm");
  }

  fs::create_directories(opt.out_dir);
  const fs::path out(opt.out_dir);

  // Frozen evaluation segmenters, one per domain, cached across invocations.
  const int k = base.get_int("num_classes");
  auto eval_seg_path = [&](const char* domain) {
    return (out / (std::string("eval_seg_") + domain + ".ckpt")).string();
  };
  for (const auto& [name, domain, data_key, tax_key] :
       {std::tuple{"a", Domain::kA, "data_a", "taxonomy_a"},
        std::tuple{"b", Domain::kB, "data_b", "taxonomy_b"}}) {
    const std::string path = eval_seg_path(name);
    if (fs::exists(path)) continue;
    SegTrainOptions so;
    so.data_root = base.get_string(data_key);
    so.taxonomy_path = base.get_string(tax_key);
    so.num_classes = k;
    so.domain = domain;
    so.split_mode = base.get_string("split_mode");
    so.split_seed = static_cast<std::uint64_t>(base.get_int("split_seed"));
    so.epochs = opt.eval_seg_epochs;
    so.batch_size = opt.eval_seg_batch;
    so.base_width = base.get_int("s_base_width");
    so.crop = base.get_int("crop");
    so.hflip = base.get_bool("hflip");
    so.seed = 1000 + (domain == Domain::kA ? 0 : 1);
    std::cout << "[ablate] training eval segmenter for domain " << name << "...\n";
    const SegTrainReport rep = train_segmenter(so, path);
    std::cout << "[ablate] eval segmenter " << name << " val acc " << rep.val_pixel_acc
              << ", test mIoU " << rep.test_report.miou << "\n";
  }

  // Cached frozen segmenters for scoring.
  auto load_eval_seg = [&](const char* name) {
    const SegmenterCfg cfg = peek_segmenter_cfg(eval_seg_path(name));
    Rng tmp(0);
    auto seg = std::make_unique<Segmenter>(cfg, tmp);
    load_segmenter_checkpoint(eval_seg_path(name), *seg);
    return seg;
  };
  auto eval_seg_a = load_eval_seg("a");
  auto eval_seg_b = load_eval_seg("b");

  const ClassTaxonomy tax_a = taxonomy_or_identity(base.get_string("taxonomy_a"), k);
  const ClassTaxonomy tax_b = taxonomy_or_identity(base.get_string("taxonomy_b"), k);
  const int crop = base.get_int("crop");

  AblationReport report;
  for (const std::string& variant : opt.variants) {
    AblationCell cell;
    cell.variant = variant;
    for (int s = 0; s < opt.seeds; ++s) {
      const fs::path run_dir = out / "runs" / (variant + "_seed" + std::to_string(s));
      const fs::path eval_json = run_dir / "ablation_eval.json";
      try {
        if (!fs::exists(eval_json)) {
          const RunConfig cfg = ablation_variant_config(base, variant, s);
          const bool resumable = fs::exists(run_dir / "checkpoints" / "last.ckpt");
          std::cout << "[ablate] " << variant << " seed " << s
                    << (resumable ? " (resuming)" : "") << "...\n";
          train(cfg, run_dir.string(), resumable);

          LoadedGan gan = load_gan((run_dir / "checkpoints" / "last.ckpt").string());
          const Dataset ds_a = Dataset::load(base.get_string("data_a"), tax_a, Domain::kA);
          const Dataset ds_b = Dataset::load(base.get_string("data_b"), tax_b, Domain::kB);
          DatasetSplits split_a, split_b;
          if (base.get_string("split_mode") == "stems") {
            split_a = split_dataset_by_stems(ds_a);
            split_b = split_dataset_by_stems(ds_b);
          } else {
            SplitRatios r{base.get_double("split_train"), base.get_double("split_val"),
                          base.get_double("split_test")};
            split_a = split_dataset(ds_a, r, static_cast<std::uint64_t>(base.get_int("split_seed")));
            split_b = split_dataset(ds_b, r, static_cast<std::uint64_t>(base.get_int("split_seed")));
          }
          const MetricsReport rep_ab =
              evaluate_translation(*gan.state.g_ab, *eval_seg_b, split_a.test, tax_a, crop);
          const MetricsReport rep_ba =
              evaluate_translation(*gan.state.g_ba, *eval_seg_a, split_b.test, tax_b, crop);
          nlohmann::json j;
          j["variant"] = variant;
          j["seed_offset"] = s;
          j["miou_ab"] = rep_ab.miou;
          j["miou_ba"] = rep_ba.miou;
          j["acc_ab"] = rep_ab.overall_acc;
          j["acc_ba"] = rep_ba.overall_acc;
          j["report_ab"] = nlohmann::json::parse(rep_ab.to_json());
          j["report_ba"] = nlohmann::json::parse(rep_ba.to_json());
          std::ofstream js(eval_json);
          js << j.dump(2) << "\n";
        }
        std::ifstream js(eval_json);
        const nlohmann::json j = nlohmann::json::parse(js);
        cell.miou_ab.push_back(j.at("miou_ab").get<double>());
        cell.miou_ba.push_back(j.at("miou_ba").get<double>());
        cell.acc_ab.push_back(j.at("acc_ab").get<double>());
        cell.acc_ba.push_back(j.at("acc_ba").get<double>());
        cell.ok.push_back(true);
        std::cout << "[ablate] " << variant << " seed " << s << " mIoU ab "
                  << cell.miou_ab.back() << " ba " << cell.miou_ba.back() << "\n";
      } catch (const std::exception& e) {
        std::cerr << "[ablate] " << variant << " seed " << s << " FAILED: " << e.what() << "\n";
        cell.ok.push_back(false);
        report.any_failure = true;
      }
    }
    report.cells.push_back(std::move(cell));
  }

  std::ofstream table_txt(out / "table.txt");
  table_txt << report.table_text();
  std::ofstream table_csv(out / "table.csv");
  table_csv << report.table_csv();
  return report;
}

}  // namespace semgan
