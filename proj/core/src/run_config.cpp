#include "semgan/run_config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace semgan {

namespace {

enum class KeyType { kInt, kDouble, kBool, kString, kEnum };

struct KeySpec {
  std::string name;
  KeyType type;
  std::string default_value;
  std::vector<std::string> enum_values;  // for kEnum
  double min = -1e300;
  double max = 1e300;
};

const std::vector<KeySpec>& schema() {
  static const std::vector<KeySpec> s = {
      // data
      {"data_a", KeyType::kString, ""},
      {"data_b", KeyType::kString, ""},
      {"taxonomy_a", KeyType::kString, ""},
      {"taxonomy_b", KeyType::kString, ""},
      {"num_classes", KeyType::kInt, "5", {}, 2, 254},
      {"resize_h", KeyType::kInt, "0", {}, 0, 1 << 14},
      {"resize_w", KeyType::kInt, "0", {}, 0, 1 << 14},
      {"crop", KeyType::kInt, "256", {}, 4, 1 << 14},
      {"hflip", KeyType::kBool, "true"},
      {"split_mode", KeyType::kEnum, "ratios", {"ratios", "stems"}},
      {"split_seed", KeyType::kInt, "0", {}, 0, 1e18},
      {"split_train", KeyType::kDouble, "0.85", {}, 0, 1},
      {"split_val", KeyType::kDouble, "0.05", {}, 0, 1},
      {"split_test", KeyType::kDouble, "0.10", {}, 0, 1},
      // models
      {"g_res_blocks", KeyType::kInt, "9", {}, 1, 64},
      {"g_base_width", KeyType::kInt, "64", {}, 4, 512},
      {"d_layers", KeyType::kInt, "3", {}, 1, 6},
      {"d_base_width", KeyType::kInt, "64", {}, 4, 512},
      {"d_kind", KeyType::kEnum, "patch", {"patch", "resnet"}},
      {"s_preset", KeyType::kEnum, "desk", {"desk", "full"}},
      {"s_base_width", KeyType::kInt, "32", {}, 4, 512},
      // losses
      {"adv_mode", KeyType::kEnum, "lsgan", {"lsgan", "bce"}},
      {"lambda_cycle", KeyType::kDouble, "10", {}, 0, 1e6},
      {"lambda_seg", KeyType::kDouble, "1", {}, 0, 1e6},
      {"lambda_idt", KeyType::kDouble, "5", {}, 0, 1e6},
      {"seg_ref_mode", KeyType::kEnum, "gt", {"gt", "pseudo"}},
      {"seg_label_remap", KeyType::kString, ""},
      // semantic dropout
      {"semantic_dropout_p", KeyType::kDouble, "0", {}, 0, 1},
      {"p_ab", KeyType::kDouble, "-1", {}, -1, 1},
      {"p_ba", KeyType::kDouble, "-1", {}, -1, 1},
      // training
      {"epochs", KeyType::kInt, "50", {}, 1, 1e6},
      {"batch_size", KeyType::kInt, "1", {}, 1, 256},
      {"lr", KeyType::kDouble, "0.0002", {}, 1e-12, 1},
      {"adam_beta1", KeyType::kDouble, "0.5", {}, 0, 0.999999},
      {"adam_beta2", KeyType::kDouble, "0.999", {}, 0, 0.999999},
      {"pool_size", KeyType::kInt, "50", {}, 0, 4096},
      {"warmup_policy", KeyType::kEnum, "threshold", {"fixed", "threshold"}},
      {"warmup_epochs", KeyType::kInt, "5", {}, 0, 1e6},
      {"warmup_acc_threshold", KeyType::kDouble, "0.70", {}, 0, 1},
      {"seg_train_on_fakes", KeyType::kBool, "false"},
      {"checkpoint_every", KeyType::kInt, "10", {}, 1, 1e6},
      {"eval_every", KeyType::kInt, "5", {}, 0, 1e6},
      {"sample_every", KeyType::kInt, "10", {}, 0, 1e6},
      {"seed", KeyType::kInt, "1", {}, 0, 1e18},
  };
  return s;
}

const KeySpec* find_spec(const std::string& key) {
  for (const KeySpec& s : schema()) {
    if (s.name == key) return &s;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig::RunConfig() {
  for (const KeySpec& s : schema()) values_[s.name] = s.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const KeySpec* spec = find_spec(key);
  if (!spec) throw std::invalid_argument("config: unknown key '" + key + "'");
  switch (spec->type) {
    case KeyType::kInt: {
      std::size_t pos = 0;
      long long v = 0;
      try {
        v = std::stoll(value, &pos);
      } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" +
                                    value + "'");
      }
      if (pos != value.size()) {
        throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" +
                                    value + "'");
      }
      if (v < spec->min || v > spec->max) {
        throw std::invalid_argument("config: key '" + key + "' value " + value +
                                    " out of range");
      }
      break;
    }
    case KeyType::kDouble: {
      std::size_t pos = 0;
      double v = 0;
      try {
        v = std::stod(value, &pos);
      } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + value +
                                    "'");
      }
      if (pos != value.size() || !std::isfinite(v)) {
        throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + value +
                                    "'");
      }
      if (v < spec->min || v > spec->max) {
        throw std::invalid_argument("config: key '" + key + "' value " + value +
                                    " out of range");
      }
      break;
    }
    case KeyType::kBool:
      if (value != "true" && value != "false" && value != "0" && value != "1") {
        throw std::invalid_argument("config: key '" + key + "' expects true/false");
      }
      break;
    case KeyType::kEnum:
      if (std::find(spec->enum_values.begin(), spec->enum_values.end(), value) ==
          spec->enum_values.end()) {
        std::string allowed;
        for (const auto& e : spec->enum_values) allowed += (allowed.empty() ? "" : "|") + e;
        throw std::invalid_argument("config: key '" + key + "' expects one of " + allowed +
                                    ", got '" + value + "'");
      }
      break;
    case KeyType::kString:
      break;
  }
  values_[key] = value;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                  " is not key=value: '" + line + "'");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

int RunConfig::get_int(const std::string& key) const {
  return static_cast<int>(std::stoll(get_string(key)));
}

double RunConfig::get_double(const std::string& key) const { return std::stod(get_string(key)); }

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get_string(key);
  return v == "true" || v == "1";
}

const std::string& RunConfig::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
  return it->second;
}

std::string RunConfig::to_string() const {
  std::string out;
  for (const KeySpec& s : schema()) {
    out += s.name + " = " + values_.at(s.name) + "\n";
  }
  return out;
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot write " + path);
  out << to_string();
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> v;
    for (const KeySpec& s : schema()) v.push_back(s.name);
    return v;
  }();
  return k;
}

GeneratorCfg generator_cfg(const RunConfig& cfg) {
  GeneratorCfg g;
  g.n_res_blocks = cfg.get_int("g_res_blocks");
  g.base_width = cfg.get_int("g_base_width");
  g.validate();
  return g;
}

DiscriminatorCfg discriminator_cfg(const RunConfig& cfg) {
  DiscriminatorCfg d;
  d.n_layers = cfg.get_int("d_layers");
  d.base_width = cfg.get_int("d_base_width");
  d.kind = cfg.get_string("d_kind") == "resnet" ? DiscKind::kResnet : DiscKind::kPatch;
  d.sigmoid_output = cfg.get_string("adv_mode") == "bce";
  d.validate();
  return d;
}

SegmenterCfg segmenter_cfg(const RunConfig& cfg) {
  SegmenterCfg s;
  s.num_classes = cfg.get_int("num_classes");
  s.preset = cfg.get_string("s_preset") == "full" ? SegPreset::kFull : SegPreset::kDesk;
  s.base_width = cfg.get_int("s_base_width");
  s.validate();
  return s;
}

LossWeights loss_weights(const RunConfig& cfg) {
  LossWeights w;
  w.lambda_cycle = cfg.get_double("lambda_cycle");
  w.lambda_seg = cfg.get_double("lambda_seg");
  w.lambda_idt = cfg.get_double("lambda_idt");
  w.adv_mode = cfg.get_string("adv_mode") == "bce" ? AdvMode::kBce : AdvMode::kLsgan;
  w.validate();
  return w;
}

std::optional<LabelRemap> label_remap_from_config(const RunConfig& cfg) {
  const std::string& text = cfg.get_string("seg_label_remap");
  if (text.empty()) return std::nullopt;
  const int k = cfg.get_int("num_classes");
  LabelRemap remap(static_cast<std::size_t>(k));
  std::vector<bool> assigned(static_cast<std::size_t>(k), false);
  std::istringstream in(text);
  std::string pair;
  while (std::getline(in, pair, ',')) {
    const auto colon = pair.find(':');
    if (colon == std::string::npos) {
      throw std::invalid_argument("config: seg_label_remap entries must be from:to");
    }
    const int from = std::stoi(pair.substr(0, colon));
    const int to = std::stoi(pair.substr(colon + 1));
    if (from < 0 || from >= k || to < 0 || to >= k) {
      throw std::invalid_argument("config: seg_label_remap index out of range");
    }
    remap[static_cast<std::size_t>(from)] = to;
    assigned[static_cast<std::size_t>(from)] = true;
  }
  // Unlisted classes map to themselves.
  for (int i = 0; i < k; ++i) {
    if (!assigned[static_cast<std::size_t>(i)]) remap[static_cast<std::size_t>(i)] = i;
  }
  validate_label_remap(remap, k);
  return remap;
}

}  // namespace semgan
