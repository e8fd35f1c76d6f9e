#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semgan/losses.hpp"
#include "semgan/models.hpp"

namespace semgan {

// Flat key=value experiment configuration ('#' starts a comment). Every key
// is schema-checked: unknown keys, type errors and out-of-range values are
// rejected before any work starts. Flat keys keep ablation overlays to
// one-line diffs.
class RunConfig {
 public:
  RunConfig();  // all defaults

  static RunConfig load(const std::string& path);
  static RunConfig parse(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;

  // Canonical serialization in schema order.
  std::string to_string() const;
  void save(const std::string& path) const;

  bool operator==(const RunConfig& other) const { return values_ == other.values_; }

  static const std::vector<std::string>& keys();

 private:
  std::map<std::string, std::string> values_;
};

// Typed views over the flat document.
GeneratorCfg generator_cfg(const RunConfig& cfg);
DiscriminatorCfg discriminator_cfg(const RunConfig& cfg);
SegmenterCfg segmenter_cfg(const RunConfig& cfg);
LossWeights loss_weights(const RunConfig& cfg);

// Parses "0:1,1:0"-style permutations; empty string -> nullopt.
std::optional<LabelRemap> label_remap_from_config(const RunConfig& cfg);

}  // namespace semgan
