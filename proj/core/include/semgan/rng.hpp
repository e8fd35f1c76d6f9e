#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace semgan {

// Deterministic random source. All distribution math is hand-rolled on top of
// the mt19937_64 stream because the std:: distributions are
// implementation-defined and would break run-to-run reproducibility across
// toolchains. State round-trips through serialize()/deserialize() so training
// runs can be resumed bit-exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform();

  double uniform(double lo, double hi);

  // Uniform integer in [0, n); unbiased via rejection sampling. n must be > 0.
  std::int64_t uniform_int(std::int64_t n);

  // Standard normal via Box-Muller; one spare value is cached.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t raw() { return engine_(); }

  std::string serialize() const;
  void deserialize(const std::string& s);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace semgan
