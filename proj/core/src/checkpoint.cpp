#include "semgan/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace semgan {

namespace {

constexpr char kMagic[8] = {'S', 'E', 'M', 'G', 'A', 'N', 'C', 'K'};

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_i64(std::ostream& os, std::int64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void write_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }

void write_string(std::ostream& os, const std::string& s) {
  write_i64(os, static_cast<std::int64_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void write_tensor(std::ostream& os, const Tensor& t) {
  write_u32(os, static_cast<std::uint32_t>(t.ndim()));
  for (int i = 0; i < t.ndim(); ++i) write_u32(os, static_cast<std::uint32_t>(t.dim(i)));
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(float)));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
std::int64_t read_i64(std::istream& is) {
  std::int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
double read_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

std::string read_string(std::istream& is) {
  const std::int64_t n = read_i64(is);
  if (n < 0 || n > (1 << 28)) throw std::runtime_error("checkpoint: corrupt string length");
  std::string s(static_cast<std::size_t>(n), '\0');
  is.read(s.data(), n);
  return s;
}

Tensor read_tensor(std::istream& is) {
  const std::uint32_t ndim = read_u32(is);
  if (ndim > 4) throw std::runtime_error("checkpoint: corrupt tensor rank");
  std::vector<int> shape;
  for (std::uint32_t i = 0; i < ndim; ++i) shape.push_back(static_cast<int>(read_u32(is)));
  Tensor t(shape);
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(float)));
  return t;
}

void read_tensor_into(std::istream& is, Tensor& dst, const std::string& what) {
  Tensor t = read_tensor(is);
  if (!t.same_shape(dst)) {
    throw std::runtime_error("checkpoint: shape mismatch for " + what + " (stored " +
                             t.shape_str() + ", expected " + dst.shape_str() + ")");
  }
  dst = std::move(t);
}

void write_params(std::ostream& os, const std::vector<nn::Param*>& params,
                  const std::vector<Tensor*>& state) {
  write_i64(os, static_cast<std::int64_t>(params.size()));
  for (const nn::Param* p : params) {
    write_string(os, p->name);
    write_tensor(os, p->value);
  }
  write_i64(os, static_cast<std::int64_t>(state.size()));
  for (const Tensor* t : state) write_tensor(os, *t);
}

void read_params(std::istream& is, const std::vector<nn::Param*>& params,
                 const std::vector<Tensor*>& state) {
  const std::int64_t n = read_i64(is);
  if (n != static_cast<std::int64_t>(params.size())) {
    throw std::runtime_error("checkpoint: parameter count mismatch");
  }
  for (nn::Param* p : params) {
    const std::string name = read_string(is);
    if (name != p->name) {
      throw std::runtime_error("checkpoint: parameter order mismatch (" + name + " vs " +
                               p->name + ")");
    }
    read_tensor_into(is, p->value, p->name);
  }
  const std::int64_t ns = read_i64(is);
  if (ns != static_cast<std::int64_t>(state.size())) {
    throw std::runtime_error("checkpoint: state tensor count mismatch");
  }
  for (Tensor* t : state) read_tensor_into(is, *t, "state");
}

void write_adam(std::ostream& os, nn::Adam& opt) {
  write_i64(os, opt.steps());
  write_i64(os, static_cast<std::int64_t>(opt.moment1().size()));
  for (const Tensor& m : opt.moment1()) write_tensor(os, m);
  for (const Tensor& v : opt.moment2()) write_tensor(os, v);
}

void read_adam(std::istream& is, nn::Adam& opt) {
  opt.set_steps(read_i64(is));
  const std::int64_t n = read_i64(is);
  if (n != static_cast<std::int64_t>(opt.moment1().size())) {
    throw std::runtime_error("checkpoint: optimizer slot count mismatch");
  }
  for (Tensor& m : opt.moment1()) read_tensor_into(is, m, "adam.m");
  for (Tensor& v : opt.moment2()) read_tensor_into(is, v, "adam.v");
}

void write_pool(std::ostream& os, const ImagePool& pool) {
  write_u32(os, static_cast<std::uint32_t>(pool.capacity()));
  write_i64(os, static_cast<std::int64_t>(pool.buffer().size()));
  for (const Tensor& t : pool.buffer()) write_tensor(os, t);
}

void read_pool(std::istream& is, ImagePool& pool) {
  const std::uint32_t cap = read_u32(is);
  if (static_cast<int>(cap) != pool.capacity()) {
    throw std::runtime_error("checkpoint: pool capacity mismatch");
  }
  const std::int64_t n = read_i64(is);
  pool.buffer().clear();
  for (std::int64_t i = 0; i < n; ++i) pool.buffer().push_back(read_tensor(is));
}

void check_magic(std::istream& is, const std::string& path, const std::string& expected_kind) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: " + path + " is not a checkpoint file");
  }
  const std::uint32_t version = read_u32(is);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::string kind = read_string(is);
  if (kind != expected_kind) {
    throw std::runtime_error("checkpoint: " + path + " holds a '" + kind + "' model, expected '" +
                             expected_kind + "'");
  }
}

// Atomic write: temp file in the same directory, then rename.
class AtomicFile {
 public:
  explicit AtomicFile(const std::string& path)
      : final_path_(path), tmp_path_(path + ".tmp"), out_(tmp_path_, std::ios::binary) {
    if (!out_) throw std::runtime_error("checkpoint: cannot write " + tmp_path_);
  }
  std::ofstream& stream() { return out_; }
  void commit() {
    out_.close();
    fs::rename(tmp_path_, final_path_);
  }

 private:
  std::string final_path_, tmp_path_;
  std::ofstream out_;
};

}  // namespace

void save_train_checkpoint(const std::string& path, TrainState& state, const RunConfig& cfg) {
  AtomicFile file(path);
  std::ofstream& os = file.stream();
  os.write(kMagic, 8);
  write_u32(os, kCheckpointVersion);
  write_string(os, "gan");
  write_string(os, cfg.to_string());
  write_i64(os, state.epoch);
  write_i64(os, state.step);
  write_f64(os, state.val_acc_a);
  write_f64(os, state.val_acc_b);
  write_u32(os, state.warmup_latched_off ? 1 : 0);
  write_string(os, state.rng_data.serialize());
  write_string(os, state.rng_aug.serialize());
  write_string(os, state.rng_dropout.serialize());
  write_string(os, state.rng_pool.serialize());
  write_pool(os, state.pool_fake_a);
  write_pool(os, state.pool_fake_b);
  write_params(os, state.g_ab->params(), state.g_ab->state());
  write_params(os, state.g_ba->params(), state.g_ba->state());
  write_params(os, state.d_a->params(), state.d_a->state());
  write_params(os, state.d_b->params(), state.d_b->state());
  write_params(os, state.s_a->params(), state.s_a->state());
  write_params(os, state.s_b->params(), state.s_b->state());
  write_adam(os, state.opt_g);
  write_adam(os, state.opt_d);
  write_adam(os, state.opt_s);
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
  file.commit();
}

RunConfig load_train_checkpoint(const std::string& path, TrainState& state) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  check_magic(is, path, "gan");
  const RunConfig cfg = RunConfig::parse(read_string(is));
  state.epoch = static_cast<int>(read_i64(is));
  state.step = read_i64(is);
  state.val_acc_a = read_f64(is);
  state.val_acc_b = read_f64(is);
  state.warmup_latched_off = read_u32(is) != 0;
  state.rng_data.deserialize(read_string(is));
  state.rng_aug.deserialize(read_string(is));
  state.rng_dropout.deserialize(read_string(is));
  state.rng_pool.deserialize(read_string(is));
  read_pool(is, state.pool_fake_a);
  read_pool(is, state.pool_fake_b);
  read_params(is, state.g_ab->params(), state.g_ab->state());
  read_params(is, state.g_ba->params(), state.g_ba->state());
  read_params(is, state.d_a->params(), state.d_a->state());
  read_params(is, state.d_b->params(), state.d_b->state());
  read_params(is, state.s_a->params(), state.s_a->state());
  read_params(is, state.s_b->params(), state.s_b->state());
  read_adam(is, state.opt_g);
  read_adam(is, state.opt_d);
  read_adam(is, state.opt_s);
  if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
  return cfg;
}

RunConfig peek_checkpoint_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  check_magic(is, path, "gan");
  return RunConfig::parse(read_string(is));
}

void save_segmenter_checkpoint(const std::string& path, Segmenter& segmenter) {
  AtomicFile file(path);
  std::ofstream& os = file.stream();
  os.write(kMagic, 8);
  write_u32(os, kCheckpointVersion);
  write_string(os, "segmenter");
  write_u32(os, static_cast<std::uint32_t>(segmenter.cfg().num_classes));
  write_u32(os, segmenter.cfg().preset == SegPreset::kDesk ? 0 : 1);
  write_u32(os, static_cast<std::uint32_t>(segmenter.cfg().base_width));
  write_params(os, segmenter.params(), segmenter.state());
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
  file.commit();
}

SegmenterCfg peek_segmenter_cfg(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  check_magic(is, path, "segmenter");
  SegmenterCfg cfg;
  cfg.num_classes = static_cast<int>(read_u32(is));
  cfg.preset = read_u32(is) == 0 ? SegPreset::kDesk : SegPreset::kFull;
  cfg.base_width = static_cast<int>(read_u32(is));
  return cfg;
}

void load_segmenter_checkpoint(const std::string& path, Segmenter& segmenter) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  check_magic(is, path, "segmenter");
  SegmenterCfg cfg;
  cfg.num_classes = static_cast<int>(read_u32(is));
  cfg.preset = read_u32(is) == 0 ? SegPreset::kDesk : SegPreset::kFull;
  cfg.base_width = static_cast<int>(read_u32(is));
  if (!(cfg == segmenter.cfg())) {
    throw std::runtime_error("checkpoint: segmenter config mismatch for " + path);
  }
  read_params(is, segmenter.params(), segmenter.state());
  if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
}

}  // namespace semgan
