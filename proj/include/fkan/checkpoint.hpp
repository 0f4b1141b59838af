#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "fkan/io.hpp"
#include "fkan/model.hpp"
#include "fkan/train.hpp"

namespace fkan {

// Binary checkpoint layout, all integers and floats little-endian:
//
//   "FKAN" u32 version
//   model config   u32 d_i, d_o, H1, K, L, L x u32 width, f64 omega0,
//                  f64 input_scale, u32 init, u64 seed
//   train config   u32 epochs, u64 batch, f64 lr, u64 seed, u64 metric_every
//   parameters     u32 count, then per array: u64 rows, u64 cols, rows*cols f64
//   adam           u64 step_count, f64 lr, beta1, beta2, epsilon,
//                  u32 count, arrays (m then v, interleaved per parameter)
//   trainer        u64 step, f64 elapsed, str rng, str epoch_rng
//   u64 FNV-1a hash of every preceding byte
//
// Arrays appear in Model::parameters() order. Strings are u64 length + bytes.

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  Model model;
  TrainConfig train;
  TrainerState trainer;

  friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
    auto pa = a.model.parameters();
    auto pb = b.model.parameters();
    if (!(a.model.config() == b.model.config()) || pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      if (!same_bits(*pa[i], *pb[i])) return false;
    }
    const auto& x = a.trainer;
    const auto& y = b.trainer;
    if (x.step != y.step || x.rng_state != y.rng_state || x.epoch_rng_state != y.epoch_rng_state ||
        std::bit_cast<std::uint64_t>(x.elapsed_seconds) != std::bit_cast<std::uint64_t>(y.elapsed_seconds)) {
      return false;
    }
    if (x.adam.step_count != y.adam.step_count || x.adam.m.size() != y.adam.m.size() ||
        x.adam.lr != y.adam.lr || x.adam.beta1 != y.adam.beta1 || x.adam.beta2 != y.adam.beta2 ||
        x.adam.epsilon != y.adam.epsilon) {
      return false;
    }
    for (std::size_t i = 0; i < x.adam.m.size(); ++i) {
      if (!same_bits(x.adam.m[i], y.adam.m[i]) || !same_bits(x.adam.v[i], y.adam.v[i])) return false;
    }
    return a.train.epochs == b.train.epochs && a.train.batch_size == b.train.batch_size &&
           a.train.lr == b.train.lr && a.train.seed == b.train.seed &&
           a.train.metric_every == b.train.metric_every;
  }

  static bool same_bits(const Array2& a, const Array2& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
  }
};

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void str(const std::string& s) {
    u64(s.size());
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void array(const Array2& a) {
    u64(static_cast<std::uint64_t>(a.rows()));
    u64(static_cast<std::uint64_t>(a.cols()));
    for (Eigen::Index i = 0; i < a.size(); ++i) f64(a.data()[i]);
  }
  std::vector<char>& bytes() { return bytes_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<char>& b, std::size_t end) : b_(b), end_(end) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  Array2 array(Eigen::Index rows, Eigen::Index cols, const char* what) {
    const std::uint64_t r = u64();
    const std::uint64_t c = u64();
    if (r != static_cast<std::uint64_t>(rows) || c != static_cast<std::uint64_t>(cols)) {
      throw CheckpointError(std::string("checkpoint: ") + what + " has shape [" +
                            std::to_string(r) + " x " + std::to_string(c) + "], expected [" +
                            std::to_string(rows) + " x " + std::to_string(cols) + "]");
    }
    need(r * c * 8);
    Array2 a(rows, cols);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = f64();
    return a;
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > end_ - pos_) throw CheckpointError("checkpoint: truncated data");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::uint64_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::vector<char>& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

inline std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

inline std::vector<char> encode_checkpoint(const Checkpoint& ck) {
  detail::ByteWriter w;
  for (char c : {'F', 'K', 'A', 'N'}) w.bytes().push_back(c);
  w.u32(kCheckpointVersion);

  const ModelConfig& mc = ck.model.config();
  w.u32(static_cast<std::uint32_t>(mc.input_dim));
  w.u32(static_cast<std::uint32_t>(mc.output_dim));
  w.u32(static_cast<std::uint32_t>(mc.latent_dim));
  w.u32(static_cast<std::uint32_t>(mc.grid_size));
  w.u32(static_cast<std::uint32_t>(mc.hidden_widths.size()));
  for (int width : mc.hidden_widths) w.u32(static_cast<std::uint32_t>(width));
  w.f64(mc.omega0);
  w.f64(mc.input_scale);
  w.u32(static_cast<std::uint32_t>(mc.init));
  w.u64(mc.seed);

  w.u32(static_cast<std::uint32_t>(ck.train.epochs));
  w.u64(ck.train.batch_size);
  w.f64(ck.train.lr);
  w.u64(ck.train.seed);
  w.u64(ck.train.metric_every);

  const auto params = ck.model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const Array2* p : params) w.array(*p);

  const AdamState& adam = ck.trainer.adam;
  w.u64(adam.step_count);
  w.f64(adam.lr);
  w.f64(adam.beta1);
  w.f64(adam.beta2);
  w.f64(adam.epsilon);
  w.u32(static_cast<std::uint32_t>(adam.m.size()));
  for (std::size_t i = 0; i < adam.m.size(); ++i) {
    w.array(adam.m[i]);
    w.array(adam.v[i]);
  }

  w.u64(ck.trainer.step);
  w.f64(ck.trainer.elapsed_seconds);
  w.str(ck.trainer.rng_state);
  w.str(ck.trainer.epoch_rng_state);

  const std::uint64_t hash = detail::fnv1a(w.bytes().data(), w.bytes().size());
  w.u64(hash);
  return std::move(w.bytes());
}

inline Checkpoint decode_checkpoint(const std::vector<char>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "FKAN", 4) != 0) {
    throw CheckpointError("checkpoint: bad magic (not an FKAN checkpoint)");
  }
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) {
    stored |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[body + i])) << (8 * i);
  }
  detail::ByteReader r(bytes, body);
  (void)r.u32();  // magic
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  if (stored != detail::fnv1a(bytes.data(), body)) {
    throw CheckpointError("checkpoint: checksum mismatch (file is corrupted)");
  }

  ModelConfig mc;
  mc.input_dim = static_cast<int>(r.u32());
  mc.output_dim = static_cast<int>(r.u32());
  mc.latent_dim = static_cast<int>(r.u32());
  mc.grid_size = static_cast<int>(r.u32());
  const std::uint32_t layers = r.u32();
  if (layers > 1024) throw CheckpointError("checkpoint: implausible hidden layer count");
  mc.hidden_widths.clear();
  for (std::uint32_t i = 0; i < layers; ++i) mc.hidden_widths.push_back(static_cast<int>(r.u32()));
  mc.omega0 = r.f64();
  mc.input_scale = r.f64();
  const std::uint32_t init = r.u32();
  if (init > static_cast<std::uint32_t>(InitScheme::fan_in_over_omega0)) {
    throw CheckpointError("checkpoint: unknown init scheme " + std::to_string(init));
  }
  mc.init = static_cast<InitScheme>(init);
  mc.seed = r.u64();

  Checkpoint ck;
  ck.train.epochs = static_cast<int>(r.u32());
  ck.train.batch_size = r.u64();
  ck.train.lr = r.f64();
  ck.train.seed = r.u64();
  ck.train.metric_every = r.u64();

  try {
    ck.model = Model(mc);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: invalid model config: ") + e.what());
  }
  auto params = ck.model.parameters();
  if (r.u32() != params.size()) throw CheckpointError("checkpoint: parameter array count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    *params[i] = r.array(params[i]->rows(), params[i]->cols(), "parameter array");
  }

  AdamState& adam = ck.trainer.adam;
  adam.step_count = r.u64();
  adam.lr = r.f64();
  adam.beta1 = r.f64();
  adam.beta2 = r.f64();
  adam.epsilon = r.f64();
  const std::uint32_t moments = r.u32();
  if (moments != 0 && moments != params.size()) {
    throw CheckpointError("checkpoint: optimizer state does not match parameter count");
  }
  for (std::uint32_t i = 0; i < moments; ++i) {
    adam.m.push_back(r.array(params[i]->rows(), params[i]->cols(), "adam first moment"));
    adam.v.push_back(r.array(params[i]->rows(), params[i]->cols(), "adam second moment"));
  }

  ck.trainer.step = r.u64();
  ck.trainer.elapsed_seconds = r.f64();
  ck.trainer.rng_state = r.str();
  ck.trainer.epoch_rng_state = r.str();
  if (r.position() != body) throw CheckpointError("checkpoint: trailing bytes");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const std::vector<char> bytes = encode_checkpoint(ck);
  write_file_atomic(
      path, [&](std::ostream& os) { os.write(bytes.data(), static_cast<std::streamsize>(bytes.size())); },
      true);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace fkan
