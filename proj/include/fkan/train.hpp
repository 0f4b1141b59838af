#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fkan/adam.hpp"
#include "fkan/array.hpp"
#include "fkan/dataset.hpp"
#include "fkan/tape.hpp"

namespace fkan {

/// What the trainer needs from a coordinate network.
template <typename M>
concept CoordinateNetwork = requires(M m, const M cm, Tape& t, std::span<const Var> p, Var v,
                                     const Array2& x) {
  { m.parameters() } -> std::same_as<std::vector<Array2*>>;
  { cm.bind(t) } -> std::same_as<std::vector<Var>>;
  { cm.encode(x) } -> std::same_as<Array2>;
  { cm.forward_encoded(t, p, v) } -> std::same_as<Var>;
};

struct TrainConfig {
  int epochs = 500;
  std::size_t batch_size = 0;  // 0 = full batch
  double lr = 1e-4;
  std::uint64_t seed = 0;
  std::size_t metric_every = 1;
  // Above this many encoded entries the harmonic block is recomputed per
  // batch instead of cached for the whole dataset.
  std::size_t encode_cache_limit = std::size_t{1} << 27;
};

struct TrainRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double metric = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<TrainRecord> records;

  /// `step,loss,metric,seconds`; values printed with round-trip precision.
  void write_csv(std::ostream& os) const {
    os << "step,loss,metric,seconds\n";
    for (const auto& r : records) {
      os << r.step << ',' << format_real(r.loss) << ',' << format_real(r.metric) << ','
         << format_real(r.seconds) << '\n';
    }
  }

  static std::string format_real(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    if (std::isnan(x)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
  }
};

/// Raised when the training loss stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Scores predictions [d_o x N] for the full dataset, in dataset order.
using MetricFn = std::function<double(const Array2& predictions)>;

/// Inference over a coordinate set in fixed-size chunks.
template <CoordinateNetwork M>
Array2 predict(const M& model, const Array2& coords, Eigen::Index chunk = 16384) {
  Array2 out;
  for (Eigen::Index start = 0; start < coords.cols(); start += chunk) {
    const Eigen::Index n = std::min(chunk, coords.cols() - start);
    Tape t;
    std::vector<Var> params = model.bind(t, false);
    Var y = model.forward_encoded(t, params, t.constant(model.encode(coords.middleCols(start, n))));
    const Array2& Y = t.value(y);
    if (out.size() == 0) out.resize(Y.rows(), coords.cols());
    out.middleCols(start, n) = Y;
  }
  return out;
}

/// Resumable trainer state (everything beyond model parameters).
struct TrainerState {
  AdamState adam;
  std::uint64_t step = 0;
  std::string rng_state;        // engine state now
  std::string epoch_rng_state;  // engine state before the current epoch's shuffle
  double elapsed_seconds = 0.0;
};

/// Adam on the mean L2 loss over coordinate samples.
///
/// One epoch is one pass over every sample. With more than one batch per
/// epoch the sample order is reshuffled at every epoch start from a seeded
/// engine; a single batch covering the dataset keeps dataset order. Recorded
/// loss is the pre-update loss of the logged step.
template <CoordinateNetwork M>
class Trainer {
 public:
  Trainer(M& model, const SignalDataset& data, TrainConfig config, MetricFn metric = {})
      : model_(model), data_(data), config_(config), metric_(std::move(metric)),
        rng_(config.seed) {
    if (data.size() == 0) throw std::invalid_argument("Trainer: empty dataset");
    if (data.targets.cols() != data.size()) {
      throw ShapeError("Trainer: coords and targets disagree on sample count");
    }
    if (config_.epochs < 1) throw std::invalid_argument("Trainer: epochs must be >= 1");
    if (config_.metric_every == 0) config_.metric_every = 1;
    const auto n = static_cast<std::size_t>(data.size());
    batch_ = config_.batch_size == 0 ? n : std::min(config_.batch_size, n);
    steps_per_epoch_ = (n + batch_ - 1) / batch_;
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), Eigen::Index{0});
    state_.adam.lr = config_.lr;
    state_.rng_state = engine_to_string(rng_);
    state_.epoch_rng_state = state_.rng_state;

    const std::size_t encoded_rows = static_cast<std::size_t>(model_.encode(data.coords.leftCols(1)).rows());
    if (encoded_rows * n <= config_.encode_cache_limit) {
      encoded_ = model_.encode(data.coords);
      cache_whole_ = true;
    }
  }

  std::size_t steps_per_epoch() const { return steps_per_epoch_; }
  std::size_t batch_size() const { return batch_; }
  std::uint64_t total_steps() const {
    return static_cast<std::uint64_t>(config_.epochs) * steps_per_epoch_;
  }
  std::uint64_t step() const { return state_.step; }
  bool done() const { return state_.step >= total_steps(); }
  const TrainReport& report() const { return report_; }
  const TrainConfig& config() const { return config_; }

  TrainerState state() const {
    TrainerState s = state_;
    s.rng_state = engine_to_string(rng_);
    return s;
  }

  /// Continues from a saved state; the model must hold the matching parameters.
  void restore(const TrainerState& s) {
    state_ = s;
    rng_ = engine_from_string(s.rng_state);
    if (steps_per_epoch_ > 1 && state_.step % steps_per_epoch_ != 0) {
      std::mt19937_64 epoch_rng = engine_from_string(s.epoch_rng_state);
      shuffle_order(epoch_rng);
    }
  }

  /// Runs up to `max_steps` more steps. Appends a final full-dataset record
  /// once the last step completes.
  void run(std::uint64_t max_steps = std::numeric_limits<std::uint64_t>::max()) {
    const auto t0 = std::chrono::steady_clock::now();
    const double base = state_.elapsed_seconds;
    auto elapsed = [&] {
      return base + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    for (std::uint64_t i = 0; i < max_steps && !done(); ++i) {
      single_step(elapsed);
      state_.elapsed_seconds = elapsed();
    }
    if (done() && !finished_) {
      finished_ = true;
      Array2 pred = predict(model_, data_.coords);
      const double loss = (pred - data_.targets).squaredNorm() / static_cast<double>(data_.size());
      report_.records.push_back({state_.step, loss, metric_ ? metric_(pred) : 0.0, elapsed()});
      state_.elapsed_seconds = elapsed();
    }
  }

 private:
  template <typename Clock>
  void single_step(Clock& elapsed) {
    const std::uint64_t step = state_.step;
    const std::size_t in_epoch = step % steps_per_epoch_;
    if (in_epoch == 0 && steps_per_epoch_ > 1) {
      state_.epoch_rng_state = engine_to_string(rng_);
      shuffle_order(rng_);
    }
    const std::size_t start = in_epoch * batch_;
    const std::size_t count = std::min(batch_, order_.size() - start);
    const bool whole = count == order_.size() && steps_per_epoch_ == 1;

    Tape tape;
    std::vector<Var> params = model_.bind(tape);
    Var input;
    Array2 batch_targets;
    const bool lent = whole && cache_whole_;
    if (lent) {
      // Lend the cached block to the tape; returned below.
      input = tape.constant(std::move(encoded_));
    } else if (whole) {
      input = tape.constant(model_.encode(data_.coords));
    } else {
      const auto idx = std::span(order_).subspan(start, count);
      batch_targets = data_.targets(Eigen::all, idx);
      input = tape.constant(cache_whole_ ? Array2(encoded_(Eigen::all, idx))
                                            : model_.encode(data_.coords(Eigen::all, idx)));
    }
    Var pred = model_.forward_encoded(tape, params, input);
    Var loss = ops::l2_loss(tape, pred, whole ? data_.targets : batch_targets);
    const double loss_value = tape.value(loss)(0, 0);
    if (!std::isfinite(loss_value)) {
      if (lent) encoded_ = tape.take(input);
      std::ostringstream os;
      os << "training diverged: loss is " << loss_value << " at step " << step;
      throw DivergenceError(os.str());
    }
    tape.backward(loss);
    if (lent) encoded_ = tape.take(input);

    if (step % config_.metric_every == 0) {
      double metric = 0.0;
      if (metric_) metric = metric_(whole ? tape.value(pred) : predict(model_, data_.coords));
      report_.records.push_back({step, loss_value, metric, elapsed()});
    }

    std::vector<Array2> grads;
    grads.reserve(params.size());
    for (Var p : params) grads.push_back(tape.gradient(p));
    std::vector<Array2*> targets_ptr = model_.parameters();
    adam_step(targets_ptr, grads, state_.adam);
    ++state_.step;
  }

  void shuffle_order(std::mt19937_64& engine) {
    std::iota(order_.begin(), order_.end(), Eigen::Index{0});
    // Fisher-Yates with an explicit draw so the order does not depend on the
    // standard library's shuffle implementation.
    for (std::size_t i = order_.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(engine() % i);
      std::swap(order_[i - 1], order_[j]);
    }
  }

  static std::string engine_to_string(const std::mt19937_64& e) {
    std::ostringstream os;
    os << e;
    return os.str();
  }
  static std::mt19937_64 engine_from_string(const std::string& s) {
    std::mt19937_64 e;
    std::istringstream is(s);
    is >> e;
    if (!is) throw std::invalid_argument("Trainer: malformed RNG state");
    return e;
  }

  M& model_;
  const SignalDataset& data_;
  TrainConfig config_;
  MetricFn metric_;
  std::mt19937_64 rng_;
  std::size_t batch_ = 0;
  std::size_t steps_per_epoch_ = 1;
  std::vector<Eigen::Index> order_;
  Array2 encoded_;
  bool cache_whole_ = false;
  TrainerState state_;
  TrainReport report_;
  bool finished_ = false;
};

/// Trains `model` in place and returns the convergence report.
template <CoordinateNetwork M>
TrainReport train(M& model, const SignalDataset& data, const TrainConfig& config,
                  MetricFn metric = {}) {
  Trainer<M> trainer(model, data, config, std::move(metric));
  trainer.run();
  return trainer.report();
}

}  // namespace fkan
