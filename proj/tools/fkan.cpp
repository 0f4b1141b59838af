// fkan: train, evaluate and compare Fourier KAN coordinate networks.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "fkan/fkan.hpp"
#include "json.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace fs = std::filesystem;
using fkan::Array2;
using json = nlohmann::ordered_json;

namespace {

// Exit codes.
constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;
constexpr int kDiverged = 3;

// Datasets above this many samples train in shuffled mini-batches.
constexpr std::size_t kFullBatchLimit = 65536;
constexpr std::size_t kMiniBatch = 8192;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Preset {
  int latent_dim;
  int grid_size;
  std::vector<int> hidden;
  int image_epochs;
  int volume_epochs;
  int synthetic_width;
  int volume_resolution;
};

Preset preset(const std::string& scale) {
  if (scale == "desk") return {64, 32, {64, 64}, 2000, 200, 64, 48};
  if (scale == "paper") return {128, 250, {256, 256, 256, 512}, 500, 200, 512, 512};
  throw UsageError("--scale must be 'desk' or 'paper', got '" + scale + "'");
}

struct Options {
  std::string task = "synthetic";
  std::string input;
  std::string output_dir = "fkan_out";
  std::string scale = "desk";
  std::uint64_t seed = 0;
  int epochs = 0;
  double lr = 1e-4;
  int grid_size = 0;
  int latent_dim = 0;
  std::vector<int> hidden;
  double omega0 = 30.0;
  double input_scale = std::numbers::pi;
  std::string init = "fan_in_over_omega0";
  int width = 0;
  std::vector<double> freqs{2.0, 16.0};
  std::string shape = "sphere";
  int resolution = 0;
  double radius = 0.5;
  double major_radius = 0.5;
  double minor_radius = 0.2;
  std::size_t batch_size = 0;
  std::size_t metric_every = 0;
  double threshold = 0.5;
  double target = 0.0;
  std::string resume;
  std::uint64_t max_steps = 0;
  std::string checkpoint;
  std::string render;

  // Set when the corresponding flag (or config entry) was given.
  bool has_epochs = false, has_grid = false, has_latent = false, has_hidden = false;
  bool has_width = false, has_resolution = false, has_batch = false, has_metric_every = false;
  bool has_target = false, has_max_steps = false;
};

/// Coordinate/target pairs plus the reference signal metrics are computed on.
struct Task {
  std::string name;
  fkan::SignalDataset data;
  fkan::ImageBuffer image;      // image and synthetic tasks
  fkan::OccupancyVolume volume;  // volume task
  bool is_volume = false;

  int input_dim() const { return is_volume ? 3 : 2; }
  int output_dim() const { return is_volume ? 1 : image.channels; }
};

std::string image_extension(int channels) {
#ifdef FKAN_WITH_PNG
  (void)channels;
  return ".png";
#else
  return channels == 1 ? ".pgm" : ".ppm";
#endif
}

Task load_task(const Options& o) {
  const Preset p = preset(o.scale);
  Task t;
  t.name = o.task;
  if (o.task == "image") {
    if (o.input.empty()) throw UsageError("--task image requires --input <image file>");
    if (!fs::exists(o.input)) throw std::runtime_error("input file '" + o.input + "' does not exist");
    t.image = fkan::load_image(o.input);
    t.data = fkan::image_to_dataset(t.image);
  } else if (o.task == "synthetic") {
    const int w = o.has_width ? o.width : p.synthetic_width;
    if (w < 1) throw UsageError("--width must be >= 1");
    if (o.freqs.empty()) throw UsageError("--freqs needs at least one frequency");
    t.image = fkan::synthetic_image(w, w, o.freqs);
    t.data = fkan::image_to_dataset(t.image);
    t.data.kind = fkan::SignalKind::synthetic;
  } else if (o.task == "volume") {
    t.is_volume = true;
    if (!o.input.empty()) {
      if (!fs::exists(o.input)) throw std::runtime_error("input file '" + o.input + "' does not exist");
      t.volume = fkan::load_raw_volume(o.input);
      t.data = fkan::volume_to_sample(t.volume).dataset;
    } else {
      const int r = o.has_resolution ? o.resolution : p.volume_resolution;
      fkan::VolumeSample s;
      if (o.shape == "sphere") s = fkan::sdf_sphere_volume(r, o.radius);
      else if (o.shape == "torus") s = fkan::sdf_torus_volume(r, o.major_radius, o.minor_radius);
      else throw UsageError("--shape must be 'sphere' or 'torus', got '" + o.shape + "'");
      t.volume = std::move(s.volume);
      t.data = std::move(s.dataset);
    }
  } else {
    throw UsageError("--task must be one of image, volume, synthetic; got '" + o.task + "'");
  }
  return t;
}

fkan::ModelConfig model_config(const Options& o, const Task& t) {
  const Preset p = preset(o.scale);
  fkan::ModelConfig c;
  c.input_dim = t.input_dim();
  c.output_dim = t.output_dim();
  c.latent_dim = o.has_latent ? o.latent_dim : p.latent_dim;
  c.grid_size = o.has_grid ? o.grid_size : p.grid_size;
  c.hidden_widths = o.has_hidden ? o.hidden : p.hidden;
  c.omega0 = o.omega0;
  c.input_scale = o.input_scale;
  if (o.init == "fan_in") c.init = fkan::InitScheme::fan_in;
  else if (o.init == "fan_in_over_omega0") c.init = fkan::InitScheme::fan_in_over_omega0;
  else throw UsageError("--init must be 'fan_in' or 'fan_in_over_omega0'");
  c.seed = o.seed;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return c;
}

fkan::TrainConfig train_config(const Options& o, const Task& t) {
  const Preset p = preset(o.scale);
  fkan::TrainConfig c;
  c.epochs = o.has_epochs ? o.epochs : (t.is_volume ? p.volume_epochs : p.image_epochs);
  if (c.epochs < 1) throw UsageError("--epochs must be >= 1");
  if (!(o.lr > 0.0)) throw UsageError("--lr must be positive");
  c.lr = o.lr;
  c.seed = o.seed;
  const auto n = static_cast<std::size_t>(t.data.size());
  c.batch_size = o.has_batch ? o.batch_size : (n <= kFullBatchLimit ? 0 : kMiniBatch);
  if (o.has_metric_every) {
    c.metric_every = std::max<std::size_t>(1, o.metric_every);
  } else {
    // Full batch: every step. Mini-batch: every fifth epoch, since each
    // evaluation is a pass over the whole dataset.
    const std::size_t batch = c.batch_size == 0 ? n : std::min(c.batch_size, n);
    const std::size_t per_epoch = (n + batch - 1) / batch;
    c.metric_every = per_epoch == 1 ? 1 : 5 * per_epoch;
  }
  return c;
}

void check_compatible(const fkan::ModelConfig& c, const Task& t) {
  if (c.input_dim != t.input_dim() || c.output_dim != t.output_dim()) {
    throw std::runtime_error("model expects " + std::to_string(c.input_dim) + " -> " +
                             std::to_string(c.output_dim) + " but the " + t.name + " task is " +
                             std::to_string(t.input_dim()) + " -> " +
                             std::to_string(t.output_dim()));
  }
}

fkan::MetricFn metric_for(const Task& t, double threshold) {
  if (t.is_volume) {
    return [&t, threshold](const Array2& pred) {
      return fkan::iou(fkan::predictions_to_volume(pred, t.volume.resolution, threshold), t.volume);
    };
  }
  return [&t](const Array2& pred) {
    return fkan::psnr(fkan::clamped(fkan::values_to_image(pred, t.image.width, t.image.height)),
                      t.image);
  };
}

json number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return v;
}

/// Metrics of the final model and, optionally, the rendered reconstruction.
template <fkan::CoordinateNetwork M>
json evaluate(const M& model, const Task& t, double threshold, const fs::path& render) {
  const Array2 pred = fkan::predict(model, t.data.coords);
  json out;
  if (t.is_volume) {
    const auto vol = fkan::predictions_to_volume(pred, t.volume.resolution, threshold);
    out["iou"] = fkan::iou(vol, t.volume);
    if (!render.empty()) {
      fkan::write_file_atomic(render, [&](std::ostream& os) { fkan::write_raw_volume(os, vol); }, true);
    }
  } else {
    const auto img = fkan::clamped(fkan::values_to_image(pred, t.image.width, t.image.height));
    out["psnr"] = number(fkan::psnr(img, t.image));
    out["ssim"] = fkan::ssim(img, t.image);
    if (!render.empty()) fkan::save_image(img, render);
  }
  return out;
}

void write_json(const fs::path& path, const json& j) { fkan::write_text_atomic(path, j.dump(2) + "\n"); }

int cmd_train(const Options& o) {
  // Everything that can fail on bad input happens before the output
  // directory is touched.
  const Task task = load_task(o);
  fkan::Checkpoint ck;
  if (!o.resume.empty()) {
    ck = fkan::load_checkpoint(o.resume);
    check_compatible(ck.model.config(), task);
  } else {
    ck.model = fkan::init_model(model_config(o, task));
    ck.train = train_config(o, task);
  }
  const fs::path out = o.output_dir;
  const fs::path render = out / (task.is_volume ? "reconstruction.raw"
                                                : "reconstruction" + image_extension(task.image.channels));
  fs::create_directories(out);

  fkan::Trainer trainer(ck.model, task.data, ck.train, metric_for(task, o.threshold));
  if (!o.resume.empty()) trainer.restore(ck.trainer);
  std::cerr << "training " << fkan::count_params(ck.model.config()) << " parameters on "
            << task.data.size() << " samples: " << trainer.total_steps() << " steps, batch "
            << trainer.batch_size() << "\n";
  try {
    trainer.run(o.has_max_steps ? o.max_steps : std::numeric_limits<std::uint64_t>::max());
  } catch (const fkan::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDiverged;
  }
  ck.trainer = trainer.state();

  fkan::save_checkpoint(out / "checkpoint.fkan", ck);
  fkan::write_file_atomic(out / "convergence.csv",
                          [&](std::ostream& os) { trainer.report().write_csv(os); });
  json metrics = evaluate(ck.model, task, o.threshold, render);
  metrics["param_count"] = fkan::count_params(ck.model.config());
  metrics["steps"] = trainer.step();
  metrics["complete"] = trainer.done();
  metrics["wall_seconds"] = ck.trainer.elapsed_seconds;
  write_json(out / "metrics.json", metrics);
  std::cout << metrics.dump(2) << "\n";
  return kOk;
}

int cmd_eval(const Options& o) {
  if (o.checkpoint.empty()) throw UsageError("eval requires --checkpoint <file>");
  const Task task = load_task(o);
  const fkan::Checkpoint ck = fkan::load_checkpoint(o.checkpoint);
  check_compatible(ck.model.config(), task);
  json metrics = evaluate(ck.model, task, o.threshold, o.render);
  metrics["param_count"] = fkan::count_params(ck.model.config());
  std::cout << metrics.dump(2) << "\n";
  return kOk;
}

/// First logged step whose metric reaches `target`, if any.
std::optional<std::size_t> steps_to(const fkan::TrainReport& r, double target) {
  for (const auto& rec : r.records)
    if (rec.metric >= target) return rec.step;
  return std::nullopt;
}

int cmd_compare(const Options& o) {
  const Task task = load_task(o);
  const fkan::ModelConfig mc = model_config(o, task);
  const fkan::TrainConfig tc = train_config(o, task);
  int width = 0;
  try {
    width = fkan::matched_first_width(mc);
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  const fs::path out = o.output_dir;
  fs::create_directories(out);

  fkan::Model fkan_model = fkan::init_model(mc);
  fkan::MlpModel mlp = fkan::init_mlp(mc, width, mc.seed);
  const fkan::MetricFn metric = metric_for(task, o.threshold);
  fkan::TrainReport fkan_report, mlp_report;
  std::exception_ptr mlp_error;

  auto run_mlp = [&] {
    try {
      mlp_report = fkan::train(mlp, task.data, tc, metric);
    } catch (...) {
      mlp_error = std::current_exception();
    }
  };
  int threads = 2;
  if (const char* env = std::getenv("FKAN_THREADS")) threads = std::max(1, std::atoi(env));
  std::cerr << "compare: FKAN " << fkan::count_params(mc) << " vs tanh-MLP "
            << fkan::count_mlp_params(mc, width) << " parameters (first width " << width << "), "
            << (threads >= 2 ? "2 threads" : "1 thread") << "\n";
  try {
    if (threads >= 2) {
      std::thread worker(run_mlp);
      try {
        fkan_report = fkan::train(fkan_model, task.data, tc, metric);
      } catch (...) {
        worker.join();
        throw;
      }
      worker.join();
    } else {
      fkan_report = fkan::train(fkan_model, task.data, tc, metric);
      run_mlp();
    }
    if (mlp_error) std::rethrow_exception(mlp_error);
  } catch (const fkan::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDiverged;
  }

  fkan::write_file_atomic(out / "comparison.csv", [&](std::ostream& os) {
    os << "model,step,loss,metric,seconds\n";
    for (const auto& [name, rep] : {std::pair{"fkan", &fkan_report}, std::pair{"tanh_mlp", &mlp_report}}) {
      for (const auto& r : rep->records) {
        os << name << ',' << r.step << ',' << fkan::TrainReport::format_real(r.loss) << ','
           << fkan::TrainReport::format_real(r.metric) << ','
           << fkan::TrainReport::format_real(r.seconds) << '\n';
      }
    }
  });

  const double target = o.has_target ? o.target : (task.is_volume ? 0.95 : 30.0);
  const std::string metric_name = task.is_volume ? "iou" : "psnr";
  json table = json::array();
  auto row = [&](const std::string& name, std::size_t params, const fkan::TrainReport& rep) {
    json r;
    r["model"] = name;
    r["param_count"] = params;
    r["final_loss"] = number(rep.records.back().loss);
    r["final_" + metric_name] = number(rep.records.back().metric);
    const auto s = steps_to(rep, target);
    r["steps_to_target"] = s ? json(*s) : json(nullptr);
    r["wall_seconds"] = rep.records.back().seconds;
    table.push_back(r);
  };
  row("fkan", fkan::count_params(mc), fkan_report);
  row("tanh_mlp", mlp.param_count(), mlp_report);
  json summary;
  summary["target_" + metric_name] = target;
  summary["models"] = table;
  write_json(out / "comparison.json", summary);

  std::cout << std::left << std::setw(10) << "model" << std::setw(10) << "params" << std::setw(14)
            << "final loss" << std::setw(14) << ("final " + metric_name) << "steps to " << target
            << "\n";
  for (const auto& r : table) {
    const auto& s = r["steps_to_target"];
    auto short_form = [](const json& v) {
      if (!v.is_number()) return v.get<std::string>();
      std::ostringstream os;
      os << std::setprecision(5) << v.get<double>();
      return os.str();
    };
    std::cout << std::left << std::setw(10) << r["model"].get<std::string>() << std::setw(10)
              << r["param_count"].get<std::size_t>() << std::setw(14) << short_form(r["final_loss"])
              << std::setw(14) << short_form(r["final_" + metric_name]) << (s.is_null() ? std::string("not reached") : s.dump()) << "\n";
  }
  return kOk;
}

void add_data_flags(CLI::App* app, Options& o) {
  app->add_option("--task", o.task, "image | volume | synthetic")->capture_default_str();
  app->add_option("--input", o.input, "image file (.png/.pgm/.ppm) or raw volume");
  app->add_option("--scale,--epochs-scale", o.scale, "desk | paper preset")->capture_default_str();
  app->add_option("--width", o.width, "synthetic image side length")
      ->each([&](const std::string&) { o.has_width = true; });
  app->add_option("--freqs", o.freqs, "synthetic frequencies")->delimiter(',')->capture_default_str();
  app->add_option("--shape", o.shape, "sphere | torus (volume task without --input)")
      ->capture_default_str();
  app->add_option("--resolution", o.resolution, "volume grid side length")
      ->each([&](const std::string&) { o.has_resolution = true; });
  app->add_option("--radius", o.radius, "sphere radius in (0, 1)")->capture_default_str();
  app->add_option("--major-radius", o.major_radius, "torus major radius")->capture_default_str();
  app->add_option("--minor-radius", o.minor_radius, "torus minor radius")->capture_default_str();
  app->add_option("--threshold", o.threshold, "occupancy threshold")->capture_default_str();
}

void add_model_flags(CLI::App* app, Options& o) {
  app->add_option("--output-dir", o.output_dir, "directory for artifacts")->capture_default_str();
  app->add_option("--seed", o.seed, "initialization and shuffling seed")->capture_default_str();
  app->add_option("--epochs", o.epochs, "passes over the dataset")
      ->each([&](const std::string&) { o.has_epochs = true; });
  app->add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
  app->add_option("--grid-size", o.grid_size, "harmonics K per edge function")
      ->each([&](const std::string&) { o.has_grid = true; });
  app->add_option("--latent-dim", o.latent_dim, "Fourier block width H1")
      ->each([&](const std::string&) { o.has_latent = true; });
  app->add_option("--hidden", o.hidden, "hidden widths, e.g. 64,64")
      ->delimiter(',')
      ->each([&](const std::string&) { o.has_hidden = true; });
  app->add_option("--omega0", o.omega0, "tanh frequency scale")->capture_default_str();
  app->add_option("--input-scale", o.input_scale, "coordinate multiplier before the Fourier layer")
      ->capture_default_str();
  app->add_option("--init", o.init, "fan_in | fan_in_over_omega0")->capture_default_str();
  app->add_option("--batch-size", o.batch_size, "samples per step, 0 = full batch (default: auto)")
      ->each([&](const std::string&) { o.has_batch = true; });
  app->add_option("--metric-every", o.metric_every, "log every N steps (default: auto)")
      ->each([&](const std::string&) { o.has_metric_every = true; });
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Per-step temporaries are large and short-lived; keep them out of mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  Options o;
  CLI::App app{"Fourier KAN implicit neural representations"};
  app.set_config("--config", "", "TOML/INI file with flag values; command-line flags win");
  app.require_subcommand(1);

  CLI::App* train = app.add_subcommand("train", "fit a model and write checkpoint, curves and metrics");
  add_data_flags(train, o);
  add_model_flags(train, o);
  train->add_option("--resume", o.resume, "continue from a checkpoint");
  train->add_option("--max-steps", o.max_steps, "stop after this many steps (checkpoint is resumable)")
      ->each([&](const std::string&) { o.has_max_steps = true; });

  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint against a signal");
  add_data_flags(eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  eval->add_option("--render", o.render, "write the reconstruction to this file");

  CLI::App* compare = app.add_subcommand("compare", "FKAN vs parameter-matched tanh-MLP");
  add_data_flags(compare, o);
  add_model_flags(compare, o);
  compare->add_option("--target", o.target, "metric level for the steps-to-target column")
      ->each([&](const std::string&) { o.has_target = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (train->parsed()) return cmd_train(o);
    if (eval->parsed()) return cmd_eval(o);
    return cmd_compare(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
