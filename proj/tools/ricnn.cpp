#include <CLI11.hpp>
#include <charconv>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "ricnn/checkpoint.hpp"
#include "ricnn/dataset.hpp"
#include "ricnn/results.hpp"
#include "ricnn/selfcheck.hpp"
#include "ricnn/train.hpp"

extern "C" void openblas_set_num_threads(int);

namespace fs = std::filesystem;
using namespace ricnn;

namespace {

std::string canon_arch(const std::string& arch) {
  if (arch == "paper6" || arch == "six") return "six";
  if (arch == "desk") return "desk";
  throw UsageError("unknown architecture '" + arch + "' (expected paper6|desk)");
}

Calibrator cal_arg(const std::string& name) {
  try {
    return parse_calibrator(name);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

// defaults < config file < flags
void overlay_config_file(TrainConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config " + path + " must be a JSON object");
  try {
    for (const auto& [key, val] : j.items()) {
      if (key == "epochs") cfg.epochs = val.get<int>();
      else if (key == "batch") cfg.batch = val.get<int>();
      else if (key == "lr") cfg.lr = val.get<double>();
      else if (key == "decay_factor") cfg.decay_factor = val.get<double>();
      else if (key == "decay_interval") cfg.decay_interval = val.get<int>();
      else if (key == "seed") cfg.seed = val.get<uint64_t>();
      else if (key == "precision") cfg.precision = val.get<std::string>();
      else if (key == "calibrator") cfg.cal = cal_arg(val.get<std::string>());
      else if (key == "arch") cfg.arch = val.get<std::string>();
      else if (key == "train_size") cfg.train_size = val.get<int64_t>();
      else if (key == "augment_rotate") cfg.augment_rotate = val.get<bool>();
      else if (key == "data_dir") cfg.data_dir = val.get<std::string>();
      else if (key == "out_dir") cfg.out_dir = val.get<std::string>();
      else throw UsageError("config " + path + ": unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
}

std::vector<double> parse_angles(const std::string& spec) {
  double v[3];
  size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    const size_t next = i < 2 ? spec.find(':', pos) : spec.size();
    if (next == std::string::npos)
      throw UsageError("angle spec '" + spec + "' is not start:stop:step");
    const std::string cell = spec.substr(pos, next - pos);
    const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v[i]);
    if (r.ec != std::errc{} || r.ptr != cell.data() + cell.size())
      throw UsageError("bad number '" + cell + "' in angle spec");
    pos = next + 1;
  }
  const double start = v[0], stop = v[1], step = v[2];
  if (!(step > 0)) throw UsageError("angle step must be > 0");
  if (start < 0 || stop >= 360 || stop < start)
    throw UsageError("angle range must satisfy 0 <= start <= stop < 360");
  std::vector<double> out;
  const int64_t count =
      static_cast<int64_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  for (int64_t i = 0; i < count; ++i) out.push_back(start + step * static_cast<double>(i));
  return out;
}

DatasetBundle load_split(const std::string& dir, bool train_split) {
  const std::string img = train_split ? "/train-images-idx3-ubyte" : "/t10k-images-idx3-ubyte";
  const std::string lbl = train_split ? "/train-labels-idx1-ubyte" : "/t10k-labels-idx1-ubyte";
  const auto pick = [&](const std::string& stem) {
    if (fs::exists(dir + stem + ".gz")) return dir + stem + ".gz";
    return dir + stem;
  };
  DatasetBundle b = load_idx(pick(img), pick(lbl));
  b.split = train_split ? "train" : "test";
  return b;
}

template <class T>
int train_with(TrainConfig cfg, const std::string& config_path) {
  const auto t0 = std::chrono::steady_clock::now();
  DatasetBundle data = load_split(cfg.data_dir, true);
  if (cfg.train_size > 0 && cfg.train_size < data.size())
    data = take(data, cfg.train_size);
  std::printf("training %s/%s on %lld examples (%s, seed %llu)\n",
              cfg.arch.c_str(), to_string(cfg.cal),
              static_cast<long long>(data.size()), cfg.precision.c_str(),
              static_cast<unsigned long long>(cfg.seed));
  std::fflush(stdout);

  Network<T> net(make_graph(canon_arch(cfg.arch), cfg.cal, 1), {1, 1, 28, 28});
  std::vector<EpochRow> rows = train(net, data, cfg, [&](const EpochRow& r) {
    std::printf("epoch %d/%d  loss %.4f  acc %.4f  lr %s  (%.1fs)\n",
                r.epoch + 1, cfg.epochs, r.train_loss, r.train_acc,
                format_double(r.lr).c_str(), r.seconds);
    std::fflush(stdout);
  });

  fs::create_directories(cfg.out_dir);
  const std::string stem = (fs::path(cfg.out_dir) / "model").string();
  CheckpointMeta meta;
  meta.arch = canon_arch(cfg.arch);
  meta.cal = cfg.cal;
  meta.seed = cfg.seed;
  save_checkpoint(stem, net, meta);
  const std::string csv = (fs::path(cfg.out_dir) / "epochs.csv").string();
  write_epoch_log(csv, rows);

  ResultContext ctx;
  ctx.command = "train";
  ctx.cfg = cfg;
  ctx.model_path = stem;
  ctx.checkpoint_sha256 = sha256_file(stem + ".bin");
  if (!config_path.empty()) ctx.config_file_sha256 = sha256_file(config_path);
  ctx.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ctx.artifacts = {stem + ".json", stem + ".bin", csv};
  const std::string manifest = (fs::path(cfg.out_dir) / "run.json").string();
  write_run_manifest(manifest, ctx);
  std::printf("wrote %s (+.bin), %s, %s\n", (stem + ".json").c_str(),
              csv.c_str(), manifest.c_str());
  return 0;
}

int cmd_train(TrainConfig cfg, const std::string& config_path) {
  canon_arch(cfg.arch);  // reject bad names before any work
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  if (cfg.precision == "f64") return train_with<double>(cfg, config_path);
  return train_with<float>(cfg, config_path);
}

template <class T>
std::vector<SweepRecord> sweep_with(const std::string& stem,
                                    const DatasetBundle& test,
                                    const std::vector<double>& angles) {
  Network<T> net = load_checkpoint<T>(stem);
  return rotation_sweep(net, test, angles);
}

int cmd_sweep(const std::string& model, const std::string& angle_spec,
              const std::string& out, const std::string& data_dir,
              int64_t test_size) {
  std::string stem = model;
  for (const char* suf : {".json", ".bin"})
    if (stem.size() > 5 && stem.ends_with(suf))
      stem.resize(stem.size() - std::string(suf).size());
  const std::vector<double> angles = parse_angles(angle_spec);
  if (test_size < 0) throw UsageError("test size must be >= 0");
  const auto t0 = std::chrono::steady_clock::now();

  CheckpointMeta meta = read_checkpoint_meta(stem);
  DatasetBundle test = load_split(data_dir, false);
  if (test_size > 0 && test_size < test.size()) test = take(test, test_size);
  std::vector<SweepRecord> recs = meta.precision == "f64"
                                      ? sweep_with<double>(stem, test, angles)
                                      : sweep_with<float>(stem, test, angles);
  double mean = 0.0;
  for (const SweepRecord& r : recs) {
    std::printf("angle %6.1f  accuracy %.4f\n", r.angle_deg, r.accuracy);
    mean += r.accuracy;
  }
  mean /= static_cast<double>(recs.size());
  std::printf("mean accuracy over %zu angles: %.4f\n", recs.size(), mean);

  ResultContext ctx;
  ctx.command = "sweep";
  ctx.cfg.cal = meta.cal;
  ctx.cfg.precision = meta.precision;
  ctx.cfg.arch = meta.arch;
  ctx.cfg.seed = meta.seed;
  ctx.cfg.data_dir = data_dir;
  ctx.model_path = stem;
  ctx.checkpoint_sha256 = meta.bin_sha256;
  ctx.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ctx.artifacts = {out};
  write_sweep_csv(out, recs, &ctx);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_verify(const std::string& only, int ring_patches, bool corrupt_sobel) {
  SelfcheckOptions opt;
  opt.only = only;
  opt.ring_patches = ring_patches;
  GradientKernelPair bad;
  if (corrupt_sobel) {
    bad = sobel_polar_weights();
    bad.wx[1] += 0.5;  // mutation fixture: the sb checks must catch this
    opt.sobel = &bad;
  }
  const std::vector<CheckResult> checks = run_selfchecks(opt);
  std::fputs(render_report(checks).c_str(), stdout);
  if (checks.empty()) {
    std::printf("no checks match '%s'\n", only.c_str());
    return 1;
  }
  const size_t passed = static_cast<size_t>(
      std::count_if(checks.begin(), checks.end(),
                    [](const CheckResult& c) { return c.pass; }));
  std::printf("%zu/%zu checks passed\n", passed, checks.size());
  return all_passed(checks) ? 0 : 1;
}

int cmd_bench(const std::string& out, int reps) {
  if (reps < 3) throw UsageError("bench needs at least 3 reps");
  Rng rng(0xbe7c);
  Tensor<float> x({1, 16, 64, 64});
  for (int64_t i = 0; i < x.size(); ++i)
    x.data()[i] = static_cast<float>(rng.uniform(0.0, 1.0));
  std::string csv = "calibrator,K,h,w,c_in,c_out,median_us,p95_us\n";
  for (Calibrator cal : all_calibrators()) {
    ConvLayer<float> layer("bench", 3, 16, 16, cal);
    for (auto& w : layer.W) w = static_cast<float>(rng.uniform(-0.1, 0.1));
    std::vector<double> us;
    Tensor<float> sink = layer.forward(x, false);  // warm the caches
    for (int r = 0; r < reps; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      sink = layer.forward(x, false);
      us.push_back(std::chrono::duration<double, std::micro>(
                       std::chrono::steady_clock::now() - t0)
                       .count());
    }
    std::sort(us.begin(), us.end());
    const double median = us[us.size() / 2];
    const size_t p95i = std::min(
        us.size() - 1,
        static_cast<size_t>(std::ceil(0.95 * static_cast<double>(us.size()))) - 1);
    const double p95 = us[p95i];
    csv += std::string(to_string(cal)) + ",3,64,64,16,16," +
           format_fixed(median, 1) + "," + format_fixed(p95, 1) + "\n";
    std::printf("%-8s median %8.1f us  p95 %8.1f us\n", to_string(cal), median,
                p95);
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw IoError("cannot write " + out);
  f << csv;
  if (!f.good()) throw IoError("short write to " + out);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rotation-calibrated convolution workbench"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "cap BLAS worker threads (0 = library default)");

  TrainConfig cfg;
  cfg.arch = "desk";
  cfg.data_dir = "data/mnist";
  cfg.out_dir = "run";
  std::string cal_name = "none", config_path;
  auto* t = app.add_subcommand("train", "train a model and write checkpoint + logs");
  auto* o_cal = t->add_option("--calibrator", cal_name,
                              "none|sb|gd|st|lbp|lbp-adj|max|max-adj");
  auto* o_epochs = t->add_option("--epochs", cfg.epochs, "training epochs");
  auto* o_batch = t->add_option("--batch", cfg.batch, "mini-batch size");
  auto* o_lr = t->add_option("--lr", cfg.lr, "initial learning rate");
  auto* o_size = t->add_option("--train-size", cfg.train_size,
                               "cap on training examples (0 = all)");
  auto* o_aug = t->add_flag("--augment-rotate", cfg.augment_rotate,
                            "rotate each training image by a random angle");
  auto* o_seed = t->add_option("--seed", cfg.seed, "RNG seed");
  auto* o_arch = t->add_option("--arch", cfg.arch, "paper6|desk");
  auto* o_prec = t->add_option("--precision", cfg.precision, "f32|f64");
  auto* o_decayf = t->add_option("--decay-factor", cfg.decay_factor,
                                 "lr multiplier per decay interval");
  auto* o_decayi = t->add_option("--decay-interval", cfg.decay_interval,
                                 "epochs between lr decays");
  auto* o_data = t->add_option("--data-dir", cfg.data_dir, "IDX directory");
  auto* o_out = t->add_option("--out", cfg.out_dir, "output directory");
  t->add_option("--config", config_path,
                "JSON config; precedence defaults < config < flags");

  std::string model, angle_spec = "0:350:10", sweep_out = "sweep.csv";
  std::string sweep_data = "data/mnist";
  int64_t test_size = 0;
  auto* s = app.add_subcommand("sweep", "score a checkpoint on rotated test sets");
  s->add_option("--model", model, "checkpoint stem (or its .json/.bin path)")
      ->required();
  s->add_option("--angles", angle_spec, "start:stop:step, degrees in [0,360)");
  s->add_option("--out", sweep_out, "output CSV path");
  s->add_option("--data-dir", sweep_data, "IDX directory");
  s->add_option("--test-size", test_size, "cap on test examples (0 = all)");

  std::string only;
  int ring_patches = 100;
  bool corrupt_sobel = false;
  auto* v = app.add_subcommand("verify", "run the invariance/gradient/shape checks");
  v->add_option("--only", only, "run checks whose name contains this substring");
  v->add_option("--ring-patches", ring_patches, "patches per ring-shift check");
  v->add_flag("--corrupt-sobel", corrupt_sobel,
              "mutation fixture: corrupt the sobel table; sb checks must fail");

  std::string bench_out = "bench.csv";
  int reps = 15;
  auto* b = app.add_subcommand("bench", "time the forward pass per calibrator");
  b->add_option("--out", bench_out, "output CSV path");
  b->add_option("--reps", reps, "timing repetitions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (threads > 0) openblas_set_num_threads(threads);
    if (t->parsed()) {
      // flags beat the config file, which beats the defaults
      TrainConfig base = cfg;
      if (!config_path.empty()) {
        TrainConfig from_file;
        from_file.arch = base.arch;
        from_file.data_dir = base.data_dir;
        from_file.out_dir = base.out_dir;
        overlay_config_file(from_file, config_path);
        if (o_epochs->count() == 0) base.epochs = from_file.epochs;
        if (o_batch->count() == 0) base.batch = from_file.batch;
        if (o_lr->count() == 0) base.lr = from_file.lr;
        if (o_size->count() == 0) base.train_size = from_file.train_size;
        if (o_aug->count() == 0) base.augment_rotate = from_file.augment_rotate;
        if (o_seed->count() == 0) base.seed = from_file.seed;
        if (o_arch->count() == 0) base.arch = from_file.arch;
        if (o_prec->count() == 0) base.precision = from_file.precision;
        if (o_decayf->count() == 0) base.decay_factor = from_file.decay_factor;
        if (o_decayi->count() == 0) base.decay_interval = from_file.decay_interval;
        if (o_data->count() == 0) base.data_dir = from_file.data_dir;
        if (o_out->count() == 0) base.out_dir = from_file.out_dir;
        if (o_cal->count() == 0) base.cal = from_file.cal;
      }
      if (o_cal->count() > 0) base.cal = cal_arg(cal_name);
      return cmd_train(base, config_path);
    }
    if (s->parsed()) return cmd_sweep(model, angle_spec, sweep_out, sweep_data, test_size);
    if (v->parsed()) return cmd_verify(only, ring_patches, corrupt_sobel);
    if (b->parsed()) return cmd_bench(bench_out, reps);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
