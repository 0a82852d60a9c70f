#include "ricnn/results.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace ricnn {

namespace {

using nlohmann::json;

void write_text(const std::string& path, const std::string& text) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot write " + path);
  const size_t n = std::fwrite(text.data(), 1, text.size(), f);
  const bool closed = std::fclose(f) == 0;
  if (n != text.size() || !closed) throw IoError("short write to " + path);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(f, line)) out.push_back(line);
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double parse_double(const std::string& s, const std::string& path) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw IoError("bad numeric cell '" + s + "' in " + path);
  return v;
}

int64_t parse_int(const std::string& s, const std::string& path) {
  int64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw IoError("bad integer cell '" + s + "' in " + path);
  return v;
}

json config_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch", c.batch},
          {"lr", c.lr},
          {"decay_factor", c.decay_factor},
          {"decay_interval", c.decay_interval},
          {"seed", c.seed},
          {"precision", c.precision},
          {"calibrator", to_string(c.cal)},
          {"arch", c.arch},
          {"train_size", c.train_size},
          {"augment_rotate", c.augment_rotate},
          {"data_dir", c.data_dir},
          {"out_dir", c.out_dir}};
}

std::string context_json(const ResultContext& ctx) {
  json j = {{"command", ctx.command},
            {"config", config_json(ctx.cfg)},
            {"seed", ctx.cfg.seed},
            {"precision", ctx.cfg.precision},
            {"calibrator", to_string(ctx.cfg.cal)},
            {"model", ctx.model_path},
            {"checkpoint_sha256", ctx.checkpoint_sha256},
            {"config_file_sha256", ctx.config_file_sha256},
            {"wall_seconds", ctx.wall_seconds},
            {"artifacts", ctx.artifacts}};
  return j.dump(2) + "\n";
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string format_fixed(double v, int places) {
  char buf[64];
  const auto r =
      std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, places);
  return std::string(buf, r.ptr);
}

void write_epoch_log(const std::string& path, const std::vector<EpochRow>& rows,
                     const ResultContext* ctx) {
  std::string text = "epoch,lr,train_loss,train_acc,seconds\n";
  for (const EpochRow& r : rows) {
    text += std::to_string(r.epoch);
    text += ',';
    text += format_double(r.lr);
    text += ',';
    text += format_double(r.train_loss);
    text += ',';
    text += format_double(r.train_acc);
    text += ',';
    text += format_fixed(r.seconds, 3);
    text += '\n';
  }
  write_text(path, text);
  if (ctx) write_text(path + ".json", context_json(*ctx));
}

std::vector<EpochRow> read_epoch_log(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "epoch,lr,train_loss,train_acc,seconds")
    throw IoError("missing epoch-log header in " + path);
  std::vector<EpochRow> out;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cells = split_csv(lines[i]);
    if (cells.size() != 5)
      throw IoError("bad epoch-log row '" + lines[i] + "' in " + path);
    out.push_back({static_cast<int>(parse_int(cells[0], path)),
                   parse_double(cells[1], path), parse_double(cells[2], path),
                   parse_double(cells[3], path), parse_double(cells[4], path)});
  }
  return out;
}

void write_sweep_csv(const std::string& path,
                     const std::vector<SweepRecord>& recs,
                     const ResultContext* ctx) {
  for (size_t i = 1; i < recs.size(); ++i)
    if (!(recs[i].angle_deg > recs[i - 1].angle_deg))
      throw InvalidArgument("sweep angles must be strictly increasing");
  std::string text = "angle_deg,n_samples,accuracy\n";
  for (const SweepRecord& r : recs) {
    if (!(r.accuracy >= 0.0 && r.accuracy <= 1.0))
      throw InvalidArgument("accuracy " + std::to_string(r.accuracy) +
                            " outside [0,1]");
    text += format_double(r.angle_deg);
    text += ',';
    text += std::to_string(r.n_samples);
    text += ',';
    text += format_fixed(r.accuracy, 6);
    text += '\n';
  }
  write_text(path, text);
  if (ctx) write_text(path + ".json", context_json(*ctx));
}

std::vector<SweepRecord> read_sweep_csv(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "angle_deg,n_samples,accuracy")
    throw IoError("missing sweep header in " + path);
  std::vector<SweepRecord> out;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cells = split_csv(lines[i]);
    if (cells.size() != 3)
      throw IoError("bad sweep row '" + lines[i] + "' in " + path);
    out.push_back({parse_double(cells[0], path), parse_int(cells[1], path),
                   parse_double(cells[2], path)});
  }
  return out;
}

void write_run_manifest(const std::string& path, const ResultContext& ctx) {
  write_text(path, context_json(ctx));
}

}  // namespace ricnn
