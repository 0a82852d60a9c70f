#pragma once
#include <string>
#include <vector>

#include "ricnn/train.hpp"

namespace ricnn {

// What the JSON sidecar next to each CSV records.
struct ResultContext {
  std::string command;
  TrainConfig cfg;
  std::string model_path;
  std::string checkpoint_sha256;
  std::string config_file_sha256;  // empty when no --config was given
  double wall_seconds = 0.0;
  std::vector<std::string> artifacts;
};

// locale-independent formatting (std::to_chars underneath)
std::string format_double(double v);             // shortest round-trip
std::string format_fixed(double v, int places);  // fixed decimals

// CSV `epoch,lr,train_loss,train_acc,seconds` (+ sidecar at path + ".json")
void write_epoch_log(const std::string& path, const std::vector<EpochRow>& rows,
                     const ResultContext* ctx = nullptr);
std::vector<EpochRow> read_epoch_log(const std::string& path);

// CSV `angle_deg,n_samples,accuracy`, accuracy at 6 decimals
void write_sweep_csv(const std::string& path,
                     const std::vector<SweepRecord>& recs,
                     const ResultContext* ctx = nullptr);
std::vector<SweepRecord> read_sweep_csv(const std::string& path);

// Stand-alone run manifest for the CLI.
void write_run_manifest(const std::string& path, const ResultContext& ctx);

}  // namespace ricnn
