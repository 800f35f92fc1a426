#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "defa/accel_sim.hpp"
#include "defa/reference.hpp"
#include "defa/tensor.hpp"

namespace defa {

inline constexpr int kReportFormatVersion = 1;
inline constexpr int kConfigFormatVersion = 1;

enum class OffsetDistribution { Uniform, Gaussian };

struct WorkloadSpec {
  uint64_t seed = 7;
  int blocks = 2;
  OffsetDistribution offset_distribution = OffsetDistribution::Uniform;
  double offset_spread_px = 2.0;     // standard deviation of each offset component
  double softmax_temperature = 0.5;  // logits have standard deviation 1 / temperature
};

struct RunConfig {
  ModelConfig model;
  WorkloadSpec workload;
  HardwareConfig hardware;
  SimFlags flags;
  std::vector<double> sweep_epsilons{0.0, 0.01, 0.05, 0.1};
  std::vector<double> sweep_ks{0.0, 0.5, 1.0};

  // Canonical "key = value" text; parse_run_config(echo()) reproduces the config.
  std::string echo() const;
  std::string hash() const;
};

RunConfig default_run_config();
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

uint64_t fnv1a64(const void* data, std::size_t size, uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(uint64_t v);

AttentionInputs generate_workload(const WorkloadSpec& spec, const ModelConfig& model, uint32_t block);

struct RunSpec {
  std::string name;
  SimFlags flags;
  double epsilon = 0.0;
  double k = 0.0;
};

struct RunRecord {
  std::string preset;
  std::string name;
  SimFlags flags;
  double epsilon = 0.0;
  double k = 0.0;
  int blocks = 0;
  int head_dim = 0;
  int quant_bits = 0;
  CycleReport cycles;
  EnergyReport energy;
  BlockStats stats;
  std::string output_hash;
  std::vector<std::string> warnings;
};

struct RatioRecord {
  std::string baseline;
  std::string candidate;
  double speedup = 0.0;       // total cycles baseline / candidate
  double msgs_speedup = 0.0;  // MSGS compute cycles baseline / candidate
  double energy_ratio = 0.0;  // energy baseline / candidate
  double dram_ratio = 0.0;    // DRAM bits baseline / candidate
};

struct ReportBundle {
  std::string preset;
  uint64_t seed = 0;
  std::string config_echo;
  std::string config_hash;
  std::vector<RunRecord> runs;
  std::vector<RatioRecord> ratios;
};

const std::vector<std::string>& preset_names();
std::vector<RunSpec> expand_preset(const std::string& preset, const RunConfig& config);

// `initial_mask` (nullable) replaces the all-ones fmap mask of the first block.
RunRecord execute_run(const RunSpec& spec, const RunConfig& config, const std::string& preset,
                      const FmapMask* initial_mask = nullptr);
// Ratios of every run against the first one.
std::vector<RatioRecord> compute_ratios(const std::vector<RunRecord>& runs);
// Throws std::invalid_argument listing the valid presets for an unknown name,
// std::runtime_error naming the run whose internal check failed.
ReportBundle run_experiment(const std::string& preset, const RunConfig& config);

std::string runs_csv(const ReportBundle& bundle);
std::string ratios_csv(const ReportBundle& bundle);
std::string report_json(const ReportBundle& bundle);
// Writes runs.csv, ratios.csv and report.json into `dir` (created if needed).
std::vector<std::string> emit_report(const ReportBundle& bundle, const std::string& dir);

struct ReportDiff {
  bool identical = true;
  std::vector<std::string> lines;
};

ReportDiff diff_reports(const std::string& a, const std::string& b);

}  // namespace defa
