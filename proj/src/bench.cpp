#include "defa/bench.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include <fmt/core.h>
#include "json.hpp"

#include "defa/pruning.hpp"
#include "defa/rng.hpp"

namespace defa {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument(fmt::format("{}: '{}' is not a number", key, v));
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument(fmt::format("{}: '{}' is not an integer", key, v));
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw std::invalid_argument(fmt::format("{}: '{}' is not on/off", key, v));
}

std::pair<int, int> to_pair(const std::string& key, const std::string& v) {
  const auto x = v.find('x');
  if (x == std::string::npos) throw std::invalid_argument(fmt::format("{}: '{}' is not AxB", key, v));
  return {static_cast<int>(to_int(key, trim(v.substr(0, x)))), static_cast<int>(to_int(key, trim(v.substr(x + 1))))};
}

std::string on_off(bool b) { return b ? "on" : "off"; }

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& fmt_one) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += fmt_one(items[i]);
  }
  return out;
}

std::string fixed(double v) { return fmt::format("{:.6f}", v); }

}  // namespace

uint64_t fnv1a64(const void* data, std::size_t size, uint64_t h) {
  const auto* p = static_cast<const uint8_t*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t v) { return fmt::format("{:016x}", v); }

RunConfig default_run_config() {
  RunConfig c;
  c.model.num_levels = 4;
  c.model.num_points = 4;
  c.model.num_heads = 2;
  c.model.d_in = 32;
  c.model.level_shapes = {{32, 32}, {16, 16}, {8, 8}, {4, 4}};
  c.model.fwp_k = 0.5;
  c.model.pap_epsilon = 0.01;
  c.model.apply_default_ranges();
  return c;
}

std::string RunConfig::echo() const {
  const auto& m = model;
  std::string s;
  auto line = [&s](const char* k, const std::string& v) { s += fmt::format("{} = {}\n", k, v); };
  line("format_version", std::to_string(kConfigFormatVersion));
  line("seed", std::to_string(workload.seed));
  line("blocks", std::to_string(workload.blocks));
  line("num_levels", std::to_string(m.num_levels));
  line("num_points", std::to_string(m.num_points));
  line("num_heads", std::to_string(m.num_heads));
  line("d_in", std::to_string(m.d_in));
  line("level_shapes", join(m.level_shapes, [](const LevelShape& l) { return fmt::format("{}x{}", l.height, l.width); }));
  line("quant_bits", std::to_string(m.quant_bits));
  line("range_narrowing", on_off(m.range_narrowing));
  line("bounded_ranges_px",
       join(m.bounded_ranges, [](const BoundedRange& r) { return fmt::format("{}x{}", r.half_height, r.half_width); }));
  line("offsets_in_pixels", on_off(m.offsets_in_pixels));
  line("fwp_k", fmt::format("{}", m.fwp_k));
  line("pap_epsilon", fmt::format("{}", m.pap_epsilon));
  line("offset_distribution", workload.offset_distribution == OffsetDistribution::Uniform ? "uniform" : "gaussian");
  line("offset_spread_px", fmt::format("{}", workload.offset_spread_px));
  line("softmax_temperature", fmt::format("{}", workload.softmax_temperature));
  line("parallelism", to_string(flags.parallelism));
  line("fusion", on_off(flags.fused));
  line("reuse", on_off(flags.reuse));
  line("pruning", on_off(flags.pruning));
  line("sweep_epsilons", join(sweep_epsilons, [](double v) { return fmt::format("{}", v); }));
  line("sweep_ks", join(sweep_ks, [](double v) { return fmt::format("{}", v); }));
  line("clock_mhz", fmt::format("{}", hardware.memory.clock_mhz));
  line("dram_bandwidth_gb_per_s", fmt::format("{}", hardware.memory.dram_bandwidth_gbps));
  line("dram_pj_per_bit", fmt::format("{}", hardware.memory.dram_pj_per_bit));
  line("sram_read_pj_per_bit", fmt::format("{}", hardware.memory.sram_read_pj_per_bit));
  line("sram_write_pj_per_bit", fmt::format("{}", hardware.memory.sram_write_pj_per_bit));
  line("softmax_elems_per_cycle", fmt::format("{}", hardware.pe.softmax_elems_per_cycle));
  line("ba_lanes", std::to_string(hardware.pe.ba_lanes));
  return s;
}

std::string RunConfig::hash() const {
  const auto e = echo();
  return hex64(fnv1a64(e.data(), e.size()));
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig c = default_run_config();
  c.model.bounded_ranges.clear();
  bool saw_version = false;
  bool saw_ranges = false;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash_pos = raw.find('#');
    const std::string line = trim(hash_pos == std::string::npos ? raw : raw.substr(0, hash_pos));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument(fmt::format("line {}: expected key = value", lineno));
    const std::string key = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    if (!saw_version && key != "format_version") {
      throw std::invalid_argument(fmt::format("line {}: format_version must be the first field", lineno));
    }
    auto& m = c.model;
    if (key == "format_version") {
      if (to_int(key, v) != kConfigFormatVersion) throw std::invalid_argument(fmt::format("unsupported config format_version {}", v));
      saw_version = true;
    } else if (key == "seed") {
      c.workload.seed = static_cast<uint64_t>(to_int(key, v));
    } else if (key == "blocks") {
      c.workload.blocks = static_cast<int>(to_int(key, v));
    } else if (key == "num_levels") {
      m.num_levels = static_cast<int>(to_int(key, v));
    } else if (key == "num_points") {
      m.num_points = static_cast<int>(to_int(key, v));
    } else if (key == "num_heads") {
      m.num_heads = static_cast<int>(to_int(key, v));
    } else if (key == "d_in") {
      m.d_in = static_cast<int>(to_int(key, v));
    } else if (key == "level_shapes") {
      m.level_shapes.clear();
      for (const auto& item : split(v, ',')) {
        const auto [h, w] = to_pair(key, item);
        m.level_shapes.push_back({h, w});
      }
    } else if (key == "quant_bits") {
      m.quant_bits = static_cast<int>(to_int(key, v));
    } else if (key == "range_narrowing") {
      m.range_narrowing = to_bool(key, v);
    } else if (key == "bounded_ranges_px") {
      saw_ranges = true;
      m.bounded_ranges.clear();
      if (v != "default") {
        for (const auto& item : split(v, ',')) {
          const auto [hh, hw] = to_pair(key, item);
          m.bounded_ranges.push_back({hw, hh});
        }
      }
    } else if (key == "offsets_in_pixels") {
      m.offsets_in_pixels = to_bool(key, v);
    } else if (key == "fwp_k") {
      m.fwp_k = to_double(key, v);
    } else if (key == "pap_epsilon") {
      m.pap_epsilon = to_double(key, v);
    } else if (key == "offset_distribution") {
      if (v == "uniform") {
        c.workload.offset_distribution = OffsetDistribution::Uniform;
      } else if (v == "gaussian") {
        c.workload.offset_distribution = OffsetDistribution::Gaussian;
      } else {
        throw std::invalid_argument(fmt::format("{}: '{}' is not uniform/gaussian", key, v));
      }
    } else if (key == "offset_spread_px") {
      c.workload.offset_spread_px = to_double(key, v);
    } else if (key == "softmax_temperature") {
      c.workload.softmax_temperature = to_double(key, v);
    } else if (key == "parallelism") {
      if (v == "inter") {
        c.flags.parallelism = Parallelism::Inter;
      } else if (v == "intra") {
        c.flags.parallelism = Parallelism::Intra;
      } else {
        throw std::invalid_argument(fmt::format("{}: '{}' is not intra/inter", key, v));
      }
    } else if (key == "fusion") {
      c.flags.fused = to_bool(key, v);
    } else if (key == "reuse") {
      c.flags.reuse = to_bool(key, v);
    } else if (key == "pruning") {
      c.flags.pruning = to_bool(key, v);
    } else if (key == "sweep_epsilons") {
      c.sweep_epsilons.clear();
      for (const auto& item : split(v, ',')) c.sweep_epsilons.push_back(to_double(key, item));
    } else if (key == "sweep_ks") {
      c.sweep_ks.clear();
      for (const auto& item : split(v, ',')) c.sweep_ks.push_back(to_double(key, item));
    } else if (key == "clock_mhz") {
      c.hardware.memory.clock_mhz = to_double(key, v);
    } else if (key == "dram_bandwidth_gb_per_s") {
      c.hardware.memory.dram_bandwidth_gbps = to_double(key, v);
    } else if (key == "dram_pj_per_bit") {
      c.hardware.memory.dram_pj_per_bit = to_double(key, v);
    } else if (key == "sram_read_pj_per_bit") {
      c.hardware.memory.sram_read_pj_per_bit = to_double(key, v);
    } else if (key == "sram_write_pj_per_bit") {
      c.hardware.memory.sram_write_pj_per_bit = to_double(key, v);
    } else if (key == "softmax_elems_per_cycle") {
      c.hardware.pe.softmax_elems_per_cycle = to_double(key, v);
    } else if (key == "ba_lanes") {
      c.hardware.pe.ba_lanes = static_cast<int>(to_int(key, v));
    } else {
      throw std::invalid_argument(fmt::format("line {}: unknown key '{}'", lineno, key));
    }
  }
  if (!saw_version) throw std::invalid_argument("config has no format_version");
  if (!saw_ranges || c.model.bounded_ranges.empty()) c.model.apply_default_ranges();
  c.model.validate();
  if (c.workload.blocks < 1) throw std::invalid_argument("blocks must be >= 1");
  if (!(c.workload.softmax_temperature > 0.0)) throw std::invalid_argument("softmax_temperature must be > 0");
  if (!(c.workload.offset_spread_px >= 0.0)) throw std::invalid_argument("offset_spread_px must be >= 0");
  if (!(c.hardware.memory.clock_mhz > 0.0) || !(c.hardware.memory.dram_bandwidth_gbps > 0.0)) {
    throw std::invalid_argument("clock and DRAM bandwidth must be positive");
  }
  if (!(c.hardware.pe.softmax_elems_per_cycle > 0.0) || c.hardware.pe.ba_lanes < 1) {
    throw std::invalid_argument("softmax rate and BA lanes must be positive");
  }
  energy_account({}, coefficients_from(c.hardware.memory));  // rejects negative coefficients
  for (double e : c.sweep_epsilons) {
    if (!(e >= 0.0 && e < 1.0)) throw std::invalid_argument(fmt::format("sweep epsilon {} outside [0, 1)", e));
  }
  for (double k : c.sweep_ks) {
    if (!(k >= 0.0)) throw std::invalid_argument(fmt::format("sweep k {} negative", k));
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open config {}", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

AttentionInputs generate_workload(const WorkloadSpec& spec, const ModelConfig& model, uint32_t block) {
  model.validate();
  const std::size_t nq = model.num_queries();
  const auto d = static_cast<std::size_t>(model.d_in);
  const std::size_t hp = static_cast<std::size_t>(model.num_heads) * model.points_per_head();
  if (nq == 0 || d == 0 || hp == 0) throw std::invalid_argument("workload has a zero-sized dimension");

  auto fill_uniform = [&](Matrix& m, uint32_t tensor, double half) {
    auto rng = make_stream(spec.seed, block, tensor);
    for (double& v : m.data) v = rng.uniform(-half, half);
  };
  const double root_d = std::sqrt(static_cast<double>(d));

  AttentionInputs in;
  in.query = Matrix(nq, d);
  in.fmap = Matrix(nq, d);
  in.weights.attn = Matrix(d, hp);
  in.weights.value = Matrix(d, d);
  in.weights.offset = Matrix(d, 2 * hp);
  fill_uniform(in.query, 0, 1.0);
  fill_uniform(in.fmap, 1, 1.0);
  fill_uniform(in.weights.attn, 2, 3.0 / (spec.softmax_temperature * root_d));
  fill_uniform(in.weights.value, 3, std::sqrt(3.0) / root_d);
  if (spec.offset_distribution == OffsetDistribution::Uniform) {
    fill_uniform(in.weights.offset, 4, 3.0 * spec.offset_spread_px / root_d);
  } else {
    auto rng = make_stream(spec.seed, block, 4);
    const double sigma = std::sqrt(3.0) * spec.offset_spread_px / root_d;
    for (double& v : in.weights.offset.data) v = sigma * rng.gaussian();
  }
  if (!model.offsets_in_pixels) {
    // Offsets are fractions of each level; scale by the finest width so spread stays in pixels there.
    const double finest = static_cast<double>(model.level_shapes.front().width);
    for (double& v : in.weights.offset.data) v /= finest;
  }
  in.refs = grid_reference_points(model.layout());
  return in;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"parallelism-ablation", "fusion-ablation", "reuse-ablation",
                                              "pruning-sweep", "end-to-end"};
  return names;
}

std::vector<RunSpec> expand_preset(const std::string& preset, const RunConfig& config) {
  const SimFlags base = config.flags;
  const double eps = config.model.pap_epsilon;
  const double k = config.model.fwp_k;
  auto with = [&](std::string name, const std::function<void(SimFlags&)>& edit) {
    RunSpec r{std::move(name), base, eps, k};
    edit(r.flags);
    return r;
  };
  if (preset == "parallelism-ablation") {
    return {with("intra", [](SimFlags& f) { f.parallelism = Parallelism::Intra; }),
            with("inter", [](SimFlags& f) { f.parallelism = Parallelism::Inter; })};
  }
  if (preset == "fusion-ablation") {
    return {with("unfused", [](SimFlags& f) { f.fused = false; }), with("fused", [](SimFlags& f) { f.fused = true; })};
  }
  if (preset == "reuse-ablation") {
    return {with("no-reuse", [](SimFlags& f) { f.reuse = false; }), with("reuse", [](SimFlags& f) { f.reuse = true; })};
  }
  if (preset == "pruning-sweep") {
    std::vector<RunSpec> runs;
    // Baseline first: the no-op pruning point.
    runs.push_back(with("eps=0,k=0", [](SimFlags& f) { f.pruning = true; }));
    runs.back().epsilon = 0.0;
    runs.back().k = 0.0;
    for (double e : config.sweep_epsilons) {
      for (double kk : config.sweep_ks) {
        if (e == 0.0 && kk == 0.0) continue;
        runs.push_back(with(fmt::format("eps={},k={}", e, kk), [](SimFlags& f) { f.pruning = true; }));
        runs.back().epsilon = e;
        runs.back().k = kk;
      }
    }
    return runs;
  }
  if (preset == "end-to-end") {
    RunSpec baseline{"baseline", {Parallelism::Intra, false, false, false}, 0.0, 0.0};
    RunSpec full{"defa", {Parallelism::Inter, true, true, true}, eps, k};
    return {baseline, full};
  }
  std::string valid;
  for (const auto& n : preset_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw std::invalid_argument(fmt::format("unknown preset '{}'; valid presets: {}", preset, valid));
}

namespace {

std::string hash_accumulators(const std::vector<int64_t>& acc, uint64_t h) {
  for (int64_t v : acc) {
    uint8_t bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<uint8_t>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff);
    h = fnv1a64(bytes, 8, h);
  }
  return hex64(h);
}

void check(bool ok, const std::string& run, const std::string& what) {
  if (!ok) throw std::runtime_error(fmt::format("run '{}' failed internal check: {}", run, what));
}

// Dense quantized reference over the same block sequence, for hash comparison.
std::string dense_reference_hash(const RunConfig& config) {
  uint64_t h = 0xcbf29ce484222325ULL;
  std::string out;
  for (int b = 0; b < config.workload.blocks; ++b) {
    const auto in = generate_workload(config.workload, config.model, static_cast<uint32_t>(b));
    const auto r = msdeform_attn_quantized(in, config.model);
    out = hash_accumulators(r.accumulators, h);
    h = std::stoull(out, nullptr, 16);
  }
  return out;
}

}  // namespace

RunRecord execute_run(const RunSpec& spec, const RunConfig& config, const std::string& preset,
                      const FmapMask* initial_mask) {
  ModelConfig model = config.model;
  model.pap_epsilon = spec.epsilon;
  model.fwp_k = spec.k;
  model.validate();

  RunRecord rec;
  rec.preset = preset;
  rec.name = spec.name;
  rec.flags = spec.flags;
  rec.epsilon = spec.epsilon;
  rec.k = spec.k;
  rec.blocks = config.workload.blocks;
  rec.head_dim = model.head_dim();
  rec.quant_bits = model.quant_bits;

  uint64_t h = 0xcbf29ce484222325ULL;
  TrafficCounters traffic;
  FmapMask mask = FmapMask::all_ones(model.level_shapes, 0);
  if (initial_mask) {
    if (initial_mask->shapes != model.level_shapes) throw std::invalid_argument("fmap mask level shapes differ from the config");
    mask = *initial_mask;
  }
  for (int b = 0; b < config.workload.blocks; ++b) {
    const auto in = generate_workload(config.workload, model, static_cast<uint32_t>(b));
    auto r = simulate_block(in, model, {mask, std::nullopt}, spec.flags, config.hardware, static_cast<uint32_t>(b));
    check(r.cycles.total_cycles == r.cycles.phase_sum(), spec.name, "total cycles differ from the phase sum");
    if (spec.flags.parallelism == Parallelism::Inter && !r.stats.fell_back_to_intra) {
      check(r.cycles.conflict_stall_cycles == 0, spec.name, "bank conflict stalls in inter-level mode");
    }
    const uint64_t s_bits = 2 * r.stats.kept_points * static_cast<uint64_t>(model.head_dim()) * model.quant_bits;
    check(r.energy.traffic.sampling_value_dram_bits == (spec.flags.fused ? 0 : s_bits), spec.name,
          "sampling value DRAM traffic does not match the fusion mode");
    rec.output_hash = hash_accumulators(r.accumulators, h);
    h = std::stoull(rec.output_hash, nullptr, 16);
    rec.cycles += r.cycles;
    traffic += r.energy.traffic;
    rec.stats += r.stats;
    for (auto& w : r.warnings) {
      if (std::find(rec.warnings.begin(), rec.warnings.end(), w) == rec.warnings.end()) rec.warnings.push_back(w);
    }
    mask = std::move(r.next_fmap_mask);
  }
  rec.energy = energy_account(traffic, coefficients_from(config.hardware.memory));
  return rec;
}

std::vector<RatioRecord> compute_ratios(const std::vector<RunRecord>& runs) {
  std::vector<RatioRecord> out;
  if (runs.size() < 2) return out;
  const auto& base = runs.front();
  auto ratio = [](double a, double b) { return b == 0.0 ? 0.0 : a / b; };
  for (std::size_t i = 1; i < runs.size(); ++i) {
    const auto& r = runs[i];
    out.push_back({base.name, r.name,
                   ratio(static_cast<double>(base.cycles.total_cycles), static_cast<double>(r.cycles.total_cycles)),
                   ratio(static_cast<double>(base.cycles.msgs_compute_cycles),
                         static_cast<double>(r.cycles.msgs_compute_cycles)),
                   ratio(base.energy.total_pj, r.energy.total_pj),
                   ratio(static_cast<double>(base.energy.traffic.dram_bits()),
                         static_cast<double>(r.energy.traffic.dram_bits()))});
  }
  return out;
}

ReportBundle run_experiment(const std::string& preset, const RunConfig& config) {
  const auto specs = expand_preset(preset, config);
  ReportBundle bundle;
  bundle.preset = preset;
  bundle.seed = config.workload.seed;
  bundle.config_echo = config.echo();
  bundle.config_hash = config.hash();
  for (const auto& spec : specs) bundle.runs.push_back(execute_run(spec, config, preset));

  if (preset == "fusion-ablation") {
    const auto& unfused = bundle.runs[0];
    const auto& fused = bundle.runs[1];
    const uint64_t expected = 2 * fused.stats.kept_points * static_cast<uint64_t>(fused.head_dim) * fused.quant_bits;
    check(unfused.energy.traffic.dram_bits() - fused.energy.traffic.dram_bits() == expected, "fused",
          "DRAM delta is not twice the sampling value bits");
    check(unfused.output_hash == fused.output_hash, "fused", "fusion changed the outputs");
  }
  if (preset == "reuse-ablation") {
    check(bundle.runs[0].output_hash == bundle.runs[1].output_hash, "reuse", "reuse changed the outputs");
    check(bundle.runs[1].energy.traffic.fmap_fill_dram_bits <= bundle.runs[0].energy.traffic.fmap_fill_dram_bits,
          "reuse", "reuse increased fmap fill traffic");
  }
  if (preset == "parallelism-ablation") {
    check(bundle.runs[0].output_hash == bundle.runs[1].output_hash, "inter", "parallelism changed the outputs");
  }
  if (preset == "pruning-sweep") {
    check(bundle.runs[0].output_hash == dense_reference_hash(config), bundle.runs[0].name,
          "no-op pruning differs from the dense reference");
  }
  bundle.ratios = compute_ratios(bundle.runs);
  return bundle;
}

namespace {

const char* kRunsHeader =
    "format_version,preset,run,config_hash,seed,parallelism,fusion,reuse,pruning,epsilon,k,blocks,"
    "total_cycles,probs_cycles,offset_mm_cycles,value_mm_cycles,msgs_cycles,aggregation_cycles,"
    "msgs_compute_cycles,msgs_batches,conflict_stall_cycles,detection_cycles,"
    "dram_read_bits,dram_write_bits,fmap_fill_dram_bits,sampling_value_dram_bits,"
    "sram_read_bits,sram_write_bits,sram_fill_write_bits,sram_bi_read_bits,sram_mask_read_bits,"
    "sram_intermediate_bits,dram_pj,sram_pj,total_pj,total_points,kept_points,point_prune_ratio,"
    "total_pixels,kept_pixels,pixel_prune_ratio,storage_bits,uniform_storage_bits,output_hash\n";

const char* kRatiosHeader =
    "format_version,preset,config_hash,baseline,candidate,speedup,msgs_speedup,energy_ratio,dram_ratio\n";

double prune_ratio(uint64_t kept, uint64_t total) {
  return total == 0 ? 0.0 : 1.0 - static_cast<double>(kept) / static_cast<double>(total);
}

void verify_ratios(const ReportBundle& bundle) {
  const auto again = compute_ratios(bundle.runs);
  if (again.size() != bundle.ratios.size()) throw std::runtime_error("ratio table does not match the runs");
  for (std::size_t i = 0; i < again.size(); ++i) {
    const auto& a = again[i];
    const auto& b = bundle.ratios[i];
    if (a.baseline != b.baseline || a.candidate != b.candidate || a.speedup != b.speedup ||
        a.msgs_speedup != b.msgs_speedup || a.energy_ratio != b.energy_ratio || a.dram_ratio != b.dram_ratio) {
      throw std::runtime_error(fmt::format("ratio row {} is not recomputable from the runs", i));
    }
  }
}

}  // namespace

std::string runs_csv(const ReportBundle& bundle) {
  std::string s = kRunsHeader;
  for (const auto& r : bundle.runs) {
    const auto& c = r.cycles;
    const auto& t = r.energy.traffic;
    s += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},", kReportFormatVersion, r.preset, r.name,
                     bundle.config_hash, bundle.seed, to_string(r.flags.parallelism), on_off(r.flags.fused),
                     on_off(r.flags.reuse), on_off(r.flags.pruning), fixed(r.epsilon), fixed(r.k), r.blocks);
    s += fmt::format("{},{},{},{},{},{},{},{},{},{},", c.total_cycles, c.probs_cycles, c.offset_mm_cycles,
                     c.value_mm_cycles, c.msgs_cycles, c.aggregation_cycles, c.msgs_compute_cycles, c.msgs_batches,
                     c.conflict_stall_cycles, c.detection_cycles);
    s += fmt::format("{},{},{},{},{},{},{},{},{},{},", t.dram_read_bits, t.dram_write_bits, t.fmap_fill_dram_bits,
                     t.sampling_value_dram_bits, t.sram_read_bits(), t.sram_write_bits(), t.sram_fill_write_bits,
                     t.sram_bi_read_bits, t.sram_mask_read_bits,
                     t.sram_intermediate_read_bits + t.sram_intermediate_write_bits);
    s += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", fixed(r.energy.dram_pj),
                     fixed(r.energy.sram_read_pj + r.energy.sram_write_pj), fixed(r.energy.total_pj),
                     r.stats.total_points, r.stats.kept_points, fixed(prune_ratio(r.stats.kept_points, r.stats.total_points)),
                     r.stats.total_pixels, r.stats.kept_pixels, fixed(prune_ratio(r.stats.kept_pixels, r.stats.total_pixels)),
                     r.stats.storage_bits, r.stats.uniform_storage_bits, r.output_hash);
  }
  return s;
}

std::string ratios_csv(const ReportBundle& bundle) {
  std::string s = kRatiosHeader;
  for (const auto& r : bundle.ratios) {
    s += fmt::format("{},{},{},{},{},{},{},{},{}\n", kReportFormatVersion, bundle.preset, bundle.config_hash,
                     r.baseline, r.candidate, fixed(r.speedup), fixed(r.msgs_speedup), fixed(r.energy_ratio),
                     fixed(r.dram_ratio));
  }
  return s;
}

std::string report_json(const ReportBundle& bundle) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["format_version"] = kReportFormatVersion;
  j["preset"] = bundle.preset;
  j["seed"] = bundle.seed;
  j["config_hash"] = bundle.config_hash;
  ordered_json cfg = ordered_json::object();
  std::istringstream in(bundle.config_echo);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) cfg[line.substr(0, eq)] = line.substr(eq + 3);
  }
  j["config"] = cfg;
  j["model_notes"] = {
      "quantization: per-tensor symmetric, round-half-to-even",
      "sampling coordinates: quant_bits fractional bits, truncated",
      "probabilities: unsigned fixed point, quant_bits - 1 fractional bits",
      "border: out-of-range BI neighbours read as zero",
      "softmax and point-mask generation modeled sequentially before the offset MM",
      "phases do not overlap; each phase is bounded below by its DRAM transfer time",
  };
  ordered_json runs = ordered_json::array();
  for (const auto& r : bundle.runs) {
    const auto& c = r.cycles;
    const auto& t = r.energy.traffic;
    ordered_json o;
    o["run"] = r.name;
    o["config_hash"] = bundle.config_hash;
    o["flags"] = {{"parallelism", to_string(r.flags.parallelism)},
                  {"fusion", on_off(r.flags.fused)},
                  {"reuse", on_off(r.flags.reuse)},
                  {"pruning", on_off(r.flags.pruning)},
                  {"epsilon", fixed(r.epsilon)},
                  {"k", fixed(r.k)}};
    ordered_json banks = ordered_json::array();
    for (auto b : c.bank_accesses) banks.push_back(b);
    o["cycles"] = {{"total", c.total_cycles},
                   {"phases",
                    {{"probs_and_mask", c.probs_cycles},
                     {"offset_mm", c.offset_mm_cycles},
                     {"value_mm", c.value_mm_cycles},
                     {"msgs_ag", c.msgs_cycles},
                     {"aggregation_unfused", c.aggregation_cycles}}},
                   {"msgs_compute", c.msgs_compute_cycles},
                   {"msgs_batches", c.msgs_batches},
                   {"conflict_stalls", c.conflict_stall_cycles},
                   {"conflict_detection", c.detection_cycles},
                   {"bank_accesses", banks}};
    o["traffic_bits"] = {{"dram_read", t.dram_read_bits},
                         {"dram_write", t.dram_write_bits},
                         {"fmap_fill_dram", t.fmap_fill_dram_bits},
                         {"sampling_value_dram", t.sampling_value_dram_bits},
                         {"sram_fill_write", t.sram_fill_write_bits},
                         {"sram_bi_read", t.sram_bi_read_bits},
                         {"sram_mask_read", t.sram_mask_read_bits},
                         {"sram_intermediate_write", t.sram_intermediate_write_bits},
                         {"sram_intermediate_read", t.sram_intermediate_read_bits}};
    o["energy_pj"] = {{"dram", fixed(r.energy.dram_pj)},
                      {"sram_read", fixed(r.energy.sram_read_pj)},
                      {"sram_write", fixed(r.energy.sram_write_pj)},
                      {"total", fixed(r.energy.total_pj)}};
    o["pruning"] = {{"total_points", r.stats.total_points},
                    {"kept_points", r.stats.kept_points},
                    {"total_pixels", r.stats.total_pixels},
                    {"kept_pixels", r.stats.kept_pixels}};
    o["arithmetic"] = {{"bi_multiplies", r.stats.bi_multiplies},
                       {"bi_adds", r.stats.bi_adds},
                       {"ag_macs", r.stats.ag_macs},
                       {"mm_macs", r.stats.mm_macs}};
    o["storage_bits"] = {{"level_wise", r.stats.storage_bits}, {"uniform", r.stats.uniform_storage_bits}};
    o["output_hash"] = r.output_hash;
    o["warnings"] = r.warnings;
    runs.push_back(o);
  }
  j["runs"] = runs;
  ordered_json ratios = ordered_json::array();
  for (const auto& r : bundle.ratios) {
    ratios.push_back({{"baseline", r.baseline},
                      {"candidate", r.candidate},
                      {"speedup", fixed(r.speedup)},
                      {"msgs_speedup", fixed(r.msgs_speedup)},
                      {"energy_ratio", fixed(r.energy_ratio)},
                      {"dram_ratio", fixed(r.dram_ratio)}});
  }
  j["ratios"] = ratios;
  return j.dump(2) + "\n";
}

std::vector<std::string> emit_report(const ReportBundle& bundle, const std::string& dir) {
  verify_ratios(bundle);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error(fmt::format("cannot create report directory {}: {}", dir, ec.message()));
  const std::vector<std::pair<std::string, std::string>> files{
      {"runs.csv", runs_csv(bundle)}, {"ratios.csv", ratios_csv(bundle)}, {"report.json", report_json(bundle)}};
  std::vector<std::string> written;
  for (const auto& [name, body] : files) {
    const auto path = (std::filesystem::path(dir) / name).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write report file {}", path));
    out << body;
    if (!out) throw std::runtime_error(fmt::format("failed writing report file {}", path));
    written.push_back(path);
  }
  return written;
}

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open {}", path));
  std::vector<std::string> lines;
  std::string l;
  while (std::getline(in, l)) lines.push_back(l);
  return lines;
}

void diff_files(const std::string& a, const std::string& b, ReportDiff& out) {
  const auto la = read_lines(a);
  const auto lb = read_lines(b);
  const bool csv = a.size() >= 4 && a.substr(a.size() - 4) == ".csv";
  const auto header = csv && !la.empty() ? split(la[0], ',') : std::vector<std::string>{};
  const std::size_t n = std::max(la.size(), lb.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (i < la.size() && i < lb.size() && la[i] == lb[i]) continue;
    out.identical = false;
    if (i >= la.size() || i >= lb.size()) {
      out.lines.push_back(fmt::format("{}:{}: only in {}", a, i + 1, i < la.size() ? a : b));
      continue;
    }
    if (csv && i > 0) {
      const auto fa = split(la[i], ',');
      const auto fb = split(lb[i], ',');
      for (std::size_t f = 0; f < std::max(fa.size(), fb.size()); ++f) {
        const std::string va = f < fa.size() ? fa[f] : "";
        const std::string vb = f < fb.size() ? fb[f] : "";
        if (va != vb) {
          const std::string name = f < header.size() ? header[f] : fmt::format("field{}", f);
          out.lines.push_back(fmt::format("{}:{}: {}: {} -> {}", a, i + 1, name, va, vb));
        }
      }
    } else {
      out.lines.push_back(fmt::format("{}:{}: '{}' -> '{}'", a, i + 1, la[i], lb[i]));
    }
  }
}

}  // namespace

ReportDiff diff_reports(const std::string& a, const std::string& b) {
  namespace fs = std::filesystem;
  ReportDiff out;
  if (fs::is_directory(a) && fs::is_directory(b)) {
    for (const char* name : {"runs.csv", "ratios.csv", "report.json"}) {
      diff_files((fs::path(a) / name).string(), (fs::path(b) / name).string(), out);
    }
  } else {
    diff_files(a, b, out);
  }
  return out;
}

}  // namespace defa
