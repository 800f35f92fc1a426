// defa: run experiment presets, simulate a config, manage mask files, diff reports.

#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <fmt/core.h>

#include "CLI11.hpp"
#include "defa/bench.hpp"
#include "defa/pruning.hpp"

namespace {

struct Overrides {
  std::optional<uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> fusion;
  std::optional<std::string> reuse;
  std::optional<double> epsilon;
  std::optional<double> k;
  std::optional<int> blocks;
};

void add_overrides(CLI::App* app, Overrides& o) {
  app->add_option("--seed", o.seed, "workload seed");
  app->add_option("--mode", o.mode, "MSGS parallelism")->check(CLI::IsMember({"intra", "inter"}));
  app->add_option("--fusion", o.fusion, "fused MSGS + aggregation")->check(CLI::IsMember({"on", "off"}));
  app->add_option("--reuse", o.reuse, "fmap reuse window")->check(CLI::IsMember({"on", "off"}));
  app->add_option("--epsilon", o.epsilon, "PAP threshold")->check(CLI::Range(0.0, 1.0));
  app->add_option("--k", o.k, "FWP scale")->check(CLI::NonNegativeNumber);
  app->add_option("--blocks", o.blocks, "encoder blocks per run")->check(CLI::PositiveNumber);
}

defa::RunConfig resolve(const std::string& config_path, const Overrides& o) {
  auto c = config_path.empty() ? defa::default_run_config() : defa::load_run_config(config_path);
  if (o.seed) c.workload.seed = *o.seed;
  if (o.blocks) c.workload.blocks = *o.blocks;
  if (o.mode) c.flags.parallelism = *o.mode == "inter" ? defa::Parallelism::Inter : defa::Parallelism::Intra;
  if (o.fusion) c.flags.fused = *o.fusion == "on";
  if (o.reuse) c.flags.reuse = *o.reuse == "on";
  if (o.epsilon) c.model.pap_epsilon = *o.epsilon;
  if (o.k) c.model.fwp_k = *o.k;
  c.model.validate();
  return c;
}

void print_summary(const defa::ReportBundle& b, const std::vector<std::string>& files) {
  for (const auto& r : b.runs) {
    fmt::print("{:<20} cycles {:>12}  msgs {:>10}  energy {:>16.3f} pJ  dram {:>12} bits\n", r.name,
               r.cycles.total_cycles, r.cycles.msgs_compute_cycles, r.energy.total_pj, r.energy.traffic.dram_bits());
    for (const auto& w : r.warnings) fmt::print(stderr, "warning: {}: {}\n", r.name, w);
  }
  for (const auto& q : b.ratios) {
    fmt::print("{} vs {}: speedup {:.3f}  msgs {:.3f}  energy {:.3f}  dram {:.3f}\n", q.candidate, q.baseline,
               q.speedup, q.msgs_speedup, q.energy_ratio, q.dram_ratio);
  }
  for (const auto& f : files) fmt::print("wrote {}\n", f);
}

void dump_mask(const std::string& path) {
  const auto m = defa::read_mask_file(path);
  if (m.kind == defa::MaskKind::Fmap) {
    const auto& f = m.fmap;
    fmt::print("kind fmap\nblock {}\nlevels {}\n", f.block_index, f.shapes.size());
    std::size_t base = 0;
    for (std::size_t l = 0; l < f.shapes.size(); ++l) {
      const auto& s = f.shapes[l];
      fmt::print("level {} {}x{} kept {}/{}\n", l, s.height, s.width, f.kept_in_level(l), s.area());
      for (int y = 0; y < s.height; ++y) {
        std::string row;
        for (int x = 0; x < s.width; ++x) row += f.kept(base + static_cast<std::size_t>(y) * s.width + x) ? '#' : '.';
        fmt::print("  {}\n", row);
      }
      base += s.area();
    }
  } else {
    const auto& p = m.point;
    fmt::print("kind point\nblock {}\nqueries {}\nheads {}\nlevels {}\npoints {}\nkept {}/{}\n", p.block_index,
               p.num_queries, p.num_heads, p.num_levels, p.num_points, p.kept_count(), p.size());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deformable attention accelerator model: experiments, simulation, masks and reports"};
  app.require_subcommand(1);

  Overrides run_o;
  std::string preset, run_config, run_out = "report";
  auto* run = app.add_subcommand("run", "run an experiment preset");
  run->add_option("preset", preset, "preset name")->required();
  run->add_option("--config", run_config, "config file")->check(CLI::ExistingFile);
  run->add_option("--out", run_out, "report directory");
  add_overrides(run, run_o);

  Overrides sim_o;
  std::string sim_config, sim_out = "report", sim_mask;
  auto* sim = app.add_subcommand("simulate", "simulate the configured flags");
  sim->add_option("config", sim_config, "config file")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", sim_out, "report directory");
  sim->add_option("--fmap-mask", sim_mask, "fmap mask file replayed for the first block")->check(CLI::ExistingFile);
  add_overrides(sim, sim_o);

  auto* mask = app.add_subcommand("mask", "generate or inspect mask files");
  mask->require_subcommand(1);
  Overrides gen_o;
  std::string gen_config, gen_out, gen_kind = "fmap";
  int gen_block = 0;
  auto* gen = mask->add_subcommand("gen", "write the masks produced by a block of the quantized reference");
  gen->add_option("--config", gen_config, "config file")->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "mask file")->required();
  gen->add_option("--block", gen_block, "block whose masks are written")->check(CLI::NonNegativeNumber);
  gen->add_option("--kind", gen_kind, "fmap (for the next block) or point")->check(CLI::IsMember({"fmap", "point"}));
  add_overrides(gen, gen_o);
  std::string dump_path;
  auto* dump = mask->add_subcommand("dump", "print a mask file");
  dump->add_option("file", dump_path, "mask file")->required()->check(CLI::ExistingFile);

  auto* report = app.add_subcommand("report", "compare reports");
  report->require_subcommand(1);
  std::string diff_a, diff_b;
  auto* diff = report->add_subcommand("diff", "field-level diff of two report files or directories");
  diff->add_option("a", diff_a)->required();
  diff->add_option("b", diff_b)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto config = resolve(run_config, run_o);
      const auto bundle = defa::run_experiment(preset, config);
      print_summary(bundle, defa::emit_report(bundle, run_out));
    } else if (*sim) {
      const auto config = resolve(sim_config, sim_o);
      std::optional<defa::FmapMask> initial;
      if (!sim_mask.empty()) {
        auto m = defa::read_mask_file(sim_mask);
        if (m.kind != defa::MaskKind::Fmap) throw std::invalid_argument(fmt::format("{} is not an fmap mask", sim_mask));
        initial = std::move(m.fmap);
      }
      defa::ReportBundle bundle;
      bundle.preset = "simulate";
      bundle.seed = config.workload.seed;
      bundle.config_echo = config.echo();
      bundle.config_hash = config.hash();
      defa::RunSpec spec{"simulate", config.flags, config.model.pap_epsilon, config.model.fwp_k};
      bundle.runs.push_back(defa::execute_run(spec, config, "simulate", initial ? &*initial : nullptr));
      print_summary(bundle, defa::emit_report(bundle, sim_out));
    } else if (*gen) {
      const auto config = resolve(gen_config, gen_o);
      auto fmap = defa::FmapMask::all_ones(config.model.level_shapes, 0);
      for (int b = 0; b <= gen_block; ++b) {
        const auto in = defa::generate_workload(config.workload, config.model, static_cast<uint32_t>(b));
        auto r = defa::run_pruned_block_quantized(in, config.model, fmap, static_cast<uint32_t>(b));
        if (b == gen_block) {
          const auto bytes = gen_kind == "fmap" ? defa::encode_mask(r.next_fmap_mask)
                                                : defa::encode_mask(r.point_mask, config.model.level_shapes);
          defa::write_mask_file(gen_out, bytes);
          fmt::print("wrote {} ({} bytes)\n", gen_out, bytes.size());
        }
        fmap = std::move(r.next_fmap_mask);
      }
    } else if (*dump) {
      dump_mask(dump_path);
    } else if (*diff) {
      const auto d = defa::diff_reports(diff_a, diff_b);
      for (const auto& l : d.lines) fmt::print("{}\n", l);
      if (!d.identical) return 1;
      fmt::print("identical\n");
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
  return 0;
}
