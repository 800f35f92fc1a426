#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <stdexcept>

#include "defa/bench.hpp"

using namespace defa;
namespace fs = std::filesystem;

namespace {

RunConfig small_config() {
  auto c = default_run_config();
  c.model.level_shapes = {{8, 8}, {4, 4}, {2, 2}, {1, 1}};
  c.model.bounded_ranges.clear();
  c.model.apply_default_ranges();
  c.model.d_in = 8;
  c.model.num_heads = 2;
  c.workload.blocks = 2;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char ch : s) n += ch == '\n';
  return n;
}

}  // namespace

TEST_CASE("config echo round trips") {
  auto c = small_config();
  c.workload.offset_distribution = OffsetDistribution::Gaussian;
  c.workload.offset_spread_px = 1.3;
  c.flags.reuse = false;
  c.sweep_ks = {0.0, 0.25};
  const auto text = c.echo();
  CHECK(text.rfind("format_version = 1\n", 0) == 0);
  const auto back = parse_run_config(text);
  CHECK(back.echo() == text);
  CHECK(back.hash() == c.hash());
}

TEST_CASE("config parse errors") {
  CHECK_THROWS_AS(parse_run_config("seed = 3\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config("format_version = 2\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config("format_version = 1\nbogus = 1\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config("format_version = 1\nd_in = 0\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config("format_version = 1\ndram_pj_per_bit = -1\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config("format_version = 1\nfusion = maybe\n"), std::invalid_argument);
  const auto c = parse_run_config("# comment\nformat_version = 1  # trailing\n\nseed = 42\nlevel_shapes = 6x6, 3x3\n"
                                  "num_levels = 2\n");
  CHECK(c.workload.seed == 42);
  CHECK(c.model.bounded_ranges.size() == 2);
}

TEST_CASE("tampered config changes the hash") {
  const auto c = small_config();
  auto d = c;
  d.model.quant_bits = 11;
  CHECK(c.hash() != d.hash());
}

TEST_CASE("workload determinism") {
  const auto c = small_config();
  const auto a = generate_workload(c.workload, c.model, 1);
  const auto b = generate_workload(c.workload, c.model, 1);
  CHECK(a.query == b.query);
  CHECK(a.fmap == b.fmap);
  CHECK(a.weights.offset == b.weights.offset);
  const auto other = generate_workload(c.workload, c.model, 2);
  CHECK_FALSE(a.query == other.query);
  auto z = c.model;
  z.d_in = 0;
  CHECK_THROWS_AS(generate_workload(c.workload, z, 0), std::invalid_argument);
}

TEST_CASE("temperature controls attainable point sparsity") {
  auto c = small_config();
  c.model.num_heads = 1;
  const double n = c.model.points_per_head();
  auto ratio = [&](double temperature, double eps) {
    auto w = c.workload;
    w.softmax_temperature = temperature;
    const auto in = generate_workload(w, c.model, 0);
    const auto probs = compute_probs(matmul(in.query, in.weights.attn), c.model);
    const auto mask = generate_point_mask(probs, c.model.num_levels, c.model.num_points, eps);
    return 1.0 - static_cast<double>(mask.kept_count()) / static_cast<double>(mask.size());
  };
  CHECK(ratio(1e-4, 0.01) == doctest::Approx((n - 1) / n).epsilon(1e-3));
  CHECK(ratio(1e6, 0.5 / n) == 0.0);
  CHECK(ratio(0.2, 0.01) > ratio(1.0, 0.01));
}

TEST_CASE("presets expand in order") {
  const auto c = small_config();
  auto names = [&](const std::string& p) {
    std::vector<std::string> out;
    for (const auto& r : expand_preset(p, c)) out.push_back(r.name);
    return out;
  };
  CHECK(names("parallelism-ablation") == std::vector<std::string>{"intra", "inter"});
  CHECK(names("fusion-ablation") == std::vector<std::string>{"unfused", "fused"});
  CHECK(names("reuse-ablation") == std::vector<std::string>{"no-reuse", "reuse"});
  CHECK(names("end-to-end") == std::vector<std::string>{"baseline", "defa"});
  const auto sweep = expand_preset("pruning-sweep", c);
  CHECK(sweep.size() == c.sweep_epsilons.size() * c.sweep_ks.size());
  CHECK(sweep.front().epsilon == 0.0);
  CHECK(sweep.front().k == 0.0);
  try {
    expand_preset("nope", c);
    FAIL("expected a throw");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("end-to-end") != std::string::npos);
  }
}

TEST_CASE("every preset runs its internal checks") {
  const auto c = small_config();
  for (const auto& p : preset_names()) {
    const auto b = run_experiment(p, c);
    CHECK(b.ratios.size() == b.runs.size() - 1);
    for (const auto& r : b.ratios) CHECK(r.speedup > 0.0);
  }
}

TEST_CASE("report emission") {
  const auto c = small_config();
  ReportBundle empty;
  empty.preset = "none";
  CHECK(count_lines(runs_csv(empty)) == 1);
  CHECK(count_lines(ratios_csv(empty)) == 1);

  const auto b = run_experiment("fusion-ablation", c);
  CHECK(count_lines(runs_csv(b)) == 3);
  CHECK(count_lines(ratios_csv(b)) == 2);
  CHECK(runs_csv(b).find("\n1,fusion-ablation,unfused," + b.config_hash) != std::string::npos);

  const auto dir = fs::temp_directory_path() / "defa_bench_test";
  fs::remove_all(dir);
  emit_report(b, (dir / "a").string());
  emit_report(run_experiment("fusion-ablation", c), (dir / "b").string());
  for (const char* f : {"runs.csv", "ratios.csv", "report.json"}) CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  CHECK(diff_reports((dir / "a").string(), (dir / "b").string()).identical);

  auto c2 = c;
  c2.workload.seed = 99;
  emit_report(run_experiment("fusion-ablation", c2), (dir / "c").string());
  const auto d = diff_reports((dir / "a").string(), (dir / "c").string());
  CHECK_FALSE(d.identical);
  CHECK_FALSE(d.lines.empty());

  std::ofstream((dir / "file").string()) << "x";
  try {
    emit_report(b, (dir / "file" / "sub").string());
    FAIL("expected a throw");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("file") != std::string::npos);
  }
  fs::remove_all(dir);
}
