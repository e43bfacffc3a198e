#pragma once

// Command-line front end: build | bench | convert | selftest.
//
// Exit codes: 0 ok, 2 config error, 3 input format error, 4 resource error,
// 5 selftest failure. Failures print one line to the error stream:
//   error kind=<config|format|resource|internal> msg=<reason>

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "knng/bench.hpp"
#include "knng/dataset.hpp"
#include "knng/distance.hpp"
#include "knng/error.hpp"
#include "knng/knng.hpp"
#include "knng/multiselect.hpp"

namespace knng::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kFormatError = 3,
  kResourceError = 4,
  kSelftestFailed = 5,
};

inline constexpr const char* kWorkersEnv = "KNNG_WORKERS";

enum class Subcommand { build, bench, convert, selftest };

struct JobConfig {
  Subcommand subcommand = Subcommand::selftest;
  std::string input;
  std::string queries;
  std::string output;
  std::string input_format;   // binary | csv | "" (by extension)
  std::string output_format;  // binary | csv | "" (by extension)
  std::string kind = "dataset";
  std::string metric = "euclidean";
  std::uint32_t k = 10;
  bool include_self = false;
  std::uint32_t lane_groups = 1;
  std::uint32_t row_block = 256;
  std::uint64_t seed = 0;
  bool sort_output = false;
  bool strict = false;
  unsigned workers = 0;
  bool workers_given = false;

  // bench
  std::string mode = "vs_full_sort";
  std::vector<std::uint32_t> ns, qs, ks;
  std::uint32_t trials = 30;
  std::vector<std::string> methods;
  std::string keys = "uniform";
  std::uint64_t memory_budget_mb = 3072;
  int log2_product = 22;
  int ratio_min = -3;
  int ratio_max = 12;
  bool ratios_given = false;

  // selftest
  std::uint32_t selftest_instances = 40;
};

inline DataFormat resolve_format(const std::string& explicit_fmt, const std::string& path) {
  if (explicit_fmt.empty()) return format_from_path(path);
  if (explicit_fmt == "csv") return DataFormat::csv;
  if (explicit_fmt == "binary") return DataFormat::binary;
  throw ConfigError("unknown format '" + explicit_fmt + "'");
}

inline unsigned effective_workers(const JobConfig& cfg) {
  if (cfg.workers_given) return cfg.workers;
  if (const char* env = std::getenv(kWorkersEnv)) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end == env || *end != '\0') throw ConfigError(std::string(kWorkersEnv) + " is not an unsigned integer");
    return static_cast<unsigned>(v);
  }
  return 0;
}

// All paths are checked before any computation begins.
inline void validate_paths(const JobConfig& cfg) {
  auto readable = [](const std::string& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string("missing ") + what);
    if (!std::filesystem::is_regular_file(p)) throw ConfigError(std::string(what) + " not found: " + p);
  };
  auto writable = [](const std::string& p) {
    if (p.empty()) throw ConfigError("missing --out");
    auto parent = std::filesystem::absolute(p).parent_path();
    if (!std::filesystem::is_directory(parent)) throw ConfigError("output directory does not exist: " + parent.string());
  };
  switch (cfg.subcommand) {
    case Subcommand::build:
      readable(cfg.input, "--input");
      if (!cfg.queries.empty()) readable(cfg.queries, "--queries");
      writable(cfg.output);
      break;
    case Subcommand::bench: writable(cfg.output); break;
    case Subcommand::convert:
      readable(cfg.input, "--input");
      writable(cfg.output);
      break;
    case Subcommand::selftest: break;
  }
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open output file " + path);
  return out;
}

inline int run_build(const JobConfig& cfg, std::ostream& log) {
  const Metric metric = parse_metric(cfg.metric);
  const DataFormat out_fmt = resolve_format(cfg.output_format, cfg.output);
  Dataset corpus = load_dataset_file(cfg.input, resolve_format(cfg.input_format, cfg.input));
  BuildOptions opts;
  opts.exclude_self = !cfg.include_self;
  opts.lane_groups = cfg.lane_groups;
  opts.row_block = cfg.row_block;
  opts.seed = cfg.seed;
  opts.sort_output = cfg.sort_output;
  opts.workers = effective_workers(cfg);
  opts.strict_zero_norm = cfg.strict;

  KnnGraph g;
  if (cfg.queries.empty()) {
    g = build_knng(corpus, metric, cfg.k, opts);
  } else {
    Dataset queries = load_dataset_file(cfg.queries, resolve_format(cfg.input_format, cfg.queries));
    if (queries.dim() != corpus.dim())
      throw ConfigError("query dim " + std::to_string(queries.dim()) + " != corpus dim " + std::to_string(corpus.dim()));
    g = build_knn(queries, corpus, metric, cfg.k, opts);
  }
  auto out = open_output(cfg.output);
  if (out_fmt == DataFormat::csv)
    write_graph_csv(out, g);
  else
    write_graph_binary(out, g);
  if (g.meta.zero_norm_keys)
    log << "warning: " << g.meta.zero_norm_keys << " zero-norm pairs assigned key " << kZeroNormKey << '\n';
  return kOk;
}

inline int run_bench(const JobConfig& cfg, std::ostream& log) {
  SweepSpec spec;
  spec.mode = parse_sweep_mode(cfg.mode);
  spec.ns = cfg.ns;
  spec.qs = cfg.qs;
  spec.ks = cfg.ks;
  if (spec.mode == SweepMode::fix_product_vary_ratio && (spec.ns.empty() || cfg.ratios_given))
    fill_fix_product_grid(spec, cfg.log2_product, cfg.ratio_min, cfg.ratio_max);
  spec.trials = cfg.trials;
  spec.seed = cfg.seed;
  spec.lane_groups = cfg.lane_groups;
  spec.workers = effective_workers(cfg);
  spec.memory_budget_bytes = cfg.memory_budget_mb << 20;
  if (cfg.keys == "uniform")
    spec.keys = KeyDistribution::uniform;
  else if (cfg.keys == "duplicates")
    spec.keys = KeyDistribution::duplicates;
  else
    throw ConfigError("unknown key distribution '" + cfg.keys + "'");
  if (!cfg.methods.empty()) {
    spec.methods.clear();
    for (const auto& m : cfg.methods) spec.methods.push_back(parse_bench_method(m));
  }
  auto records = run_sweep(spec);
  auto out = open_output(cfg.output);
  write_bench_csv(out, spec, records);
  log << "wrote " << records.size() << " records to " << cfg.output << '\n';
  return kOk;
}

inline int run_convert(const JobConfig& cfg) {
  const DataFormat in_fmt = resolve_format(cfg.input_format, cfg.input);
  const DataFormat out_fmt = resolve_format(cfg.output_format, cfg.output);
  std::ifstream in(cfg.input, std::ios::binary);
  if (!in) throw ConfigError("cannot open input file " + cfg.input);
  if (cfg.kind == "dataset") {
    Dataset ds = load_dataset(in, in_fmt);
    auto out = open_output(cfg.output);
    write_dataset(out, ds, out_fmt);
    return kOk;
  }
  if (cfg.kind == "graph") {
    KnnGraph g = in_fmt == DataFormat::binary ? read_graph_binary(in) : read_graph_csv(in, parse_metric(cfg.metric));
    g.meta.seed = cfg.seed;
    g.meta.mode = "converted";
    auto out = open_output(cfg.output);
    if (out_fmt == DataFormat::csv)
      write_graph_csv(out, g);
    else
      write_graph_binary(out, g);
    return kOk;
  }
  throw ConfigError("--kind must be dataset or graph");
}

/// Oracle-equivalence checks on small random instances.
inline int run_selftest(const JobConfig& cfg, std::ostream& log) {
  std::mt19937_64 gen(cfg.seed);
  bool ok = true;
  auto report = [&](const std::string& name, bool pass) {
    log << (pass ? "PASS " : "FAIL ") << name << '\n';
    ok = ok && pass;
  };

  bool select_ok = true;
  for (std::uint32_t t = 0; t < cfg.selftest_instances; ++t) {
    const std::uint32_t n = std::uniform_int_distribution<std::uint32_t>(1, 5000)(gen);
    const std::uint32_t k = std::uniform_int_distribution<std::uint32_t>(1, n)(gen);
    const bool dup = t % 2;
    std::vector<Element> row(n);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (std::uint32_t j = 0; j < n; ++j) row[j] = {dup ? std::floor(u(gen) * 16.0f) : u(gen), j};
    NeighborList got = select_k(row, k, 1 + t % kMaxLaneGroups, cfg.seed + t);
    NeighborList want = oracle_sort_select(row, k);
    std::vector<float> a, b;
    for (auto& e : got.entries) a.push_back(e.key);
    for (auto& e : want.entries) b.push_back(e.key);
    std::sort(a.begin(), a.end());
    select_ok = select_ok && a == b;
  }
  report("select_k matches full-sort oracle", select_ok);

  bool part_ok = true;
  for (std::uint32_t t = 0; t < cfg.selftest_instances; ++t) {
    const std::uint32_t n = std::uniform_int_distribution<std::uint32_t>(1, 3000)(gen);
    std::vector<Element> in(n), out(n);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (std::uint32_t j = 0; j < n; ++j) in[j] = {u(gen), j};
    const float pivot = in[std::uniform_int_distribution<std::uint32_t>(0, n - 1)(gen)].key;
    PartitionResult r = partition_pass(std::span<const Element>(in), pivot, out, 1 + t % kMaxLaneGroups);
    for (std::uint32_t j = 0; j < n; ++j) part_ok = part_ok && ((j < r.L) == (out[j].key < pivot));
    part_ok = part_ok && r.L + r.R == n;
  }
  report("partition_pass splits around the pivot", part_ok);

  bool graph_ok = true;
  for (Metric m : {Metric::euclidean_reduced, Metric::cosine, Metric::pearson}) {
    const std::uint32_t n = 96, d = 6, k = 5;
    std::vector<float> v(n * d);
    std::normal_distribution<float> nd;
    for (auto& x : v) x = nd(gen);
    Dataset ds(d, n, v);
    BuildOptions opts;
    opts.seed = cfg.seed;
    opts.sort_output = true;
    opts.workers = 1;
    KnnGraph g = build_knng(ds, m, k, opts);
    auto truth = oracle_knn(ds, ds, m, k + 1, true);
    for (std::uint32_t i = 0; i < n; ++i) {
      // Compare neighbor sets where the k-th/(k+1)-th gap is unambiguous.
      const float gap = truth[i].entries[k].key - truth[i].entries[k - 1].key;
      if (gap < 1e-4f) continue;
      std::vector<std::uint32_t> a, b;
      for (auto& e : g.rows[i].entries) a.push_back(e.idx);
      for (std::uint32_t t = 0; t < k; ++t) b.push_back(truth[i].entries[t].idx);
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      graph_ok = graph_ok && a == b;
    }
  }
  report("build_knng matches direct-distance oracle", graph_ok);

  return ok ? kOk : kSelftestFailed;
}

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return kConfigError;
    case ErrorKind::format: return kFormatError;
    case ErrorKind::resource: return kResourceError;
    case ErrorKind::internal: return kSelftestFailed;
  }
  return kConfigError;
}

inline void print_error(std::ostream& err, const char* kind, const std::string& msg) {
  std::string one_line = msg;
  std::replace(one_line.begin(), one_line.end(), '\n', ' ');
  err << "error kind=" << kind << " msg=" << one_line << '\n';
}

/// Executes a parsed job.
inline int run(const JobConfig& cfg, std::ostream& log, std::ostream& err) {
  try {
    if (cfg.lane_groups < 1 || cfg.lane_groups > kMaxLaneGroups)
      throw ConfigError("--lane-groups must be in 1.." + std::to_string(kMaxLaneGroups));
    validate_paths(cfg);
    switch (cfg.subcommand) {
      case Subcommand::build: return run_build(cfg, log);
      case Subcommand::bench: return run_bench(cfg, log);
      case Subcommand::convert: return run_convert(cfg);
      case Subcommand::selftest: return run_selftest(cfg, log);
    }
  } catch (const Error& e) {
    print_error(err, to_string(e.kind()), e.what());
    return exit_code_for(e.kind());
  } catch (const std::bad_alloc&) {
    print_error(err, "resource", "out of memory");
    return kResourceError;
  }
  return kOk;
}

/// Parses argv and runs the job.
inline int main(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  JobConfig cfg;
  CLI::App app{"Exact brute-force k-NN graph construction with quick multi-select"};
  app.require_subcommand(1);

  auto add_common = [&cfg](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "Random seed for pivots and generated data (default 0)");
    sub->add_option("--lane-groups", cfg.lane_groups, "32-lane groups per partition step, 1..16 (1 = warp mode)");
    sub->add_option_function<unsigned>(
        "--workers", [&cfg](const unsigned& w) { cfg.workers = w, cfg.workers_given = true; },
        std::string("Worker threads, 0 = all cores (env ") + kWorkersEnv + ")");
  };

  auto* build = app.add_subcommand("build", "Build a k-NN graph (or k-NN of --queries against --input)");
  build->add_option("--input", cfg.input, "Corpus dataset (.csv or binary)")->required();
  build->add_option("--queries", cfg.queries, "Query dataset; omit for the k-NN graph of --input");
  build->add_option("--input-format", cfg.input_format, "binary|csv (default: from extension)");
  build->add_option("--metric", cfg.metric, "euclidean|cosine|pearson");
  build->add_option("--k", cfg.k, "Neighbors per query")->required();
  build->add_flag("--include-self", cfg.include_self, "Keep each point's self match in the k-NN graph");
  build->add_option("--row-block", cfg.row_block, "Distance rows materialized at a time per worker");
  build->add_flag("--sort", cfg.sort_output, "Emit neighbors in ascending key order");
  build->add_flag("--strict", cfg.strict, "Fail on zero-norm vectors under cosine/pearson");
  build->add_option("--out", cfg.output, "Graph output path (.csv or binary)")->required();
  build->add_option("--format", cfg.output_format, "binary|csv (default: from extension)");
  add_common(build);

  auto* bench = app.add_subcommand("bench", "Run a selection benchmark sweep and write CSV");
  bench->add_option("--mode", cfg.mode, "fix_Q_vary_nk|fix_product_vary_ratio|fix_n_vary_Q|vs_full_sort");
  bench->add_option("--n", cfg.ns, "Corpus sizes")->delimiter(',');
  bench->add_option("--q", cfg.qs, "Query counts")->delimiter(',');
  bench->add_option("--k", cfg.ks, "k values")->delimiter(',')->required();
  bench->add_option("--trials", cfg.trials, "Timed trials per point (default 30)");
  bench->add_option("--methods", cfg.methods, "quick_multiselect,full_sort,nth_element_loop")->delimiter(',');
  bench->add_option("--keys", cfg.keys, "uniform|duplicates");
  bench->add_option("--memory-budget-mb", cfg.memory_budget_mb, "Refuse grid points above this size");
  bench->add_option_function<int>("--log2-product", [&cfg](const int& v) { cfg.log2_product = v, cfg.ratios_given = true; },
                                  "fix_product: log2(n*Q) (default 22)");
  bench->add_option_function<int>("--ratio-min", [&cfg](const int& v) { cfg.ratio_min = v, cfg.ratios_given = true; },
                                  "fix_product: smallest log2(n/Q) (default -3)");
  bench->add_option_function<int>("--ratio-max", [&cfg](const int& v) { cfg.ratio_max = v, cfg.ratios_given = true; },
                                  "fix_product: largest log2(n/Q) (default 12)");
  bench->add_option("--out", cfg.output, "CSV output path")->required();
  add_common(bench);

  auto* convert = app.add_subcommand("convert", "Convert datasets or graphs between CSV and binary");
  convert->add_option("--input", cfg.input, "Input path")->required();
  convert->add_option("--out", cfg.output, "Output path")->required();
  convert->add_option("--kind", cfg.kind, "dataset|graph (default dataset)");
  convert->add_option("--input-format", cfg.input_format, "binary|csv (default: from extension)");
  convert->add_option("--format", cfg.output_format, "binary|csv (default: from extension)");
  convert->add_option("--metric", cfg.metric, "Metric tag for CSV graph input");
  convert->add_option("--seed", cfg.seed, "Seed echoed into CSV graph metadata");

  auto* selftest = app.add_subcommand("selftest", "Check the engine against oracles on small random inputs");
  selftest->add_option("--instances", cfg.selftest_instances, "Random instances per check");
  selftest->add_option("--seed", cfg.seed, "Seed for instance generation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    auto chosen = app.get_subcommands();
    log << (chosen.empty() ? app.help() : chosen.front()->help());
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    log << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    print_error(err, "config", e.what());
    return kConfigError;
  }

  if (build->parsed()) cfg.subcommand = Subcommand::build;
  else if (bench->parsed()) cfg.subcommand = Subcommand::bench;
  else if (convert->parsed()) cfg.subcommand = Subcommand::convert;
  else cfg.subcommand = Subcommand::selftest;
  return run(cfg, log, err);
}

}  // namespace knng::cli
