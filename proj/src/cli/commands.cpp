#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "ssa/checkpoint.hpp"
#include "ssa/cli.hpp"
#include "ssa/ensemble.hpp"
#include "ssa/pipeline.hpp"

namespace ssa::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path output_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("SSA_LAB_OUT"); env && *env) return env;
  return "runs";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !out.write(text.data(), std::streamsize(text.size()))) fail(ErrorKind::Data, "cannot write " + path.string());
}

json read_json(const fs::path& path) {
  try {
    return json::parse(file_text(path));
  } catch (const json::exception& e) {
    fail(ErrorKind::Data, path.string() + ": " + e.what());
  }
}

std::optional<GridShape> parse_grid_flag(const std::string& text) {
  if (text.empty()) return std::nullopt;
  const auto x = text.find('x');
  try {
    if (x != std::string::npos) {
      std::size_t used = 0;
      const auto h = std::stoul(text.substr(0, x), &used);
      if (used == x) {
        const auto rest = text.substr(x + 1);
        const auto w = std::stoul(rest, &used);
        if (used == rest.size() && h > 0 && w > 0) return GridShape{h, w};
      }
    }
  } catch (const std::exception&) {
  }
  fail(ErrorKind::Config, "expected a grid shape HxW, got '" + text + "'");
}

// Config text with overrides applied, and relative data paths anchored at
// the config file's directory.
TrainConfig load_train_config(const fs::path& path, const std::map<std::string, std::string>& overrides) {
  ConfigFile file = ConfigFile::load(path);
  for (const auto& [k, v] : overrides) file.set(k, v);
  TrainConfig c = TrainConfig::from_file(file);
  if (!c.data_path.empty() && fs::path(c.data_path).is_relative() && !overrides.count("data.path")) {
    c.data_path = (path.parent_path() / c.data_path).lexically_normal().string();
  }
  return c;
}

fs::path unique_dir(const fs::path& root, const std::string& id) {
  fs::path dir = root / id;
  for (int k = 2; fs::exists(dir); ++k) dir = root / (id + "-" + std::to_string(k));
  return dir;
}

json cost_json(const TrainResult& r) {
  return json{{"schema", "ssa-cost/1"},
              {"run", r.cost.run},
              {"dataset", r.cost.dataset},
              {"steps", r.cost.steps},
              {"compute_flops", r.cost.compute},
              {"peak_memory_bytes", r.cost.peak_memory},
              {"steps_per_second", r.cost.speed},
              {"score_flops", r.score_flops},
              {"measured_score_macs", r.score_macs},
              {"switch_step", r.switch_step},
              {"initial_valid_loss", r.initial_valid_loss},
              {"final_valid_loss", r.final_valid_loss},
              {"final_valid_bits", bits_from_nats(r.final_valid_loss)}};
}

CostReport cost_from_json(const json& j) {
  try {
    CostReport c;
    c.run = j.at("run").get<std::string>();
    c.dataset = j.at("dataset").get<std::string>();
    c.steps = j.at("steps").get<std::size_t>();
    c.compute = j.at("compute_flops").get<double>();
    c.peak_memory = j.at("peak_memory_bytes").get<double>();
    c.speed = j.at("steps_per_second").get<double>();
    return c;
  } catch (const json::exception& e) {
    fail(ErrorKind::Data, std::string("malformed cost report: ") + e.what());
  }
}

void print_normalized(const NormalizedCost& n) {
  std::printf("normalized C/M/S = %.4f / %.4f / %.4f\n", n.compute, n.memory, n.speed);
}

// ---- train ----

struct TrainArgs {
  std::string config, manifest, plan, data, run_id, out_root, baseline;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, const std::string& command_line) {
  if (a.config.empty() == a.manifest.empty()) fail(ErrorKind::Config, "train needs exactly one of --config or --manifest");
  std::map<std::string, std::string> overrides;
  if (!a.plan.empty()) overrides["ssa.plan"] = a.plan;
  if (!a.data.empty()) overrides["data.path"] = fs::absolute(a.data).lexically_normal().string();
  if (a.seed) overrides["train.seed"] = std::to_string(*a.seed);
  if (a.steps) overrides["train.steps"] = std::to_string(*a.steps);

  TrainConfig config;
  if (!a.manifest.empty()) {
    const json m = read_json(a.manifest);
    if (!m.contains("config") || !m["config"].is_string()) fail(ErrorKind::Data, "manifest lacks a config snapshot");
    ConfigFile file = ConfigFile::parse(m["config"].get<std::string>());
    for (const auto& [k, v] : overrides) file.set(k, v);
    config = TrainConfig::from_file(file);
  } else {
    config = load_train_config(a.config, overrides);
    if (!config.data_path.empty()) config.data_path = fs::absolute(config.data_path).lexically_normal().string();
  }
  if (config.data_path.empty()) fail(ErrorKind::Config, "data.path is not set");
  // Fail on a bad plan before touching the data or the file system.
  parse_plan(config.plan_tag, config.model.layer_count, config.sigma, config.model.mask_kind == MaskKind::Causal);

  const std::string snapshot = config.to_file().serialize();
  const std::string config_sha = git_blob_sha1(snapshot);
  const TrainConfig consumed = TrainConfig::from_file(ConfigFile::parse(snapshot));
  const std::string dataset_text = file_text(consumed.data_path);
  const std::string dataset_sha = git_blob_sha1(dataset_text);
  const TokenDataset data = read_dataset(consumed.data_path);

  const fs::path root = output_root(a.out_root);
  fs::create_directories(root);
  const std::string id = a.run_id.empty() ? consumed.plan_tag + "-seed" + std::to_string(consumed.seed) + "-" +
                                                config_sha.substr(0, 8)
                                          : a.run_id;
  const fs::path dir = unique_dir(root, id);
  fs::create_directories(dir);
  write_text(dir / "config.txt", snapshot);

  const std::string started = utc_now();
  const ProgressFn progress = [&](const MetricsRow& r) {
    if (a.quiet || !r.has_valid) return;
    std::printf("step %zu %s lr=%.3g train=%.4f valid=%.4f (%.3f bits) %.1fs\n", r.step, phase_name(r.phase), r.lr,
                r.train_loss, r.valid_loss, bits_from_nats(r.valid_loss), r.wall_ms / 1000.0);
    std::fflush(stdout);
  };
  TrainResult result = train(consumed, data, progress);
  result.cost.dataset = dataset_sha;

  save_model(dir / "checkpoint.bin", *result.model);
  write_metrics_csv(dir / "metrics.csv", consumed, result.metrics);
  json cost = cost_json(result);
  if (!a.baseline.empty()) {
    const auto n = normalize_costs(result.cost, cost_from_json(read_json(fs::path(a.baseline) / "cost.json")));
    cost["normalized"] = {{"baseline", a.baseline}, {"compute", n.compute}, {"memory", n.memory}, {"speed", n.speed}};
    print_normalized(n);
  }
  write_text(dir / "cost.json", cost.dump(2) + "\n");

  Series train_curve{"train", {}, {}}, valid_curve{"validation", {}, {}};
  for (const auto& r : result.metrics) {
    train_curve.x.push_back(double(r.step));
    train_curve.y.push_back(r.train_loss);
    if (r.has_valid) {
      valid_curve.x.push_back(double(r.step));
      valid_curve.y.push_back(r.valid_loss);
    }
  }
  write_line_chart_svg(dir / "loss.svg", "Loss, plan " + consumed.plan_tag, "step", "nats per token",
                       {train_curve, valid_curve});

  const json manifest{{"schema", "ssa-manifest/1"},
                      {"run_id", dir.filename().string()},
                      {"command", command_line},
                      {"seed", consumed.seed},
                      {"plan", consumed.plan_tag},
                      {"config", snapshot},
                      {"config_sha1", config_sha},
                      {"dataset", {{"path", consumed.data_path}, {"sha1", dataset_sha}}},
                      {"started_at", started},
                      {"finished_at", utc_now()},
                      {"outputs",
                       {{"config", "config.txt"},
                        {"checkpoint", "checkpoint.bin"},
                        {"metrics", "metrics.csv"},
                        {"cost", "cost.json"},
                        {"loss_chart", "loss.svg"}}}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  std::printf("run %s: final validation %.6f nats (%.4f bits per token), %zu steps\n", dir.string().c_str(),
              result.final_valid_loss, bits_from_nats(result.final_valid_loss), consumed.steps);
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string run, checkpoint, config, data, mode = "dense", plan, out, aggregation = "mean-probability";
  std::size_t samples = 50, overlap = 0;
  std::optional<std::size_t> valid_tokens;
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a) {
  fs::path checkpoint = a.checkpoint, config_path = a.config;
  if (!a.run.empty()) {
    if (checkpoint.empty()) checkpoint = fs::path(a.run) / "checkpoint.bin";
    if (config_path.empty()) config_path = fs::path(a.run) / "config.txt";
  }
  if (checkpoint.empty()) fail(ErrorKind::Config, "eval needs --run or --checkpoint");
  if (config_path.empty()) config_path = checkpoint.parent_path() / "config.txt";
  if (a.mode != "dense" && a.mode != "ensemble") fail(ErrorKind::Config, "--mode must be dense or ensemble");
  std::map<std::string, std::string> overrides;
  if (!a.data.empty()) overrides["data.path"] = a.data;
  const TrainConfig config = load_train_config(config_path, overrides);
  const TokenDataset data = read_dataset(config.data_path);
  Model model(resolve_model_config(config, data), 0);
  load_model(checkpoint, model);
  const std::size_t n = model.config().max_len;
  if (a.overlap >= n) fail(ErrorKind::Config, "--overlap must be below the context length " + std::to_string(n));
  const auto stream = validation_stream(data, a.valid_tokens.value_or(config.valid_tokens));

  EnsembleSpec spec;
  spec.samples = a.samples;
  spec.seed = a.seed;
  spec.plan = parse_plan(a.plan.empty() ? config.plan_tag : a.plan, model.config().layer_count, config.sigma,
                         model.config().mask_kind == MaskKind::Causal);
  if (a.aggregation == "mean-value") spec.aggregation = Aggregation::MeanValue;
  else if (a.aggregation != "mean-probability") fail(ErrorKind::Config, "unknown aggregation '" + a.aggregation + "'");

  const bool ensemble = a.mode == "ensemble";
  const auto r = sliding_window_eval(model, stream, n, a.overlap, ensemble ? EvalMode::Ensemble : EvalMode::Dense, spec);
  fs::path out = a.out;
  if (out.empty()) out = (a.run.empty() ? fs::path(".") : fs::path(a.run)) / ("eval-" + a.mode + ".csv");
  if (ensemble) {
    write_ensemble_csv(out, r.ensemble, spec);
    Series curve{"ensemble", {}, r.ensemble.curve}, dense{"renormalized", {}, {}};
    for (std::size_t s = 0; s < r.ensemble.curve.size(); ++s) {
      curve.x.push_back(double(s + 1));
      dense.x.push_back(double(s + 1));
      dense.y.push_back(r.ensemble.renormalized);
    }
    auto svg = out;
    write_line_chart_svg(svg.replace_extension(".svg"), "Self-ensemble, plan " + spec.plan.tag, "samples",
                         "bits per token", {curve, dense});
    std::printf("ensemble %zu samples: %.6f bits per token (single sample %.6f, renormalized %.6f), masked rows %zu\n",
                spec.samples, r.ensemble.aggregate, r.ensemble.per_sample.front(), r.ensemble.renormalized,
                r.ensemble.masked_rows);
  } else {
    std::ofstream csv(out, std::ios::trunc);
    if (!csv) fail(ErrorKind::Data, "cannot write " + out.string());
    char line[256];
    csv << "# schema=ssa-eval/1 mode=dense context=" << n << " overlap=" << a.overlap << "\n";
    csv << "mode,bits_per_token,nats_per_token,perplexity,scored,windows\n";
    std::snprintf(line, sizeof line, "dense,%.9f,%.9f,%.9f,%zu,%zu\n", r.bits_per_token, r.nats_per_token,
                  std::exp(r.nats_per_token), r.scored, r.windows);
    csv << line;
  }
  std::printf("bits_per_token=%.9f nats_per_token=%.9f perplexity=%.6f scored=%zu windows=%zu\n", r.bits_per_token,
              r.nats_per_token, std::exp(r.nats_per_token), r.scored, r.windows);
  return 0;
}

// ---- dist ----

struct DistArgs {
  std::string scheme, out = "dist", grid;
  std::optional<std::size_t> n, windows, keep;
  double sigma_frac = 0.125;
  std::size_t trials = 10000;
  std::uint64_t seed = 0;
};

int cmd_dist(const DistArgs& a) {
  SamplingScheme scheme;
  scheme.kind = parse_scheme(a.scheme);
  scheme.sigma_frac = a.sigma_frac;
  scheme.grid = parse_grid_flag(a.grid);
  const bool two_d = scheme.kind == SchemeKind::CausalGaussian2d;
  if (two_d != scheme.grid.has_value()) fail(ErrorKind::Config, "--grid goes with causal-gaussian-2d and nothing else");
  std::size_t n = a.n.value_or(scheme.grid ? scheme.grid->cells() : 0);
  if (n == 0) fail(ErrorKind::Config, "--n is required");
  if (scheme.grid && n != scheme.grid->cells()) fail(ErrorKind::Config, "--n must equal the grid cell count");
  std::size_t param = 0;
  if (scheme.kind == SchemeKind::Unbiased) {
    if (a.windows) fail(ErrorKind::Config, "the unbiased scheme takes --keep, not --windows");
    if (!a.keep) fail(ErrorKind::Config, "the unbiased scheme needs --keep");
    param = *a.keep;
  } else {
    if (a.keep) fail(ErrorKind::Config, "gaussian schemes take --windows, not --keep");
    if (!a.windows) fail(ErrorKind::Config, "gaussian schemes need --windows");
    param = *a.windows;
  }
  if (a.trials == 0) fail(ErrorKind::Config, "--trials must be positive");
  scheme.validate();
  RandomSource rng(a.seed);
  const Tensor p = estimate_sampling_probability(scheme, n, param, a.trials, rng);
  char comment[256];
  std::snprintf(comment, sizeof comment, "schema=ssa-dist/1 scheme=%s n=%zu %s=%zu sigma_frac=%g trials=%zu seed=%llu",
                scheme_name(scheme.kind).c_str(), n, scheme.kind == SchemeKind::Unbiased ? "keep" : "windows", param,
                a.sigma_frac, a.trials, static_cast<unsigned long long>(a.seed));
  const fs::path prefix = a.out;
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  write_matrix_csv(prefix.string() + ".csv", p, comment);
  write_pgm(prefix.string() + ".pgm", p);
  std::printf("%s\nmean pair distance %.4f (n/4 = %.2f)\nwrote %s.csv and %s.pgm\n", comment, mean_pair_distance(p),
              double(n) / 4.0, prefix.string().c_str(), prefix.string().c_str());
  return 0;
}

// ---- flops ----

struct FlopsArgs {
  std::string config, preset, out;
  std::vector<std::string> plans;
  std::optional<std::size_t> n, batch;
};

int cmd_flops(const FlopsArgs& a) {
  ModelConfig model;
  SigmaSchedule sigma;
  std::vector<std::string> plans = a.plans;
  std::size_t batch = a.batch.value_or(1);
  std::string label;
  if (!a.config.empty()) {
    if (!a.preset.empty()) fail(ErrorKind::Config, "use --config or --preset, not both");
    const TrainConfig c = load_train_config(a.config, {});
    model = c.model;
    sigma = c.sigma;
    if (model.vocab_size == 0) {
      if (c.data_path.empty()) fail(ErrorKind::Config, "model.vocab is 0 and no dataset is configured");
      model = resolve_model_config(c, read_dataset(c.data_path));
    }
    if (plans.empty()) plans.push_back(c.plan_tag);
    if (!a.batch) batch = c.batch;
    label = a.config;
  } else if (a.preset.empty() || a.preset == "desk") {
    model = desk_model_config();
    label = "desk";
  } else if (a.preset == "large") {
    model = large_model_config();
    label = "large";
  } else {
    fail(ErrorKind::Config, "unknown preset '" + a.preset + "' (desk or large)");
  }
  if (plans.empty()) plans.push_back("S" + std::to_string(model.layer_count) + "-L4");
  const std::size_t n = a.n.value_or(model.max_len);
  if (n > model.max_len) model.max_len = n;
  model.grid.reset();
  if (model.rel_kind == RelKind::Axial2d) model.rel_kind = RelKind::Alibi;

  const bool causal = model.mask_kind == MaskKind::Causal;
  const SsaPlan base = parse_plan("S0", model.layer_count, sigma, causal);
  const auto base_flops = count_flops(model, base, n);
  const auto base_mem = estimate_peak_memory(model, base, n, batch);
  std::vector<SsaPlan> rows{base};
  for (const auto& tag : plans)
    if (tag != "S0") rows.push_back(parse_plan(tag, model.layer_count, sigma, causal));

  std::ostringstream csv;
  csv << "# schema=ssa-flops/1 config=" << label << " n=" << n << " batch=" << batch << "\n";
  csv << "plan,projection_flops,score_flops,value_flops,feed_forward_flops,output_flops,total_flops,"
         "peak_memory_bytes,compute_norm,memory_norm\n";
  std::printf("%-10s %14s %14s %14s %16s %9s %9s\n", "plan", "score FLOPs", "value FLOPs", "total FLOPs",
              "peak memory B", "C", "M");
  for (const auto& plan : rows) {
    const auto f = count_flops(model, plan, n);
    const auto m = estimate_peak_memory(model, plan, n, batch);
    const double c = double(f.total()) / double(base_flops.total());
    const double mm = double(m.total()) / double(base_mem.total());
    std::printf("%-10s %14llu %14llu %14llu %16llu %9.4f %9.4f\n", plan.tag.c_str(),
                static_cast<unsigned long long>(f.scores), static_cast<unsigned long long>(f.values),
                static_cast<unsigned long long>(f.total()), static_cast<unsigned long long>(m.total()), c, mm);
    csv << plan.tag << "," << f.projections << "," << f.scores << "," << f.values << "," << f.feed_forward << ","
        << f.output << "," << f.total() << "," << m.total() << ",";
    char norm[64];
    std::snprintf(norm, sizeof norm, "%.6f,%.6f\n", c, mm);
    csv << norm;
  }
  if (!a.out.empty()) write_text(a.out, csv.str());
  return 0;
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse:
    case ErrorKind::Config:
    case ErrorKind::InvalidInput:
    case ErrorKind::Dimension:
    case ErrorKind::Divisibility:
    case ErrorKind::Contract:
      return 1;
    case ErrorKind::Data:
    case ErrorKind::Compatibility:
    case ErrorKind::Comparability:
      return 2;
    case ErrorKind::Numeric:
    case ErrorKind::MaskedRow:
      return 3;
  }
  return 1;
}

namespace {

int report(const std::string& kind, const std::string& message, int code) {
  std::cerr << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << std::endl;
  return code;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Stochastic subsampled self-attention lab"};
  app.require_subcommand(1);
  std::string command_line;
  for (int i = 0; i < argc; ++i) command_line += (i ? " " : "") + std::string(argv[i]);

  std::string corpus_out;
  std::size_t corpus_bytes = 1 << 20;
  std::uint64_t corpus_seed = 0;
  auto* gen = app.add_subcommand("gen-corpus", "Write a synthetic text corpus");
  gen->add_option("--out", corpus_out, "Output text file")->required();
  gen->add_option("--bytes", corpus_bytes, "Corpus size in bytes");
  gen->add_option("--seed", corpus_seed, "Generator seed");

  std::string source, ingest_out, kind = "char", ingest_grid;
  IngestOptions ingest_opts;
  auto* ingest = app.add_subcommand("ingest", "Tokenize a text or grid source into an SSADATA1 file");
  ingest->add_option("--source", source, "Path or URL")->required();
  ingest->add_option("--kind", kind, "char | word | grid");
  ingest->add_option("--out", ingest_out, "Output dataset file")->required();
  ingest->add_option("--valid-fraction", ingest_opts.valid_fraction, "Held-out tail fraction");
  ingest->add_option("--max-vocab", ingest_opts.max_vocab, "Vocabulary cap");
  ingest->add_option("--grid", ingest_grid, "Grid shape HxW");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model into a run directory");
  tr->add_option("--config", ta.config, "Config file");
  tr->add_option("--manifest", ta.manifest, "Reproduce the run recorded in a manifest");
  tr->add_option("--plan", ta.plan, "Attention plan tag, e.g. S0, S4-L4, S2-U50");
  tr->add_option("--data", ta.data, "Dataset override");
  tr->add_option("--seed", ta.seed, "Seed override");
  tr->add_option("--steps", ta.steps, "Step count override");
  tr->add_option("--run-id", ta.run_id, "Run directory name");
  tr->add_option("--out-root", ta.out_root, "Output root (default $SSA_LAB_OUT or ./runs)");
  tr->add_option("--baseline", ta.baseline, "Baseline run directory for normalized costs");
  tr->add_flag("--quiet", ta.quiet, "No progress lines");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the validation split");
  ev->add_option("--run", ea.run, "Run directory");
  ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint file");
  ev->add_option("--config", ea.config, "Config file (default: config.txt beside the checkpoint)");
  ev->add_option("--data", ea.data, "Dataset override");
  ev->add_option("--mode", ea.mode, "dense | ensemble");
  ev->add_option("--samples", ea.samples, "Ensemble samples");
  ev->add_option("--overlap", ea.overlap, "Sliding-window overlap");
  ev->add_option("--plan", ea.plan, "Inference plan (default: training plan)");
  ev->add_option("--aggregation", ea.aggregation, "mean-probability | mean-value");
  ev->add_option("--seed", ea.seed, "Ensemble seed");
  ev->add_option("--valid-tokens", ea.valid_tokens, "Validation tokens to score");
  ev->add_option("--out", ea.out, "Output CSV");

  DistArgs da;
  auto* di = app.add_subcommand("dist", "Estimate a sampling scheme's pairing probabilities");
  di->add_option("--scheme", da.scheme, "unbiased | gaussian | causal-gaussian | causal-gaussian-2d")->required();
  di->add_option("--n", da.n, "Sequence length");
  di->add_option("--windows", da.windows, "Windows (gaussian schemes)");
  di->add_option("--keep", da.keep, "Kept sources (unbiased)");
  di->add_option("--sigma-frac", da.sigma_frac, "Noise scale relative to the length");
  di->add_option("--trials", da.trials, "Monte-Carlo trials");
  di->add_option("--seed", da.seed, "Seed");
  di->add_option("--grid", da.grid, "Grid shape HxW for the 2-D scheme");
  di->add_option("--out", da.out, "Output prefix for .csv and .pgm");

  FlopsArgs fa;
  auto* fl = app.add_subcommand("flops", "Analytic compute and memory table");
  fl->add_option("--config", fa.config, "Config file");
  fl->add_option("--preset", fa.preset, "desk | large");
  fl->add_option("--plan", fa.plans, "Plan tags")->delimiter(',');
  fl->add_option("--n", fa.n, "Sequence length");
  fl->add_option("--batch", fa.batch, "Batch size");
  fl->add_option("--out", fa.out, "Output CSV");

  std::string cmp_run, cmp_base;
  auto* cmp = app.add_subcommand("compare", "Normalize a run's costs against a baseline run");
  cmp->add_option("--run", cmp_run, "Run directory")->required();
  cmp->add_option("--baseline", cmp_base, "Baseline run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("usage", e.what(), 1);
  }

  try {
    if (*gen) {
      write_text(corpus_out, generate_corpus(corpus_bytes, corpus_seed));
      std::printf("wrote %zu bytes to %s\n", corpus_bytes, corpus_out.c_str());
      return 0;
    }
    if (*ingest) {
      if (kind == "char" || kind == "text-char") ingest_opts.kind = DataKind::Char;
      else if (kind == "word" || kind == "text-word") ingest_opts.kind = DataKind::Word;
      else if (kind == "grid") ingest_opts.kind = DataKind::Grid;
      else fail(ErrorKind::Config, "unknown ingest kind '" + kind + "'");
      ingest_opts.grid = parse_grid_flag(ingest_grid);
      const TokenDataset d = ingest_text(read_source(source), ingest_opts);
      write_dataset(ingest_out, d);
      std::printf("%s: %zu tokens (%zu train, %zu validation), vocabulary %zu\n", ingest_out.c_str(), d.tokens.size(),
                  d.train_count, d.tokens.size() - d.train_count, d.vocab.size());
      return 0;
    }
    if (*tr) return cmd_train(ta, command_line);
    if (*ev) return cmd_eval(ea);
    if (*di) return cmd_dist(da);
    if (*fl) return cmd_flops(fa);
    if (*cmp) {
      const auto run = cost_from_json(read_json(fs::path(cmp_run) / "cost.json"));
      const auto base = cost_from_json(read_json(fs::path(cmp_base) / "cost.json"));
      print_normalized(normalize_costs(run, base));
      return 0;
    }
  } catch (const Error& e) {
    return report(error_kind_name(e.kind()), e.what(), exit_code_for(e.kind()));
  } catch (const fs::filesystem_error& e) {
    return report("data", e.what(), 2);
  } catch (const std::exception& e) {
    return report("internal", e.what(), 2);
  }
  return 1;
}

}  // namespace ssa::cli
