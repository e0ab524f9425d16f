#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"
#include "ssa/cli.hpp"
#include "ssa/dataset.hpp"
#include "ssa/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ssa;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ssa_lab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

// Runs the CLI and returns {exit code, captured stderr}.
std::pair<int, std::string> run_capture(std::vector<std::string> args) {
  testing::internal::CaptureStderr();
  testing::internal::CaptureStdout();
  const int code = run_cli(std::move(args));
  testing::internal::GetCapturedStdout();
  return {code, testing::internal::GetCapturedStderr()};
}

// Metrics rows with the wall-clock column removed.
std::string metrics_without_wall(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line, out;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') line = line.substr(0, line.rfind(','));
    out += line + "\n";
  }
  return out;
}

class Cli : public testing::Test {
 protected:
  static fs::path dir;

  static void SetUpTestSuite() {
    dir = fs::temp_directory_path() / "ssa_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    ASSERT_EQ(run_capture({"gen-corpus", "--out", (dir / "corpus.txt").string(), "--bytes", "40000", "--seed", "3"})
                  .first,
              0);
    ASSERT_EQ(run_capture({"ingest", "--source", (dir / "corpus.txt").string(), "--kind", "char", "--out",
                           (dir / "corpus.bin").string()})
                  .first,
              0);
    spit(dir / "small.cfg",
         "model.layers = 2\nmodel.dim = 16\nmodel.heads = 2\nmodel.ff = 32\nmodel.vocab = 0\nmodel.context = 32\n"
         "ssa.plan = S2-L4\nssa.sigma_start = 0.1\nssa.sigma_end = 0.225\ntrain.steps = 12\ntrain.warmup = 2\n"
         "train.lr_peak = 0.003\ntrain.batch = 2\ntrain.eval_interval = 4\ntrain.finetune_fraction = 0.25\n"
         "data.path = " +
             (dir / "corpus.bin").string() + "\ndata.valid_tokens = 300\n");
  }

  static std::vector<std::string> train_args(const std::string& id) {
    return {"train", "--config", (dir / "small.cfg").string(), "--out-root", (dir / "runs").string(),
            "--run-id", id, "--quiet"};
  }
};

fs::path Cli::dir;

}  // namespace

TEST(CorpusGen, DeterministicAndSized) {
  const auto a = cli::generate_corpus(5000, 1);
  EXPECT_EQ(a.size(), 5000u);
  EXPECT_EQ(a, cli::generate_corpus(5000, 1));
  EXPECT_NE(a, cli::generate_corpus(5000, 2));
}

TEST(Ingest, CharModeVocabulary) {
  std::string text;
  for (int rep = 0; rep < 20; ++rep)
    for (char c = 'a'; c <= 'z'; ++c) text += c;
  text += " \n";
  const auto d = cli::ingest_text(text, {});
  EXPECT_LE(d.vocab.size(), 30u);
  EXPECT_EQ(d.tokens.size(), text.size());
  EXPECT_EQ(d.train_count, text.size() - std::size_t(std::llround(text.size() * 0.1)));
  for (std::size_t i = 0; i < text.size(); ++i) EXPECT_EQ(d.vocab[d.tokens[i]], std::string(1, text[i]));
}

TEST(Ingest, WordModeCapsVocabulary) {
  cli::IngestOptions o;
  o.kind = DataKind::Word;
  o.max_vocab = 3;
  const auto d = cli::ingest_text("the cat the dog the cat a bird", o);
  ASSERT_EQ(d.vocab.size(), 3u);
  EXPECT_EQ(d.vocab[0], "<unk>");
  EXPECT_EQ(d.vocab[1], "the");
  EXPECT_EQ(d.vocab[2], "cat");
  EXPECT_EQ(d.tokens.size(), 8u);
  EXPECT_EQ(d.tokens[3], 0u);  // dog
}

TEST(Ingest, GridMode) {
  cli::IngestOptions o;
  o.kind = DataKind::Grid;
  o.valid_fraction = 0.5;
  const auto d = cli::ingest_text("1 2\n3 4\n\n4 3\n2 1\n", o);
  ASSERT_TRUE(d.grid.has_value());
  EXPECT_EQ(d.grid->height, 2u);
  EXPECT_EQ(d.grid->width, 2u);
  EXPECT_EQ(d.tokens.size(), 8u);
  EXPECT_EQ(d.train_count, 4u);
  EXPECT_THROW(cli::ingest_text("1 2\n3 4\n\n1 2 3\n", o), Error);
}

TEST(Manifest, GitBlobHash) {
  EXPECT_EQ(cli::git_blob_sha1(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(cli::git_blob_sha1("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_F(Cli, ReingestIsByteIdentical) {
  const auto second = dir / "corpus2.bin";
  ASSERT_EQ(run_capture({"ingest", "--source", (dir / "corpus.txt").string(), "--out", second.string()}).first, 0);
  EXPECT_EQ(slurp(dir / "corpus.bin"), slurp(second));
  const auto d = read_dataset(second);
  EXPECT_EQ(d.tokens.size(), 40000u);
  EXPECT_EQ(run_capture({"ingest", "--source", "file://" + (dir / "corpus.txt").string(), "--out",
                         (dir / "corpus3.bin").string()})
                .first,
            0);
  EXPECT_EQ(slurp(dir / "corpus.bin"), slurp(dir / "corpus3.bin"));
}

TEST_F(Cli, ErrorsMapToExitCodes) {
  auto [code, err] = run_capture({"train", "--config", (dir / "small.cfg").string(), "--plan", "S2-Q4", "--out-root",
                                  (dir / "bad").string()});
  EXPECT_EQ(code, 1);
  const auto j = nlohmann::json::parse(err.substr(0, err.find('\n')));
  EXPECT_EQ(j["exit_code"], 1);
  EXPECT_NE(j["message"].get<std::string>().find("S2-Q4"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "bad"));

  EXPECT_EQ(run_capture({"eval", "--checkpoint", (dir / "missing.bin").string(), "--config",
                         (dir / "small.cfg").string()})
                .first,
            2);
  EXPECT_EQ(run_capture({"dist", "--scheme", "gaussian", "--n", "10", "--windows", "4"}).first, 1);
  EXPECT_EQ(run_capture({"bogus"}).first, 1);
  EXPECT_EQ(cli::exit_code_for(ErrorKind::Numeric), 3);
  EXPECT_EQ(cli::exit_code_for(ErrorKind::MaskedRow), 3);
  EXPECT_EQ(cli::exit_code_for(ErrorKind::Comparability), 2);
  EXPECT_EQ(cli::exit_code_for(ErrorKind::Divisibility), 1);
}

TEST_F(Cli, DistributionImages) {
  const auto white = dir / "white";
  ASSERT_EQ(run_capture({"dist", "--scheme", "unbiased", "--n", "16", "--keep", "16", "--trials", "50", "--out",
                         white.string()})
                .first,
            0);
  const auto pgm = slurp(white.string() + ".pgm");
  ASSERT_GT(pgm.size(), 256u);
  for (std::size_t i = pgm.size() - 256; i < pgm.size(); ++i) EXPECT_EQ(static_cast<unsigned char>(pgm[i]), 255);

  const auto blocks = dir / "blocks";
  ASSERT_EQ(run_capture({"dist", "--scheme", "gaussian", "--n", "16", "--windows", "4", "--sigma-frac", "0",
                         "--trials", "20", "--out", blocks.string()})
                .first,
            0);
  const auto img = slurp(blocks.string() + ".pgm");
  const std::size_t base = img.size() - 256;
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j)
      EXPECT_EQ(static_cast<unsigned char>(img[base + i * 16 + j]), i / 4 == j / 4 ? 255 : 0) << i << "," << j;
  EXPECT_TRUE(fs::exists(blocks.string() + ".csv"));
}

TEST_F(Cli, FlopsTable) {
  const auto out = dir / "flops.csv";
  ASSERT_EQ(run_capture({"flops", "--preset", "desk", "--plan", "S4-L2,S2-L4", "--out", out.string()}).first, 0);
  std::istringstream in(slurp(out));
  std::string line;
  std::map<std::string, std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("plan,", 0) == 0) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    rows[f[0]] = f;
  }
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(std::stoull(rows["S4-L2"][2]) * 2, std::stoull(rows["S0"][2]));
  EXPECT_DOUBLE_EQ(std::stod(rows["S0"][8]), 1.0);
}

TEST_F(Cli, TrainEvalAndReproduce) {
  ASSERT_EQ(run_capture(train_args("a")).first, 0);
  const auto run = dir / "runs" / "a";
  for (const char* f : {"config.txt", "checkpoint.bin", "metrics.csv", "cost.json", "loss.svg", "manifest.json"})
    EXPECT_TRUE(fs::exists(run / f)) << f;

  const auto rows = read_metrics_csv(run / "metrics.csv");
  ASSERT_EQ(rows.size(), 12u);
  for (const auto& r : rows) EXPECT_EQ(r.phase, r.step < 9 ? Phase::Ssa : Phase::Dense);

  const auto cost = nlohmann::json::parse(slurp(run / "cost.json"));
  const double final_loss = cost["final_valid_loss"].get<double>();

  ASSERT_EQ(run_capture({"eval", "--run", run.string(), "--mode", "dense"}).first, 0);
  std::istringstream dense(slurp(run / "eval-dense.csv"));
  std::string line;
  std::getline(dense, line);
  std::getline(dense, line);
  std::getline(dense, line);
  EXPECT_NEAR(std::stod(line.substr(line.find(',', line.find(',') + 1) + 1)), final_loss, 1e-6) << line;

  // One S0 sample reproduces the dense metric.
  ASSERT_EQ(run_capture({"eval", "--run", run.string(), "--mode", "ensemble", "--samples", "1", "--plan", "S0",
                         "--out", (dir / "one.csv").string()})
                .first,
            0);
  std::istringstream one(slurp(dir / "one.csv"));
  std::getline(one, line);
  std::getline(one, line);
  std::getline(one, line);
  std::vector<double> f;
  std::istringstream ls(line);
  for (std::string cell; std::getline(ls, cell, ',');) f.push_back(std::stod(cell));
  EXPECT_EQ(f[1], f[3]);

  ASSERT_EQ(run_capture({"eval", "--run", run.string(), "--mode", "ensemble", "--samples", "50", "--valid-tokens",
                         "64"})
                .first,
            0);
  std::istringstream curve(slurp(run / "eval-ensemble.csv"));
  std::size_t count = 0;
  while (std::getline(curve, line)) count += !line.empty() && line[0] != '#' && line[0] != 's';
  EXPECT_EQ(count, 50u);

  // Reproducing from the manifest gives the same metrics apart from timing.
  ASSERT_EQ(run_capture({"train", "--manifest", (run / "manifest.json").string(), "--out-root",
                         (dir / "runs").string(), "--run-id", "a-again", "--quiet"})
                .first,
            0);
  EXPECT_EQ(metrics_without_wall(run / "metrics.csv"), metrics_without_wall(dir / "runs" / "a-again" / "metrics.csv"));
  EXPECT_EQ(slurp(run / "checkpoint.bin"), slurp(dir / "runs" / "a-again" / "checkpoint.bin"));

  // Same id twice gets a suffixed directory rather than overwriting.
  ASSERT_EQ(run_capture(train_args("a")).first, 0);
  EXPECT_TRUE(fs::exists(dir / "runs" / "a-2" / "metrics.csv"));

  // Normalized costs against the run itself are all one.
  auto [code, err] = run_capture({"compare", "--run", run.string(), "--baseline", run.string()});
  EXPECT_EQ(code, 0) << err;
}

TEST_F(Cli, OutputRootFromEnvironment) {
  const auto root = dir / "env-root";
  ::setenv("SSA_LAB_OUT", root.string().c_str(), 1);
  auto args = train_args("env");
  args.erase(args.begin() + 3, args.begin() + 5);  // drop --out-root
  EXPECT_EQ(run_capture(args).first, 0);
  ::unsetenv("SSA_LAB_OUT");
  EXPECT_TRUE(fs::exists(root / "env" / "manifest.json"));
}
