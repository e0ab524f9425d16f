#include "ssa/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ssa/error.hpp"

namespace ssa {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::size_t to_size(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || end != value.data() + value.size()) {
    fail(ErrorKind::Config, key + ": expected a nonnegative integer, got '" + value + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || end != value.data() + value.size() || !std::isfinite(out)) {
    fail(ErrorKind::Config, key + ": expected a number, got '" + value + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  fail(ErrorKind::Config, key + ": expected true/false, got '" + value + "'");
}

std::optional<GridShape> to_grid(const std::string& key, const std::string& value) {
  if (value == "none") return std::nullopt;
  const auto x = value.find('x');
  if (x == std::string::npos) fail(ErrorKind::Config, key + ": expected HxW or none, got '" + value + "'");
  return GridShape{to_size(key, value.substr(0, x)), to_size(key, value.substr(x + 1))};
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string key = eq == std::string::npos ? std::string{} : trim(line.substr(0, eq));
    if (eq == std::string::npos || key.find('.') == std::string::npos || key.front() == '.' || key.back() == '.') {
      fail(ErrorKind::Config, "config line " + std::to_string(line_no) + ": expected 'section.key = value'");
    }
    if (cfg.has(key)) fail(ErrorKind::Config, "config line " + std::to_string(line_no) + ": duplicate key " + key);
    cfg.entries_.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Config, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool ConfigFile::has(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return true;
  return false;
}

const std::string& ConfigFile::get(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  fail(ErrorKind::Config, "missing config key " + key);
}

void ConfigFile::set(const std::string& key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(key, std::move(value));
}

std::string ConfigFile::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

std::size_t finetune_start(std::size_t steps, double finetune_fraction) {
  // The epsilon keeps exact products such as 0.9 * 1000 from rounding up.
  return static_cast<std::size_t>(std::ceil((1.0 - finetune_fraction) * double(steps) - 1e-9));
}

void TrainConfig::validate() const {
  if (steps == 0) fail(ErrorKind::Config, "train.steps must be positive");
  if (!(finetune_fraction >= 0.0 && finetune_fraction <= 0.5)) {
    fail(ErrorKind::Config, "train.finetune_fraction must lie in [0, 0.5]");
  }
  if (batch == 0) fail(ErrorKind::Config, "train.batch must be positive");
  if (eval_interval == 0) fail(ErrorKind::Config, "train.eval_interval must be positive");
  if (!(lr_peak > 0.0) || lr_final < 0.0) fail(ErrorKind::Config, "learning rates must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) fail(ErrorKind::Config, "betas must be in [0,1)");
  if (!(clip > 0.0)) fail(ErrorKind::Config, "train.clip must be positive");
  if (warmup > steps) fail(ErrorKind::Config, "train.warmup exceeds train.steps");
  if (valid_tokens < 2) fail(ErrorKind::Config, "data.valid_tokens must be at least 2");
}

TrainConfig TrainConfig::from_file(const ConfigFile& file) {
  TrainConfig c;
  for (const auto& [key, value] : file.entries()) {
    if (key == "model.layers") c.model.layer_count = to_size(key, value);
    else if (key == "model.dim") c.model.model_dim = to_size(key, value);
    else if (key == "model.heads") c.model.head_count = to_size(key, value);
    else if (key == "model.ff") c.model.ff_dim = to_size(key, value);
    else if (key == "model.vocab") c.model.vocab_size = to_size(key, value);
    else if (key == "model.context") c.model.max_len = to_size(key, value);
    else if (key == "model.mask") c.model.mask_kind = parse_mask_kind(value);
    else if (key == "model.rel") c.model.rel_kind = parse_rel_kind(value);
    else if (key == "model.grid") c.model.grid = to_grid(key, value);
    else if (key == "ssa.plan") c.plan_tag = value;
    else if (key == "ssa.sigma_start") c.sigma.start = to_double(key, value);
    else if (key == "ssa.sigma_end") c.sigma.end = to_double(key, value);
    else if (key == "train.steps") c.steps = to_size(key, value);
    else if (key == "train.warmup") c.warmup = to_size(key, value);
    else if (key == "train.lr_peak") c.lr_peak = to_double(key, value);
    else if (key == "train.lr_final") c.lr_final = to_double(key, value);
    else if (key == "train.batch") c.batch = to_size(key, value);
    else if (key == "train.seed") c.seed = to_size(key, value);
    else if (key == "train.finetune_fraction") c.finetune_fraction = to_double(key, value);
    else if (key == "train.eval_interval") c.eval_interval = to_size(key, value);
    else if (key == "train.clip") c.clip = to_double(key, value);
    else if (key == "train.beta1") c.beta1 = to_double(key, value);
    else if (key == "train.beta2") c.beta2 = to_double(key, value);
    else if (key == "train.dense_only") c.dense_only = to_bool(key, value);
    else if (key == "data.path") c.data_path = value;
    else if (key == "data.valid_tokens") c.valid_tokens = to_size(key, value);
    else fail(ErrorKind::Config, "unknown config key " + key);
  }
  c.validate();
  return c;
}

ConfigFile TrainConfig::to_file() const {
  ConfigFile f;
  f.set("model.layers", std::to_string(model.layer_count));
  f.set("model.dim", std::to_string(model.model_dim));
  f.set("model.heads", std::to_string(model.head_count));
  f.set("model.ff", std::to_string(model.ff_dim));
  f.set("model.vocab", std::to_string(model.vocab_size));
  f.set("model.context", std::to_string(model.max_len));
  f.set("model.mask", mask_kind_name(model.mask_kind));
  f.set("model.rel", rel_kind_name(model.rel_kind));
  f.set("model.grid", model.grid ? std::to_string(model.grid->height) + "x" + std::to_string(model.grid->width)
                                 : std::string("none"));
  f.set("ssa.plan", plan_tag);
  f.set("ssa.sigma_start", format_double(sigma.start));
  f.set("ssa.sigma_end", format_double(sigma.end));
  f.set("train.steps", std::to_string(steps));
  f.set("train.warmup", std::to_string(warmup));
  f.set("train.lr_peak", format_double(lr_peak));
  f.set("train.lr_final", format_double(lr_final));
  f.set("train.batch", std::to_string(batch));
  f.set("train.seed", std::to_string(seed));
  f.set("train.finetune_fraction", format_double(finetune_fraction));
  f.set("train.eval_interval", std::to_string(eval_interval));
  f.set("train.clip", format_double(clip));
  f.set("train.beta1", format_double(beta1));
  f.set("train.beta2", format_double(beta2));
  f.set("train.dense_only", dense_only ? "true" : "false");
  f.set("data.path", data_path);
  f.set("data.valid_tokens", std::to_string(valid_tokens));
  return f;
}

}  // namespace ssa
