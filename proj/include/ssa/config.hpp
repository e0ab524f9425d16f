#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ssa/model.hpp"

namespace ssa {

// Line-oriented `section.key = value` text. '#' starts a comment; blank
// lines are ignored; a repeated key is an error. Key order is preserved.
class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text);
  static ConfigFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  void set(const std::string& key, std::string value);
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::string serialize() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

struct TrainConfig {
  ModelConfig model;  // model.vocab_size == 0 means "take it from the dataset"
  std::string plan_tag = "S0";
  SigmaSchedule sigma;
  std::size_t steps = 500;
  std::size_t warmup = 50;
  double lr_peak = 1e-3;
  double lr_final = 1e-4;
  std::size_t batch = 4;
  std::uint64_t seed = 1;
  double finetune_fraction = 0.10;
  std::size_t eval_interval = 25;
  double clip = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.98;
  bool dense_only = false;  // run every step in dense mode, never touching SSA
  std::string data_path;
  std::size_t valid_tokens = 8192;

  // Sequence length used for training and evaluation.
  std::size_t context() const { return model.max_len; }
  void validate() const;

  static TrainConfig from_file(const ConfigFile& file);
  ConfigFile to_file() const;
};

// First step that runs in dense mode: ceil((1 - finetune_fraction) * steps).
std::size_t finetune_start(std::size_t steps, double finetune_fraction);

}  // namespace ssa
