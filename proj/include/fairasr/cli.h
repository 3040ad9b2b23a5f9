#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fairasr/objectives.h"
#include "fairasr/trainer.h"

namespace fairasr::cli {

inline constexpr const char* kVersion = "0.1.0";

// Exit codes: 0 success, 1 runtime failure, 2 configuration/validation
// failure (also partial failure in `compare`).
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

struct GenerateOptions {
  std::filesystem::path config_path;
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
};

struct TrainOptions {
  std::filesystem::path data_dir;
  std::filesystem::path base_checkpoint;  // finetune/search/compare only
  std::filesystem::path out_dir;
  std::string objective = "erm";
  objectives::FusionWeights weights;
  std::uint64_t seed = 0;
  int hidden_dim = 16;
  int adapter_dim = 4;
  double learning_rate = 4e-5;
  std::string optimizer = "adam";
  int batch_size = 32;
  int max_steps = 200;
  int eval_every = 25;
  int patience = 5;
};

struct SearchOptions {
  TrainOptions train;
  std::vector<double> lambda_s_grid;
  std::vector<double> lambda_i_grid;
};

struct EvaluateOptions {
  std::filesystem::path data_dir;
  std::filesystem::path checkpoint;
  std::filesystem::path out_dir;
};

struct CompareOptions {
  TrainOptions train;
  std::vector<std::string> objectives;
  std::vector<std::uint64_t> seeds;
  std::vector<int> widths;  // empty: use --base as the single model
  int pretrain_steps = 400;
  double pretrain_lr = 2e-3;
};

struct AuditOptions {
  std::filesystem::path pairs_path;
  std::filesystem::path out_dir;
};

// Command bodies; they throw on failure (ConfigError/ParseError for exit
// code 2, anything else for 1) and return the exit code otherwise.
int run_generate(const GenerateOptions& options);
int run_pretrain(const TrainOptions& options);
int run_finetune(const TrainOptions& options);
int run_search(const SearchOptions& options);
int run_evaluate(const EvaluateOptions& options);
int run_compare(const CompareOptions& options);
int run_audit(const AuditOptions& options);

// Full argv-style entry point (without the program name): parses flags,
// dispatches, and maps exceptions to exit codes.
int main(const std::vector<std::string>& args);

}  // namespace fairasr::cli
