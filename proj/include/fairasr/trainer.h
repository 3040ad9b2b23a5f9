#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fairasr/dataset.h"
#include "fairasr/fairmetrics.h"
#include "fairasr/model.h"
#include "fairasr/objectives.h"

namespace fairasr::trainer {

enum class Phase { pretrain, finetune };

enum class OptimizerKind { sgd, adam };

OptimizerKind optimizer_from_name(const std::string& name);
std::string optimizer_name(OptimizerKind kind);

struct TrainConfig {
  Phase phase = Phase::pretrain;
  objectives::Kind objective = objectives::Kind::erm;
  objectives::FusionWeights weights;
  double learning_rate = 4e-5;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 32;
  int max_steps = 0;
  int eval_every = 50;
  std::uint64_t seed = 0;
  int early_stop_patience = 5;

  bool operator==(const TrainConfig&) const = default;
};

// Updates unfrozen tensors in place; frozen parameters and the irm_w scalar
// are never touched. Gradient entries missing for an unfrozen parameter act
// as zeros (moments still decay), so update order stays deterministic.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, double beta1,
            double beta2, double epsilon);

  void step(toymodel::ParamSet& params, const GradMap& grads);

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  OptimizerKind kind_;
  double learning_rate_;
  double beta1_;
  double beta2_;
  double epsilon_;
  long long t_ = 0;
  std::map<std::string, Moments> moments_;
};

struct TrainLogEntry {
  long long step = 0;
  objectives::Kind objective = objectives::Kind::erm;
  double total = 0.0;
  double erm = 0.0;
  double sd_penalty = 0.0;
  double dro = 0.0;
  double irm_penalty = 0.0;
  int worst_group = -1;
  std::map<int, double> per_group_loss;
  std::optional<fairmetrics::FairnessReport> validation;
};

nlohmann::json log_entry_to_json(const TrainLogEntry& entry);

struct TrainResult {
  toymodel::Model best;
  long long best_step = 0;
  double best_val_macro = 0.0;
  std::vector<TrainLogEntry> log;
  bool early_stopped = false;
};

// Phase one: ERM training of the base model on the naturally skewed pool.
// Keeps the checkpoint with the best validation macro-average WER.
// When run_dir is set, writes step_{n}.json at every evaluation point,
// best.json, and train_log.jsonl.
TrainResult pretrain(const toymodel::ModelConfig& model_config,
                     const accentsynth::DatasetSplit& data,
                     const TrainConfig& config,
                     const std::optional<std::filesystem::path>& run_dir = {});

// Phase two: attaches fresh adapters, freezes every base parameter, and
// trains them under the chosen objective. Group-dependent objectives
// (dro, irm, fusion) draw group-balanced batches; erm and sd draw from the
// pool as pretraining does.
TrainResult finetune(const toymodel::Model& base,
                     const accentsynth::DatasetSplit& data,
                     const TrainConfig& config,
                     const std::optional<std::filesystem::path>& run_dir = {});

struct SearchLogEntry {
  char axis = 's';  // which lambda was being swept
  double value = 0.0;
  objectives::FusionWeights weights;
  double score = 0.0;  // validation macro-average WER, lower is better
};

struct SearchResult {
  objectives::FusionWeights best;
  double best_score = 0.0;
  std::vector<SearchLogEntry> log;
};

using WeightsEvaluator =
    std::function<double(const objectives::FusionWeights&)>;

// Coordinate-wise greedy search with lambda_e = lambda_d = 1 held fixed:
// sweeps lambda_s with lambda_i at its initial value, fixes the best by
// validation macro-average WER, then sweeps lambda_i. Ties resolve toward
// the smaller lambda. `evaluator` defaults to a full fusion finetune per
// grid point; tests may inject a cheaper score.
SearchResult greedy_search(const toymodel::Model& base,
                           const accentsynth::DatasetSplit& data,
                           std::vector<double> lambda_s_grid,
                           std::vector<double> lambda_i_grid,
                           const TrainConfig& config,
                           WeightsEvaluator evaluator = {});

}  // namespace fairasr::trainer
