#include "fairasr/trainer.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>

#include "fairasr/errors.h"

namespace fairasr::trainer {

using accentsynth::DatasetSplit;
using accentsynth::GroupedBatch;
using nlohmann::json;
using objectives::Kind;
using toymodel::Model;

OptimizerKind optimizer_from_name(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd|adam)");
}

std::string optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::sgd ? "sgd" : "adam";
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, double beta1,
                     double beta2, double epsilon)
    : kind_(kind),
      learning_rate_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      epsilon_(epsilon) {
  if (learning_rate < 0.0) {
    throw ConfigError("learning_rate must be non-negative");
  }
}

void Optimizer::step(toymodel::ParamSet& params, const GradMap& grads) {
  t_ += 1;
  for (auto& [name, tensor] : params.tensors) {
    if (params.is_frozen(name)) continue;
    const Tensor* grad = grads.find(name);
    if (kind_ == OptimizerKind::sgd) {
      if (grad == nullptr) continue;
      double* value = tensor.data().data();
      const double* g = grad->data().data();
      for (std::size_t i = 0; i < tensor.size(); ++i) {
        value[i] -= learning_rate_ * g[i];
      }
      continue;
    }
    Moments& mom = moments_[name];
    if (mom.m.empty()) {
      mom.m.assign(tensor.size(), 0.0);
      mom.v.assign(tensor.size(), 0.0);
    }
    const double m_corr = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double v_corr = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    double* value = tensor.data().data();
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double g = grad == nullptr ? 0.0 : (*grad)[i];
      mom.m[i] = beta1_ * mom.m[i] + (1.0 - beta1_) * g;
      mom.v[i] = beta2_ * mom.v[i] + (1.0 - beta2_) * g * g;
      const double m_hat = mom.m[i] / m_corr;
      const double v_hat = mom.v[i] / v_corr;
      value[i] -= learning_rate_ * m_hat / (std::sqrt(v_hat) + epsilon_);
    }
  }
}

json log_entry_to_json(const TrainLogEntry& entry) {
  json per_group = json::object();
  for (const auto& [group, loss] : entry.per_group_loss) {
    per_group[std::to_string(group)] = loss;
  }
  json j{{"step", entry.step},
         {"objective", objectives::kind_name(entry.objective)},
         {"total", entry.total},
         {"erm", entry.erm},
         {"sd_penalty", entry.sd_penalty},
         {"dro", entry.dro},
         {"irm_penalty", entry.irm_penalty},
         {"worst_group", entry.worst_group},
         {"per_group_loss", per_group}};
  if (entry.validation.has_value()) {
    j["validation"] = fairmetrics::report_to_json(*entry.validation);
  } else {
    j["validation"] = nullptr;
  }
  return j;
}

namespace {

struct Batcher {
  std::unique_ptr<accentsynth::BalancedBatcher> balanced;
  std::unique_ptr<accentsynth::ShuffleBatcher> shuffled;

  GroupedBatch next() {
    return balanced ? balanced->next() : shuffled->next();
  }
};

bool needs_groups(Kind objective) {
  return objective == Kind::dro || objective == Kind::irm ||
         objective == Kind::fusion;
}

TrainLogEntry entry_from_report(long long step,
                                const objectives::LossReport& report) {
  TrainLogEntry entry;
  entry.step = step;
  entry.objective = report.kind;
  entry.total = report.total;
  entry.erm = report.erm;
  entry.sd_penalty = report.sd_penalty;
  entry.dro = report.dro;
  entry.irm_penalty = report.irm_penalty;
  entry.worst_group = report.worst_group;
  entry.per_group_loss = report.per_group_loss;
  return entry;
}

std::string model_label(const toymodel::ModelConfig& config) {
  return "toy-h" + std::to_string(config.hidden_dim);
}

// Shared two-phase loop: step the objective, track the checkpoint with the
// best validation macro-average WER, stop early after `patience` evaluations
// without improvement.
TrainResult run_training(Model model, const DatasetSplit& data,
                         const TrainConfig& config, bool balanced_batches,
                         const std::optional<std::filesystem::path>& run_dir) {
  if (config.max_steps < 0) {
    throw ConfigError("max_steps must be >= 0");
  }
  if (config.eval_every < 1) {
    throw ConfigError("eval_every must be >= 1");
  }

  Batcher batcher;
  if (config.max_steps > 0) {
    if (balanced_batches) {
      batcher.balanced = std::make_unique<accentsynth::BalancedBatcher>(
          data.train, config.batch_size, config.seed);
    } else {
      batcher.shuffled = std::make_unique<accentsynth::ShuffleBatcher>(
          data.train, config.batch_size, config.seed);
    }
  }

  Optimizer optimizer(config.optimizer, config.learning_rate, config.beta1,
                      config.beta2, config.epsilon);

  if (run_dir.has_value()) {
    std::filesystem::create_directories(*run_dir);
  }

  fairmetrics::ReportMetadata metadata;
  metadata.model_id = model_label(model.config);
  metadata.objective = objectives::kind_name(config.objective);
  metadata.seed = config.seed;

  TrainResult result;
  auto evaluate = [&](long long step) -> const fairmetrics::FairnessReport& {
    TrainLogEntry entry;
    entry.step = step;
    entry.objective = config.objective;
    if (!result.log.empty() && result.log.back().step == step &&
        !result.log.back().validation.has_value()) {
      entry = result.log.back();
      result.log.pop_back();
    }
    entry.validation =
        fairmetrics::evaluate_split(model, data.validation, metadata);
    if (run_dir.has_value()) {
      toymodel::save_checkpoint(
          model, *run_dir / ("step_" + std::to_string(step) + ".json"));
    }
    result.log.push_back(std::move(entry));
    return *result.log.back().validation;
  };

  auto consider_best = [&](long long step,
                           const fairmetrics::FairnessReport& report) {
    const double macro = report.macro_average;
    if (result.log.size() == 1 || macro < result.best_val_macro) {
      result.best_val_macro = macro;
      result.best_step = step;
      result.best = model;
      return true;
    }
    return false;
  };

  consider_best(0, evaluate(0));
  int evals_without_improvement = 0;

  for (long long step = 1; step <= config.max_steps; ++step) {
    const GroupedBatch batch = batcher.next();
    objectives::LossReport report =
        objectives::compute(config.objective, model, batch, config.weights);
    if (!std::isfinite(report.total)) {
      throw TrainError("training diverged: non-finite loss at step " +
                       std::to_string(step));
    }
    optimizer.step(model.params, report.grads);
    result.log.push_back(entry_from_report(step, report));

    const bool last_step = step == config.max_steps;
    if (step % config.eval_every == 0 || last_step) {
      const bool improved = consider_best(step, evaluate(step));
      evals_without_improvement = improved ? 0 : evals_without_improvement + 1;
      if (evals_without_improvement >= config.early_stop_patience &&
          !last_step) {
        result.early_stopped = true;
        break;
      }
    }
  }

  if (run_dir.has_value()) {
    toymodel::save_checkpoint(result.best, *run_dir / "best.json");
    std::ofstream log_out(*run_dir / "train_log.jsonl");
    for (const TrainLogEntry& entry : result.log) {
      log_out << log_entry_to_json(entry).dump() << "\n";
    }
  }
  return result;
}

}  // namespace

TrainResult pretrain(const toymodel::ModelConfig& model_config,
                     const DatasetSplit& data, const TrainConfig& config,
                     const std::optional<std::filesystem::path>& run_dir) {
  if (config.objective != Kind::erm) {
    throw ConfigError("pretraining requires the erm objective, got '" +
                      objectives::kind_name(config.objective) + "'");
  }
  toymodel::ModelConfig base_config = model_config;
  base_config.adapter_enabled = false;
  Model model{base_config, toymodel::init(base_config, config.seed)};
  return run_training(std::move(model), data, config, false, run_dir);
}

TrainResult finetune(const Model& base, const DatasetSplit& data,
                     const TrainConfig& config,
                     const std::optional<std::filesystem::path>& run_dir) {
  if (base.config.vocab_size != data.config.vocab_size ||
      base.config.feature_dim != data.config.feature_dim) {
    throw ConfigError("checkpoint dimensions (d=" +
                      std::to_string(base.config.feature_dim) + ", V=" +
                      std::to_string(base.config.vocab_size) +
                      ") do not match dataset (d=" +
                      std::to_string(data.config.feature_dim) + ", V=" +
                      std::to_string(data.config.vocab_size) + ")");
  }
  const bool balanced = needs_groups(config.objective);
  if (balanced && config.batch_size < data.config.num_groups()) {
    throw ConfigError("objective '" +
                      objectives::kind_name(config.objective) +
                      "' needs every group per batch: batch_size " +
                      std::to_string(config.batch_size) +
                      " < num_groups " +
                      std::to_string(data.config.num_groups()));
  }
  Model tuned = toymodel::attach_adapter(base, config.seed);
  return run_training(std::move(tuned), data, config, balanced, run_dir);
}

SearchResult greedy_search(const Model& base, const DatasetSplit& data,
                           std::vector<double> lambda_s_grid,
                           std::vector<double> lambda_i_grid,
                           const TrainConfig& config,
                           WeightsEvaluator evaluator) {
  if (lambda_s_grid.empty() && lambda_i_grid.empty()) {
    throw ConfigError("greedy search requires a non-empty grid");
  }
  // Ascending sweeps plus strict improvement give ties to the smaller lambda.
  std::sort(lambda_s_grid.begin(), lambda_s_grid.end());
  std::sort(lambda_i_grid.begin(), lambda_i_grid.end());

  if (!evaluator) {
    evaluator = [&base, &data, &config](const objectives::FusionWeights& w) {
      TrainConfig run = config;
      run.phase = Phase::finetune;
      run.objective = Kind::fusion;
      run.weights = w;
      return finetune(base, data, run).best_val_macro;
    };
  }

  SearchResult result;
  objectives::FusionWeights current = config.weights;
  current.lambda_e = 1.0;
  current.lambda_d = 1.0;

  auto sweep = [&](char axis, const std::vector<double>& grid,
                   double objectives::FusionWeights::* field) {
    bool have_best = false;
    double best_value = 0.0;
    double best_score = 0.0;
    for (double value : grid) {
      objectives::FusionWeights w = current;
      w.*field = value;
      const double score = evaluator(w);
      result.log.push_back(SearchLogEntry{axis, value, w, score});
      if (!have_best || score < best_score) {
        have_best = true;
        best_value = value;
        best_score = score;
      }
    }
    if (have_best) {
      current.*field = best_value;
      result.best_score = best_score;
    }
  };

  sweep('s', lambda_s_grid, &objectives::FusionWeights::lambda_s);
  sweep('i', lambda_i_grid, &objectives::FusionWeights::lambda_i);
  result.best = current;
  return result;
}

}  // namespace fairasr::trainer
