#include "fairasr/cli.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fairasr/dataset.h"
#include "fairasr/errors.h"
#include "fairasr/fairmetrics.h"
#include "fairasr/rng.h"

namespace fairasr::cli {

using accentsynth::DatasetSplit;
using fairmetrics::FairnessReport;
using nlohmann::json;
using objectives::Kind;
using toymodel::Model;

namespace {

int log_threshold = 1;  // 0 debug, 1 info, 2 warn, 3 error

void log_info(const std::string& message) {
  if (log_threshold <= 1) std::cerr << "info: " << message << "\n";
}

void log_debug(const std::string& message) {
  if (log_threshold <= 0) std::cerr << "debug: " << message << "\n";
}

std::string hex8(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(value));
  return std::string(buf).substr(0, 8);
}

std::string make_run_id(const std::string& command, std::uint64_t seed,
                        const json& config) {
  return command + "-seed" + std::to_string(seed) + "-" +
         hex8(fnv1a64(config.dump()));
}

// The manifest is written before any other output (status "planned"), then
// rewritten on completion with the realized output list. No timestamps:
// identical inputs must yield byte-identical manifests.
struct ManifestWriter {
  std::filesystem::path out_dir;
  json doc;

  ManifestWriter(const std::filesystem::path& dir, const std::string& command,
                 std::uint64_t seed, const json& config,
                 std::vector<std::string> inputs) {
    out_dir = dir;
    doc["run_id"] = make_run_id(command, seed, config);
    doc["command"] = command;
    doc["config"] = config;
    doc["inputs"] = inputs;
    doc["outputs"] = json::array();
    doc["seed"] = seed;
    doc["version"] = kVersion;
    doc["status"] = "planned";
    doc["failures"] = json::array();
    std::filesystem::create_directories(out_dir);
    write();
  }

  void write() const {
    std::ofstream out(out_dir / "manifest.json");
    if (!out) {
      throw std::runtime_error("cannot write " +
                               (out_dir / "manifest.json").string());
    }
    out << doc.dump(2) << "\n";
  }

  void record_failure(const json& failure) { doc["failures"].push_back(failure); }

  void finalize(const std::string& status) {
    std::vector<std::string> outputs;
    for (const auto& entry :
         std::filesystem::recursive_directory_iterator(out_dir)) {
      if (!entry.is_regular_file()) continue;
      const std::string rel =
          std::filesystem::relative(entry.path(), out_dir).generic_string();
      if (rel == "manifest.json") continue;
      outputs.push_back(rel);
    }
    std::sort(outputs.begin(), outputs.end());
    doc["outputs"] = outputs;
    doc["status"] = status;
    write();
  }

  std::string run_id() const { return doc["run_id"].get<std::string>(); }
};

void write_text_file(const std::filesystem::path& path,
                     const std::string& text) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << text;
}

json weights_to_json(const objectives::FusionWeights& w) {
  return json{{"lambda_e", w.lambda_e}, {"lambda_s", w.lambda_s},
              {"lambda_d", w.lambda_d}, {"lambda_i", w.lambda_i},
              {"sd_lambda", w.sd_lambda}, {"sd_inner_erm", w.sd_inner_erm}};
}

json train_options_to_json(const TrainOptions& options) {
  return json{{"data", options.data_dir.generic_string()},
              {"base", options.base_checkpoint.generic_string()},
              {"objective", options.objective},
              {"weights", weights_to_json(options.weights)},
              {"seed", options.seed},
              {"hidden_dim", options.hidden_dim},
              {"adapter_dim", options.adapter_dim},
              {"learning_rate", options.learning_rate},
              {"optimizer", options.optimizer},
              {"batch_size", options.batch_size},
              {"max_steps", options.max_steps},
              {"eval_every", options.eval_every},
              {"patience", options.patience}};
}

trainer::TrainConfig make_train_config(const TrainOptions& options,
                                       trainer::Phase phase) {
  trainer::TrainConfig config;
  config.phase = phase;
  config.objective = objectives::kind_from_name(
      phase == trainer::Phase::pretrain ? "erm" : options.objective);
  config.weights = options.weights;
  config.learning_rate = options.learning_rate;
  config.optimizer = trainer::optimizer_from_name(options.optimizer);
  config.batch_size = options.batch_size;
  config.max_steps = options.max_steps;
  config.eval_every = options.eval_every;
  config.seed = options.seed;
  config.early_stop_patience = options.patience;
  return config;
}

void write_report_files(const std::filesystem::path& out_dir,
                        const FairnessReport& report) {
  write_text_file(out_dir / "report.json",
                  fairmetrics::emit_report({report},
                                           fairmetrics::ReportFormat::json));
  write_text_file(out_dir / "report.csv",
                  fairmetrics::emit_report({report},
                                           fairmetrics::ReportFormat::csv));
}

std::string model_label(const Model& model) {
  return "toy-h" + std::to_string(model.config.hidden_dim);
}

double mean_of(const std::vector<double>& values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double population_std(const std::vector<double>& values) {
  const double mu = mean_of(values);
  double acc = 0.0;
  for (double v : values) acc += (v - mu) * (v - mu);
  return std::sqrt(acc / static_cast<double>(values.size()));
}

std::string one_decimal(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", value);
  return buf;
}

}  // namespace

int run_generate(const GenerateOptions& options) {
  std::ifstream in(options.config_path);
  if (!in) {
    throw std::runtime_error("cannot open config " +
                             options.config_path.string());
  }
  json config_json;
  try {
    in >> config_json;
  } catch (const json::exception& e) {
    throw ParseError(options.config_path.string() + ": " + e.what());
  }
  const accentsynth::GenerateConfig config =
      accentsynth::generate_config_from_json(config_json);

  json resolved = config_json;
  resolved["seed"] = options.seed;
  ManifestWriter manifest(options.out_dir, "generate", options.seed, resolved,
                          {options.config_path.generic_string()});
  const DatasetSplit split = accentsynth::generate(config, options.seed);
  accentsynth::write_jsonl(split, options.out_dir);
  manifest.finalize("complete");
  log_info("wrote " + std::to_string(split.train.size()) + "/" +
           std::to_string(split.validation.size()) + "/" +
           std::to_string(split.test.size()) +
           " train/validation/test utterances under " +
           options.out_dir.generic_string());
  return kExitOk;
}

int run_pretrain(const TrainOptions& options) {
  const DatasetSplit data = accentsynth::read_jsonl(options.data_dir);
  toymodel::ModelConfig model_config;
  model_config.feature_dim = data.config.feature_dim;
  model_config.vocab_size = data.config.vocab_size;
  model_config.hidden_dim = options.hidden_dim;
  model_config.adapter_dim = options.adapter_dim;
  model_config.adapter_enabled = false;

  const trainer::TrainConfig train_config =
      make_train_config(options, trainer::Phase::pretrain);
  json resolved = train_options_to_json(options);
  resolved["phase"] = "pretrain";
  ManifestWriter manifest(options.out_dir, "pretrain", options.seed, resolved,
                          {options.data_dir.generic_string()});

  const trainer::TrainResult result = trainer::pretrain(
      model_config, data, train_config, options.out_dir / manifest.run_id());
  log_info("pretrain best step " + std::to_string(result.best_step) +
           ", validation macro WER " + std::to_string(result.best_val_macro));

  fairmetrics::ReportMetadata metadata;
  metadata.model_id = model_label(result.best);
  metadata.objective = "erm";
  metadata.seed = options.seed;
  const FairnessReport report =
      fairmetrics::evaluate_split(result.best, data.test, metadata);
  write_report_files(options.out_dir, report);
  manifest.finalize("complete");
  return kExitOk;
}

int run_finetune(const TrainOptions& options) {
  const DatasetSplit data = accentsynth::read_jsonl(options.data_dir);
  const Model base = toymodel::load_checkpoint(options.base_checkpoint);
  const trainer::TrainConfig train_config =
      make_train_config(options, trainer::Phase::finetune);

  json resolved = train_options_to_json(options);
  resolved["phase"] = "finetune";
  ManifestWriter manifest(options.out_dir, "finetune", options.seed, resolved,
                          {options.data_dir.generic_string(),
                           options.base_checkpoint.generic_string()});

  const trainer::TrainResult result = trainer::finetune(
      base, data, train_config, options.out_dir / manifest.run_id());
  log_info("finetune (" + options.objective + ") best step " +
           std::to_string(result.best_step) + ", validation macro WER " +
           std::to_string(result.best_val_macro));

  fairmetrics::ReportMetadata metadata;
  metadata.model_id = model_label(result.best);
  metadata.objective = options.objective;
  metadata.seed = options.seed;
  const FairnessReport report =
      fairmetrics::evaluate_split(result.best, data.test, metadata);
  write_report_files(options.out_dir, report);
  manifest.finalize("complete");
  return kExitOk;
}

int run_search(const SearchOptions& options) {
  const DatasetSplit data = accentsynth::read_jsonl(options.train.data_dir);
  const Model base = toymodel::load_checkpoint(options.train.base_checkpoint);
  const trainer::TrainConfig train_config =
      make_train_config(options.train, trainer::Phase::finetune);

  json resolved = train_options_to_json(options.train);
  resolved["phase"] = "search";
  resolved["lambda_s_grid"] = options.lambda_s_grid;
  resolved["lambda_i_grid"] = options.lambda_i_grid;
  ManifestWriter manifest(options.train.out_dir, "search", options.train.seed,
                          resolved,
                          {options.train.data_dir.generic_string(),
                           options.train.base_checkpoint.generic_string()});

  const trainer::SearchResult result = trainer::greedy_search(
      base, data, options.lambda_s_grid, options.lambda_i_grid, train_config);

  std::ostringstream log_lines;
  for (const trainer::SearchLogEntry& entry : result.log) {
    log_lines << json{{"axis", std::string(1, entry.axis)},
                      {"lambda", entry.value},
                      {"weights", weights_to_json(entry.weights)},
                      {"val_macro_wer", entry.score}}
                     .dump()
              << "\n";
  }
  write_text_file(options.train.out_dir / "search_log.jsonl",
                  log_lines.str());
  write_text_file(options.train.out_dir / "best_weights.json",
                  json{{"weights", weights_to_json(result.best)},
                       {"val_macro_wer", result.best_score}}
                          .dump(2) +
                      "\n");
  manifest.finalize("complete");
  return kExitOk;
}

int run_evaluate(const EvaluateOptions& options) {
  const DatasetSplit data = accentsynth::read_jsonl(options.data_dir);
  const Model model = toymodel::load_checkpoint(options.checkpoint);

  json resolved{{"data", options.data_dir.generic_string()},
                {"checkpoint", options.checkpoint.generic_string()}};
  ManifestWriter manifest(options.out_dir, "evaluate", 0, resolved,
                          {options.data_dir.generic_string(),
                           options.checkpoint.generic_string()});

  fairmetrics::ReportMetadata metadata;
  metadata.model_id = model_label(model);
  metadata.objective = "none";
  const FairnessReport report =
      fairmetrics::evaluate_split(model, data.test, metadata);
  write_report_files(options.out_dir, report);

  json analysis{{"micro_wer", fairmetrics::micro_average(report)},
                {"macro_wer", report.macro_average},
                {"min_max_gap", report.min_max_gap}};
  try {
    analysis["word_length_correlation"] =
        fairmetrics::word_length_correlation(data.test, report);
  } catch (const std::invalid_argument& e) {
    analysis["word_length_correlation"] = nullptr;
    analysis["word_length_correlation_note"] = e.what();
  }
  write_text_file(options.out_dir / "analysis.json",
                  analysis.dump(2) + "\n");
  manifest.finalize("complete");
  return kExitOk;
}

int run_compare(const CompareOptions& options) {
  const DatasetSplit data = accentsynth::read_jsonl(options.train.data_dir);
  if (options.objectives.empty()) {
    throw ConfigError("compare requires at least one objective");
  }
  if (options.seeds.empty()) {
    throw ConfigError("compare requires at least one seed");
  }
  for (const std::string& name : options.objectives) {
    objectives::kind_from_name(name);  // validate early
  }

  json resolved = train_options_to_json(options.train);
  resolved["phase"] = "compare";
  resolved["objectives"] = options.objectives;
  resolved["seeds"] = options.seeds;
  resolved["widths"] = options.widths;
  resolved["pretrain_steps"] = options.pretrain_steps;
  resolved["pretrain_lr"] = options.pretrain_lr;
  std::vector<std::string> inputs{options.train.data_dir.generic_string()};
  if (!options.train.base_checkpoint.empty()) {
    inputs.push_back(options.train.base_checkpoint.generic_string());
  }
  ManifestWriter manifest(options.train.out_dir, "compare",
                          options.train.seed, resolved, inputs);

  // Base models: either the provided checkpoint or one ERM pretrain per
  // requested hidden width (the model-size sweep).
  std::vector<Model> bases;
  if (options.widths.empty()) {
    if (options.train.base_checkpoint.empty()) {
      throw ConfigError("compare needs --base or --widths");
    }
    bases.push_back(toymodel::load_checkpoint(options.train.base_checkpoint));
  } else {
    for (int width : options.widths) {
      toymodel::ModelConfig model_config;
      model_config.feature_dim = data.config.feature_dim;
      model_config.vocab_size = data.config.vocab_size;
      model_config.hidden_dim = width;
      model_config.adapter_dim = options.train.adapter_dim;
      TrainOptions pre = options.train;
      pre.learning_rate = options.pretrain_lr;
      pre.max_steps = options.pretrain_steps;
      trainer::TrainConfig pre_config =
          make_train_config(pre, trainer::Phase::pretrain);
      bases.push_back(
          trainer::pretrain(model_config, data, pre_config).best);
    }
  }

  bool any_failure = false;
  std::vector<FairnessReport> all_reports;
  // per model label -> objective -> list of (micro, macro, gap) over seeds
  struct CellStats {
    std::vector<double> micro, macro, gap;
  };
  std::map<std::string, std::map<std::string, CellStats>> table;
  std::vector<std::string> model_order;

  for (const Model& base : bases) {
    const std::string label = model_label(base);
    model_order.push_back(label);

    fairmetrics::ReportMetadata metadata;
    metadata.model_id = label;
    metadata.objective = "none";
    metadata.seed = options.train.seed;
    const FairnessReport baseline =
        fairmetrics::evaluate_split(base, data.test, metadata);
    all_reports.push_back(baseline);
    CellStats& base_cell = table[label]["none"];
    base_cell.micro.push_back(fairmetrics::micro_average(baseline));
    base_cell.macro.push_back(baseline.macro_average);
    base_cell.gap.push_back(baseline.min_max_gap);

    for (const std::string& objective : options.objectives) {
      for (std::uint64_t seed : options.seeds) {
        TrainOptions run = options.train;
        run.objective = objective;
        run.seed = seed;
        try {
          log_debug("compare sub-run " + label + " objective " + objective +
                    " seed " + std::to_string(seed));
          const trainer::TrainResult result = trainer::finetune(
              base, data, make_train_config(run, trainer::Phase::finetune));
          fairmetrics::ReportMetadata run_metadata;
          run_metadata.model_id = label;
          run_metadata.objective = objective;
          run_metadata.seed = seed;
          const FairnessReport report = fairmetrics::evaluate_split(
              result.best, data.test, run_metadata);
          all_reports.push_back(report);
          CellStats& cell = table[label][objective];
          cell.micro.push_back(fairmetrics::micro_average(report));
          cell.macro.push_back(report.macro_average);
          cell.gap.push_back(report.min_max_gap);
        } catch (const std::exception& e) {
          any_failure = true;
          manifest.record_failure(json{{"model", label},
                                       {"objective", objective},
                                       {"seed", seed},
                                       {"error", e.what()}});
        }
      }
    }
  }

  // Table-1-style pivot: strategies as columns, "micro / gap" cells
  // (means over seeds), with a mean +/- population-std footer.
  std::vector<std::string> columns{"none"};
  columns.insert(columns.end(), options.objectives.begin(),
                 options.objectives.end());
  std::ostringstream tbl;
  const int label_width = 12;
  const int cell_width = 16;
  tbl << std::string(label_width, ' ');
  for (const std::string& column : columns) {
    const std::string header = column == "none" ? "w/o FT" : column;
    tbl << header << std::string(cell_width - header.size(), ' ');
  }
  tbl << "\n";
  for (const std::string& label : model_order) {
    tbl << label << std::string(label_width - label.size(), ' ');
    for (const std::string& column : columns) {
      std::string cell = "-";
      auto it = table[label].find(column);
      if (it != table[label].end() && !it->second.micro.empty()) {
        cell = one_decimal(mean_of(it->second.micro)) + " / " +
               one_decimal(mean_of(it->second.gap));
      }
      tbl << cell << std::string(cell_width - cell.size(), ' ');
    }
    tbl << "\n";
  }
  tbl << "# cells: micro-average WER / min-max gap, mean over seeds\n";
  for (const std::string& label : model_order) {
    for (const std::string& column : columns) {
      auto it = table[label].find(column);
      if (it == table[label].end() || it->second.micro.empty()) continue;
      tbl << "# " << label << " " << (column == "none" ? "w/o FT" : column)
          << ": micro " << one_decimal(mean_of(it->second.micro)) << " +/- "
          << one_decimal(population_std(it->second.micro)) << ", macro "
          << one_decimal(mean_of(it->second.macro)) << " +/- "
          << one_decimal(population_std(it->second.macro)) << ", gap "
          << one_decimal(mean_of(it->second.gap)) << " +/- "
          << one_decimal(population_std(it->second.gap)) << "\n";
    }
  }
  write_text_file(options.train.out_dir / "comparison.txt", tbl.str());
  write_text_file(options.train.out_dir / "per_group.csv",
                  fairmetrics::emit_report(all_reports,
                                           fairmetrics::ReportFormat::csv));
  write_text_file(options.train.out_dir / "results.json",
                  fairmetrics::emit_report(all_reports,
                                           fairmetrics::ReportFormat::json));

  // Model-size summary (one row per width x strategy).
  std::ostringstream summary;
  summary << "model,objective,mean_micro_wer,std_micro_wer,mean_macro_wer,"
             "std_macro_wer,mean_min_max_gap,std_min_max_gap,seeds\n";
  for (const std::string& label : model_order) {
    for (const std::string& column : columns) {
      auto it = table[label].find(column);
      if (it == table[label].end() || it->second.micro.empty()) continue;
      const CellStats& cell = it->second;
      summary << label << "," << column << "," << mean_of(cell.micro) << ","
              << population_std(cell.micro) << "," << mean_of(cell.macro)
              << "," << population_std(cell.macro) << ","
              << mean_of(cell.gap) << "," << population_std(cell.gap) << ","
              << cell.micro.size() << "\n";
    }
  }
  write_text_file(options.train.out_dir / "summary.csv", summary.str());

  manifest.finalize(any_failure ? "partial" : "complete");
  return any_failure ? kExitRuntime : kExitOk;
}

int run_audit(const AuditOptions& options) {
  const std::vector<fairmetrics::AuditPair> pairs =
      fairmetrics::read_audit_pairs(options.pairs_path);

  json resolved{{"pairs", options.pairs_path.generic_string()}};
  ManifestWriter manifest(options.out_dir, "audit", 0, resolved,
                          {options.pairs_path.generic_string()});

  fairmetrics::ReportMetadata metadata;
  metadata.model_id = "external";
  metadata.objective = "audit";
  const FairnessReport report =
      fairmetrics::evaluate_pairs(pairs, metadata);
  write_report_files(options.out_dir, report);
  manifest.finalize("complete");
  return kExitOk;
}

namespace {

void add_train_flags(CLI::App* cmd, TrainOptions& options,
                     bool with_objective) {
  cmd->add_option("--data", options.data_dir, "dataset directory")
      ->required();
  cmd->add_option("--out", options.out_dir, "output directory")->required();
  cmd->add_option("--seed", options.seed, "run seed");
  cmd->add_option("--lr", options.learning_rate, "learning rate");
  cmd->add_option("--optimizer", options.optimizer, "sgd|adam");
  cmd->add_option("--batch-size", options.batch_size, "batch size");
  cmd->add_option("--max-steps", options.max_steps, "training steps");
  cmd->add_option("--eval-every", options.eval_every,
                  "validation cadence in steps");
  cmd->add_option("--patience", options.patience,
                  "evaluations without improvement before stopping");
  if (with_objective) {
    cmd->add_option("--objective", options.objective,
                    "erm|sd|dro|irm|fusion");
    cmd->add_option("--lambda-e", options.weights.lambda_e,
                    "fusion weight on ERM");
    cmd->add_option("--lambda-s", options.weights.lambda_s,
                    "fusion weight on SD");
    cmd->add_option("--lambda-d", options.weights.lambda_d,
                    "fusion weight on DRO");
    cmd->add_option("--lambda-i", options.weights.lambda_i,
                    "fusion weight on IRM");
    cmd->add_option("--sd-lambda", options.weights.sd_lambda,
                    "coefficient inside the SD term");
  }
}

}  // namespace

int main(const std::vector<std::string>& args) {
  CLI::App app{"group-fair training and evaluation toolkit for a toy "
               "frame-synchronous ASR model"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "debug|info|warn|error");

  GenerateOptions generate_options;
  CLI::App* generate_cmd =
      app.add_subcommand("generate", "generate a synthetic grouped dataset");
  generate_cmd->add_option("--config", generate_options.config_path,
                           "dataset config JSON")
      ->required();
  generate_cmd->add_option("--out", generate_options.out_dir,
                           "output directory")
      ->required();
  generate_cmd->add_option("--seed", generate_options.seed, "generation seed");

  TrainOptions pretrain_options;
  CLI::App* pretrain_cmd =
      app.add_subcommand("pretrain", "ERM-train a base model on the pool");
  add_train_flags(pretrain_cmd, pretrain_options, false);
  pretrain_cmd->add_option("--hidden", pretrain_options.hidden_dim,
                           "encoder hidden width");
  pretrain_cmd->add_option("--adapter-dim", pretrain_options.adapter_dim,
                           "adapter bottleneck width (stored for finetuning)");

  TrainOptions finetune_options;
  CLI::App* finetune_cmd = app.add_subcommand(
      "finetune", "adapter-finetune a base checkpoint under an objective");
  add_train_flags(finetune_cmd, finetune_options, true);
  finetune_cmd
      ->add_option("--base", finetune_options.base_checkpoint,
                   "base checkpoint")
      ->required();

  SearchOptions search_options;
  CLI::App* search_cmd = app.add_subcommand(
      "search", "greedy search over the fusion lambdas");
  add_train_flags(search_cmd, search_options.train, true);
  search_cmd
      ->add_option("--base", search_options.train.base_checkpoint,
                   "base checkpoint")
      ->required();
  search_cmd
      ->add_option("--grid-s", search_options.lambda_s_grid,
                   "lambda_s grid (comma separated)")
      ->delimiter(',')
      ->required();
  search_cmd
      ->add_option("--grid-i", search_options.lambda_i_grid,
                   "lambda_i grid (comma separated)")
      ->delimiter(',');

  EvaluateOptions evaluate_options;
  CLI::App* evaluate_cmd =
      app.add_subcommand("evaluate", "fairness report for a checkpoint");
  evaluate_cmd->add_option("--data", evaluate_options.data_dir,
                           "dataset directory")
      ->required();
  evaluate_cmd->add_option("--ckpt", evaluate_options.checkpoint,
                           "checkpoint path")
      ->required();
  evaluate_cmd->add_option("--out", evaluate_options.out_dir,
                           "output directory")
      ->required();

  CompareOptions compare_options;
  CLI::App* compare_cmd = app.add_subcommand(
      "compare", "run objectives x seeds (x widths) and tabulate");
  add_train_flags(compare_cmd, compare_options.train, true);
  compare_cmd->add_option("--base", compare_options.train.base_checkpoint,
                          "base checkpoint (alternative to --widths)");
  compare_cmd
      ->add_option("--objectives", compare_options.objectives,
                   "objectives to run (comma separated)")
      ->delimiter(',')
      ->required();
  compare_cmd
      ->add_option("--seeds", compare_options.seeds,
                   "seeds to run (comma separated)")
      ->delimiter(',')
      ->required();
  compare_cmd
      ->add_option("--widths", compare_options.widths,
                   "hidden widths to pretrain and compare")
      ->delimiter(',');
  compare_cmd->add_option("--adapter-dim", compare_options.train.adapter_dim,
                          "adapter bottleneck width");
  compare_cmd->add_option("--pretrain-steps", compare_options.pretrain_steps,
                          "pretraining steps per width");
  compare_cmd->add_option("--pretrain-lr", compare_options.pretrain_lr,
                          "pretraining learning rate per width");

  AuditOptions audit_options;
  CLI::App* audit_cmd = app.add_subcommand(
      "audit", "fairness report for externally produced transcripts");
  audit_cmd->add_option("--pairs", audit_options.pairs_path,
                        "line-delimited reference/hypothesis pairs")
      ->required();
  audit_cmd->add_option("--out", audit_options.out_dir, "output directory")
      ->required();

  std::vector<std::string> argv_storage = args;
  std::vector<const char*> argv;
  argv.push_back("fairasr");
  for (const std::string& arg : argv_storage) argv.push_back(arg.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help() << std::flush;
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  if (log_level == "debug") log_threshold = 0;
  else if (log_level == "info") log_threshold = 1;
  else if (log_level == "warn") log_threshold = 2;
  else if (log_level == "error") log_threshold = 3;
  else {
    std::cerr << "error: unknown log level '" << log_level << "'\n";
    return kExitConfig;
  }

  try {
    if (generate_cmd->parsed()) return run_generate(generate_options);
    if (pretrain_cmd->parsed()) return run_pretrain(pretrain_options);
    if (finetune_cmd->parsed()) return run_finetune(finetune_options);
    if (search_cmd->parsed()) return run_search(search_options);
    if (evaluate_cmd->parsed()) return run_evaluate(evaluate_options);
    if (compare_cmd->parsed()) return run_compare(compare_options);
    if (audit_cmd->parsed()) return run_audit(audit_options);
    std::cerr << "error: no command given\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace fairasr::cli
