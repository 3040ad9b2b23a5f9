#include "fairasr/dataset.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fairasr/errors.h"
#include "fairasr/rng.h"

namespace fairasr::accentsynth {

using nlohmann::json;

int confusable_token(int token, int vocab_size) {
  if (token == kSeparatorToken) return token;
  if (token % 2 == 1) {
    return token + 1 < vocab_size ? token + 1 : token;
  }
  return token - 1 >= 1 ? token - 1 : token;
}

void validate_config(const GenerateConfig& config) {
  if (config.groups.empty()) {
    throw ConfigError("config must define at least one group");
  }
  double weight_sum = 0.0;
  for (std::size_t g = 0; g < config.groups.size(); ++g) {
    const GroupSpec& spec = config.groups[g];
    if (spec.mixing_weight < 0.0) {
      throw ConfigError("mixing_weights must be non-negative (group " +
                        std::to_string(g) + ")");
    }
    weight_sum += spec.mixing_weight;
    if (spec.confusion_rate < 0.0 || spec.confusion_rate > 1.0) {
      throw ConfigError("confusion_rate must lie in [0, 1] (group " +
                        std::to_string(g) + " has " +
                        std::to_string(spec.confusion_rate) + ")");
    }
    if (static_cast<int>(spec.shift.size()) != config.feature_dim) {
      throw ConfigError("group " + std::to_string(g) + " shift has dimension " +
                        std::to_string(spec.shift.size()) + ", expected " +
                        std::to_string(config.feature_dim));
    }
  }
  if (std::abs(weight_sum - 1.0) > 1e-9) {
    throw ConfigError("mixing_weights must sum to 1 (got " +
                      std::to_string(weight_sum) + ")");
  }
  if (config.vocab_size < 3) {
    throw ConfigError("vocab_size must be >= 3 (separator plus at least two "
                      "content tokens)");
  }
  if (config.feature_dim < 3) {
    throw ConfigError("feature_dim must be >= 3 (last coordinate is the "
                      "reserved spurious coordinate)");
  }
  const int num_groups = config.num_groups();
  if (config.train_size < num_groups || config.val_size < num_groups ||
      config.test_size < num_groups) {
    throw ConfigError("split sizes must be >= num_groups (" +
                      std::to_string(num_groups) + "); got train " +
                      std::to_string(config.train_size) + ", val " +
                      std::to_string(config.val_size) + ", test " +
                      std::to_string(config.test_size));
  }
  if (config.spurious_token < 1 || config.spurious_token >= config.vocab_size) {
    throw ConfigError("spurious_token must be a content token in [1, " +
                      std::to_string(config.vocab_size) + ")");
  }
  if (config.min_words < 1 || config.max_words < config.min_words) {
    throw ConfigError("word count range invalid: min_words " +
                      std::to_string(config.min_words) + ", max_words " +
                      std::to_string(config.max_words));
  }
  if (config.min_word_len < 1 || config.max_word_len < config.min_word_len) {
    throw ConfigError("word length range invalid: min_word_len " +
                      std::to_string(config.min_word_len) + ", max_word_len " +
                      std::to_string(config.max_word_len));
  }
}

GenerateConfig generate_config_from_json(const json& j) {
  GenerateConfig config;
  try {
    config.vocab_size = j.at("vocab_size").get<int>();
    config.feature_dim = j.at("feature_dim").get<int>();
    config.train_size = j.at("train_size").get<int>();
    config.val_size = j.at("val_size").get<int>();
    config.test_size = j.at("test_size").get<int>();
    config.noise_level = j.value("noise_level", 0.0);
    config.prototype_seed = j.value("prototype_seed", std::uint64_t{0});
    config.spurious_token = j.value("spurious_token", 1);
    config.min_words = j.value("min_words", 2);
    config.max_words = j.value("max_words", 6);
    config.min_word_len = j.value("min_word_len", 1);
    config.max_word_len = j.value("max_word_len", 5);
    for (const json& spec_json : j.at("groups")) {
      GroupSpec spec;
      spec.mixing_weight = spec_json.at("mixing_weight").get<double>();
      spec.shift = spec_json.value(
          "shift", std::vector<double>(
                       static_cast<std::size_t>(config.feature_dim), 0.0));
      spec.confusion_rate = spec_json.value("confusion_rate", 0.0);
      spec.spurious_bias = spec_json.value("spurious_bias", 0.0);
      config.groups.push_back(std::move(spec));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid dataset config: ") + e.what());
  }
  if (j.contains("num_groups") &&
      j.at("num_groups").get<int>() != config.num_groups()) {
    throw ConfigError("num_groups " +
                      std::to_string(j.at("num_groups").get<int>()) +
                      " does not match the " +
                      std::to_string(config.num_groups()) +
                      " entries under 'groups'");
  }
  validate_config(config);
  return config;
}

std::vector<int> largest_remainder_counts(const std::vector<double>& weights,
                                          int total) {
  const std::size_t n = weights.size();
  std::vector<int> counts(n, 0);
  std::vector<double> remainders(n, 0.0);
  int assigned = 0;
  for (std::size_t g = 0; g < n; ++g) {
    const double share = weights[g] * static_cast<double>(total);
    counts[g] = static_cast<int>(std::floor(share));
    remainders[g] = share - std::floor(share);
    assigned += counts[g];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return remainders[a] > remainders[b];
                   });
  for (int leftover = total - assigned; leftover > 0; --leftover) {
    counts[order[static_cast<std::size_t>(total - assigned - leftover)]] += 1;
  }
  return counts;
}

namespace {

// Token prototypes shared across groups: one unit-Gaussian draw per
// (vocab_size, prototype_seed). The reserved coordinate stays zero so the
// spurious bias is the only signal living there.
Tensor draw_prototypes(const GenerateConfig& config) {
  const std::size_t v = static_cast<std::size_t>(config.vocab_size);
  const std::size_t d = static_cast<std::size_t>(config.feature_dim);
  Tensor prototypes({v, d});
  SplitMix64 rng(stream_seed(config.prototype_seed, "token-prototypes"));
  for (std::size_t token = 0; token < v; ++token) {
    for (std::size_t k = 0; k + 1 < d; ++k) {
      prototypes.at(token, k) = rng.gaussian();
    }
  }
  return prototypes;
}

Utterance make_utterance(const std::string& id, int group,
                         const GenerateConfig& config,
                         const Tensor& prototypes, std::uint64_t seed) {
  SplitMix64 rng(stream_seed(seed, id));
  const GroupSpec& spec = config.groups[static_cast<std::size_t>(group)];
  const int v = config.vocab_size;
  const std::size_t d = static_cast<std::size_t>(config.feature_dim);

  std::vector<int> transcript;
  const int n_words =
      config.min_words +
      static_cast<int>(rng.below(
          static_cast<std::uint64_t>(config.max_words - config.min_words + 1)));
  for (int w = 0; w < n_words; ++w) {
    if (w > 0) transcript.push_back(kSeparatorToken);
    const int length =
        config.min_word_len +
        static_cast<int>(rng.below(static_cast<std::uint64_t>(
            config.max_word_len - config.min_word_len + 1)));
    for (int i = 0; i < length; ++i) {
      transcript.push_back(1 + static_cast<int>(rng.below(
                                   static_cast<std::uint64_t>(v - 1))));
    }
  }

  const std::size_t frames = transcript.size();
  Tensor features({frames, d});
  for (std::size_t m = 0; m < frames; ++m) {
    const int token = transcript[m];
    int proto_token = token;
    const double confusion_draw = rng.uniform01();
    if (token != kSeparatorToken && confusion_draw < spec.confusion_rate) {
      proto_token = confusable_token(token, v);
    }
    for (std::size_t k = 0; k < d; ++k) {
      double value = prototypes.at(static_cast<std::size_t>(proto_token), k) +
                     spec.shift[k];
      if (k + 1 == d && token == config.spurious_token) {
        value += spec.spurious_bias;
      }
      value += config.noise_level * rng.gaussian();
      features.at(m, k) = value;
    }
  }
  return Utterance{id, group, std::move(features), std::move(transcript)};
}

std::string padded_index(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return buf;
}

std::vector<Utterance> make_split(const std::string& name, int size,
                                  bool ensure_all_groups,
                                  const GenerateConfig& config,
                                  const Tensor& prototypes,
                                  std::uint64_t seed) {
  std::vector<double> weights;
  weights.reserve(config.groups.size());
  for (const GroupSpec& spec : config.groups) {
    weights.push_back(spec.mixing_weight);
  }
  std::vector<int> counts = largest_remainder_counts(weights, size);
  if (ensure_all_groups) {
    for (std::size_t g = 0; g < counts.size(); ++g) {
      while (counts[g] == 0) {
        auto largest = std::max_element(counts.begin(), counts.end());
        if (*largest <= 1) break;  // cannot rebalance further
        *largest -= 1;
        counts[g] += 1;
      }
    }
  }
  std::vector<Utterance> out;
  out.reserve(static_cast<std::size_t>(size));
  int index = 0;
  for (std::size_t g = 0; g < counts.size(); ++g) {
    for (int i = 0; i < counts[g]; ++i) {
      const std::string id = name + "-" + padded_index(index++);
      out.push_back(make_utterance(id, static_cast<int>(g), config, prototypes,
                                   seed));
    }
  }
  return out;
}

}  // namespace

DatasetSplit generate(const GenerateConfig& config, std::uint64_t seed) {
  validate_config(config);
  const Tensor prototypes = draw_prototypes(config);
  DatasetSplit split;
  split.seed = seed;
  split.config = config;
  split.train = make_split("train", config.train_size, false, config,
                           prototypes, seed);
  split.validation = make_split("dev", config.val_size, true, config,
                                prototypes, seed);
  split.test = make_split("test", config.test_size, true, config, prototypes,
                          seed);
  return split;
}

namespace {

json group_spec_to_json(const GroupSpec& spec) {
  return json{{"mixing_weight", spec.mixing_weight},
              {"shift", spec.shift},
              {"confusion_rate", spec.confusion_rate},
              {"spurious_bias", spec.spurious_bias}};
}

GroupSpec group_spec_from_json(const json& j) {
  GroupSpec spec;
  spec.mixing_weight = j.at("mixing_weight").get<double>();
  spec.shift = j.at("shift").get<std::vector<double>>();
  spec.confusion_rate = j.at("confusion_rate").get<double>();
  spec.spurious_bias = j.at("spurious_bias").get<double>();
  return spec;
}

json metadata_to_json(const DatasetSplit& split) {
  const GenerateConfig& config = split.config;
  json specs = json::array();
  for (const GroupSpec& spec : config.groups) {
    specs.push_back(group_spec_to_json(spec));
  }
  return json{{"V", config.vocab_size},
              {"d", config.feature_dim},
              {"num_groups", config.num_groups()},
              {"seed", split.seed},
              {"prng", kPrngName},
              {"groupspecs", specs},
              {"noise_level", config.noise_level},
              {"prototype_seed", config.prototype_seed},
              {"spurious_token", config.spurious_token},
              {"min_words", config.min_words},
              {"max_words", config.max_words},
              {"min_word_len", config.min_word_len},
              {"max_word_len", config.max_word_len},
              {"train_size", config.train_size},
              {"val_size", config.val_size},
              {"test_size", config.test_size}};
}

void metadata_from_json(const json& j, DatasetSplit& split,
                        const std::string& where) {
  GenerateConfig config;
  config.vocab_size = j.at("V").get<int>();
  config.feature_dim = j.at("d").get<int>();
  for (const json& spec : j.at("groupspecs")) {
    config.groups.push_back(group_spec_from_json(spec));
  }
  if (j.at("num_groups").get<int>() != config.num_groups()) {
    throw ConfigError(where + ": num_groups " +
                      std::to_string(j.at("num_groups").get<int>()) +
                      " does not match " +
                      std::to_string(config.num_groups()) + " groupspecs");
  }
  if (j.at("prng").get<std::string>() != kPrngName) {
    throw ConfigError(where + ": unsupported prng '" +
                      j.at("prng").get<std::string>() + "', expected '" +
                      kPrngName + "'");
  }
  config.noise_level = j.at("noise_level").get<double>();
  config.prototype_seed = j.at("prototype_seed").get<std::uint64_t>();
  config.spurious_token = j.at("spurious_token").get<int>();
  config.min_words = j.at("min_words").get<int>();
  config.max_words = j.at("max_words").get<int>();
  config.min_word_len = j.at("min_word_len").get<int>();
  config.max_word_len = j.at("max_word_len").get<int>();
  config.train_size = j.at("train_size").get<int>();
  config.val_size = j.at("val_size").get<int>();
  config.test_size = j.at("test_size").get<int>();
  split.seed = j.at("seed").get<std::uint64_t>();
  split.config = std::move(config);
}

json utterance_to_json(const Utterance& utt) {
  const std::size_t frames = utt.features.rows();
  const std::size_t dim = utt.features.cols();
  json feature_rows = json::array();
  for (std::size_t m = 0; m < frames; ++m) {
    json row = json::array();
    for (std::size_t k = 0; k < dim; ++k) {
      row.push_back(utt.features.at(m, k));
    }
    feature_rows.push_back(std::move(row));
  }
  return json{{"id", utt.id},
              {"group", utt.group},
              {"features", feature_rows},
              {"transcript", utt.transcript}};
}

Utterance utterance_from_json(const json& j, const GenerateConfig& config,
                              const std::string& where) {
  Utterance utt;
  utt.id = j.at("id").get<std::string>();
  utt.group = j.at("group").get<int>();
  if (utt.group < 0 || utt.group >= config.num_groups()) {
    throw ConfigError(where + ": group index " + std::to_string(utt.group) +
                      " outside [0, " + std::to_string(config.num_groups()) +
                      ")");
  }
  utt.transcript = j.at("transcript").get<std::vector<int>>();
  for (int token : utt.transcript) {
    if (token < 0 || token >= config.vocab_size) {
      throw ConfigError(where + ": token " + std::to_string(token) +
                        " outside [0, " + std::to_string(config.vocab_size) +
                        ")");
    }
  }
  const json& rows = j.at("features");
  if (rows.size() != utt.transcript.size()) {
    throw ConfigError(where + ": " + std::to_string(rows.size()) +
                      " frames but " + std::to_string(utt.transcript.size()) +
                      " tokens (frame-synchronous datasets require T == M)");
  }
  const std::size_t dim = static_cast<std::size_t>(config.feature_dim);
  std::vector<double> values;
  values.reserve(rows.size() * dim);
  for (const json& row : rows) {
    if (row.size() != dim) {
      throw ConfigError(where + ": frame has dimension " +
                        std::to_string(row.size()) + ", expected " +
                        std::to_string(dim));
    }
    for (const json& v : row) values.push_back(v.get<double>());
  }
  utt.features = Tensor({rows.size(), dim}, std::move(values));
  return utt;
}

void write_split_file(const std::filesystem::path& path, const json& metadata,
                      const std::vector<Utterance>& utterances) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << metadata.dump() << "\n";
  for (const Utterance& utt : utterances) {
    out << utterance_to_json(utt).dump() << "\n";
  }
  if (!out) {
    throw std::runtime_error("failed writing " + path.string());
  }
}

std::vector<Utterance> read_split_file(const std::filesystem::path& path,
                                       DatasetSplit& split,
                                       bool parse_metadata) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::vector<Utterance> utterances;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    const std::string where =
        path.filename().string() + ":" + std::to_string(line_number);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(where + ": malformed record: " + e.what());
    }
    try {
      if (line_number == 1) {
        if (parse_metadata) {
          metadata_from_json(j, split, where);
        } else {
          DatasetSplit check;
          metadata_from_json(j, check, where);
          if (!(check.config == split.config) || check.seed != split.seed) {
            throw ConfigError(where + ": metadata differs from train split");
          }
        }
      } else {
        utterances.push_back(utterance_from_json(j, split.config, where));
      }
    } catch (const json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  return utterances;
}

}  // namespace

void write_jsonl(const DatasetSplit& split, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const json metadata = metadata_to_json(split);
  write_split_file(dir / "train.jsonl", metadata, split.train);
  write_split_file(dir / "validation.jsonl", metadata, split.validation);
  write_split_file(dir / "test.jsonl", metadata, split.test);
}

DatasetSplit read_jsonl(const std::filesystem::path& dir) {
  DatasetSplit split;
  split.train = read_split_file(dir / "train.jsonl", split, true);
  split.validation = read_split_file(dir / "validation.jsonl", split, false);
  split.test = read_split_file(dir / "test.jsonl", split, false);
  std::set<std::string> ids;
  for (const std::vector<Utterance>* part :
       {&split.train, &split.validation, &split.test}) {
    for (const Utterance& utt : *part) {
      if (!ids.insert(utt.id).second) {
        throw ConfigError("duplicate utterance id '" + utt.id +
                          "' across splits");
      }
    }
  }
  return split;
}

std::size_t GroupedBatch::total_utterances() const {
  std::size_t n = 0;
  for (const auto& [group, members] : groups) n += members.size();
  return n;
}

GroupedBatch group_utterances(const std::vector<const Utterance*>& utterances) {
  GroupedBatch batch;
  for (const Utterance* utt : utterances) {
    batch.groups[utt->group].push_back(utt);
  }
  return batch;
}

GroupedBatch group_all(const std::vector<Utterance>& utterances) {
  GroupedBatch batch;
  for (const Utterance& utt : utterances) {
    batch.groups[utt.group].push_back(&utt);
  }
  return batch;
}

BalancedBatcher::BalancedBatcher(const std::vector<Utterance>& pool,
                                 int batch_size, std::uint64_t seed)
    : seed_(seed) {
  for (const Utterance& utt : pool) {
    groups_[utt.group].members.push_back(&utt);
  }
  if (groups_.empty()) {
    throw ConfigError("balanced batches require a non-empty pool");
  }
  const int num_groups = static_cast<int>(groups_.size());
  if (batch_size < num_groups) {
    throw ConfigError("batch_size " + std::to_string(batch_size) +
                      " is smaller than the number of groups (" +
                      std::to_string(num_groups) + ")");
  }
  per_group_ = static_cast<std::size_t>(batch_size / num_groups);
  for (auto& [group, state] : groups_) {
    reshuffle(group, state);
  }
}

void BalancedBatcher::reshuffle(int group, GroupState& state) {
  state.order.resize(state.members.size());
  std::iota(state.order.begin(), state.order.end(), 0);
  SplitMix64 rng(stream_seed(
      seed_, "balanced-g" + std::to_string(group) + "-epoch" +
                 std::to_string(state.epoch)));
  deterministic_shuffle(state.order, rng);
  state.cursor = 0;
  state.epoch += 1;
}

GroupedBatch BalancedBatcher::next() {
  GroupedBatch batch;
  for (auto& [group, state] : groups_) {
    std::vector<const Utterance*>& members = batch.groups[group];
    members.reserve(per_group_);
    for (std::size_t i = 0; i < per_group_; ++i) {
      if (state.cursor >= state.order.size()) {
        reshuffle(group, state);
      }
      members.push_back(state.members[state.order[state.cursor++]]);
    }
  }
  return batch;
}

ShuffleBatcher::ShuffleBatcher(const std::vector<Utterance>& pool,
                               int batch_size, std::uint64_t seed)
    : batch_size_(static_cast<std::size_t>(batch_size)), seed_(seed) {
  if (pool.empty()) {
    throw ConfigError("shuffled batches require a non-empty pool");
  }
  if (batch_size < 1) {
    throw ConfigError("batch_size must be positive");
  }
  pool_.reserve(pool.size());
  for (const Utterance& utt : pool) pool_.push_back(&utt);
  reshuffle();
}

void ShuffleBatcher::reshuffle() {
  order_.resize(pool_.size());
  std::iota(order_.begin(), order_.end(), 0);
  SplitMix64 rng(stream_seed(seed_, "pool-epoch" + std::to_string(epoch_)));
  deterministic_shuffle(order_, rng);
  cursor_ = 0;
  epoch_ += 1;
}

GroupedBatch ShuffleBatcher::next() {
  std::vector<const Utterance*> drawn;
  drawn.reserve(batch_size_);
  for (std::size_t i = 0; i < batch_size_; ++i) {
    if (cursor_ >= order_.size()) reshuffle();
    drawn.push_back(pool_[order_[cursor_++]]);
  }
  return group_utterances(drawn);
}

}  // namespace fairasr::accentsynth
