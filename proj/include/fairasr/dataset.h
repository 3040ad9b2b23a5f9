#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairasr/tensor.h"

namespace fairasr::accentsynth {

// Token 0 is the word separator throughout the toolkit: tokens between
// separators form one word, so word error rate differs from token error rate.
inline constexpr int kSeparatorToken = 0;

// One training/eval sample. Frame-synchronous by construction: exactly one
// feature frame per transcript token, so the per-frame cross-entropy is the
// whole sequence loss and no alignment machinery is needed.
struct Utterance {
  std::string id;
  int group = 0;
  Tensor features;              // T x d
  std::vector<int> transcript;  // T token indices in [0, V)

  bool operator==(const Utterance&) const = default;
};

// Per-group recipe for the synthetic "accent": a systematic shift added to
// every frame, a chance of swapping a token's prototype with its designated
// confusable (the /z/-said-as-/s/ effect), and a bias planted in the reserved
// feature coordinate whose correlation with one token class varies by group.
struct GroupSpec {
  double mixing_weight = 0.0;
  std::vector<double> shift;  // dimension d
  double confusion_rate = 0.0;
  double spurious_bias = 0.0;

  bool operator==(const GroupSpec&) const = default;
};

struct GenerateConfig {
  std::vector<GroupSpec> groups;
  int train_size = 0;
  int val_size = 0;
  int test_size = 0;
  int vocab_size = 0;   // V >= 3: separator + at least two content tokens
  int feature_dim = 0;  // d >= 3: last coordinate is reserved for the shortcut
  std::uint64_t prototype_seed = 0;
  double noise_level = 0.0;
  int spurious_token = 1;  // token class tied to the reserved coordinate
  int min_words = 2;
  int max_words = 6;
  int min_word_len = 1;
  int max_word_len = 5;

  int num_groups() const { return static_cast<int>(groups.size()); }
  bool operator==(const GenerateConfig&) const = default;
};

struct DatasetSplit {
  std::vector<Utterance> train;
  std::vector<Utterance> validation;
  std::vector<Utterance> test;
  std::uint64_t seed = 0;
  GenerateConfig config;

  bool operator==(const DatasetSplit&) const = default;
};

inline constexpr const char* kPrngName = "splitmix64";

// Content token paired with `token` for prototype confusion (1<->2, 3<->4,
// ...). Returns token itself when it has no partner.
int confusable_token(int token, int vocab_size);

// Throws ConfigError naming the failing constraint.
void validate_config(const GenerateConfig& config);

// Parses and validates a generation config document. Optional fields take
// their defaults; a "num_groups" field, when present, must match the number
// of group entries. Omitted group shifts become zero vectors.
GenerateConfig generate_config_from_json(const nlohmann::json& j);

// Deterministic for fixed (config, seed); every utterance derives its own
// PRNG stream from (seed, id). Group sizes follow mixing_weights by
// largest-remainder rounding; validation and test always contain every group.
DatasetSplit generate(const GenerateConfig& config, std::uint64_t seed);

// Largest-remainder apportionment of `total` over `weights`.
std::vector<int> largest_remainder_counts(const std::vector<double>& weights,
                                          int total);

// Writes train.jsonl / validation.jsonl / test.jsonl under dir. Each file
// starts with one metadata line, then one utterance per line, full-precision
// doubles. read_jsonl(write_jsonl(s)) == s exactly.
void write_jsonl(const DatasetSplit& split, const std::filesystem::path& dir);
DatasetSplit read_jsonl(const std::filesystem::path& dir);

// Utterances partitioned by group; every listed group is non-empty.
// Shared by the objectives (their per-group loss terms) and the batchers.
struct GroupedBatch {
  std::map<int, std::vector<const Utterance*>> groups;

  bool empty() const { return groups.empty(); }
  std::size_t total_utterances() const;
};

GroupedBatch group_utterances(const std::vector<const Utterance*>& utterances);
GroupedBatch group_all(const std::vector<Utterance>& utterances);

// Emits batches with floor(batch_size / num_groups) utterances per group,
// sampled without replacement within each group's epoch; exhausted groups
// reshuffle and recycle. Deterministic for a fixed seed.
class BalancedBatcher {
 public:
  BalancedBatcher(const std::vector<Utterance>& pool, int batch_size,
                  std::uint64_t seed);
  GroupedBatch next();

 private:
  struct GroupState {
    std::vector<const Utterance*> members;
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    std::uint64_t epoch = 0;
  };
  void reshuffle(int group, GroupState& state);

  std::map<int, GroupState> groups_;
  std::size_t per_group_ = 0;
  std::uint64_t seed_ = 0;
};

// Plain epoch-shuffled batches over the pool (natural, possibly skewed group
// mix). Batches may span epoch boundaries so every batch is full.
class ShuffleBatcher {
 public:
  ShuffleBatcher(const std::vector<Utterance>& pool, int batch_size,
                 std::uint64_t seed);
  GroupedBatch next();

 private:
  void reshuffle();

  std::vector<const Utterance*> pool_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::uint64_t epoch_ = 0;
  std::size_t batch_size_ = 0;
  std::uint64_t seed_ = 0;
};

}  // namespace fairasr::accentsynth
