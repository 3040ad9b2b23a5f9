#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairasr/dataset.h"
#include "fairasr/model.h"

namespace fairasr::fairmetrics {

struct EditCounts {
  long long substitutions = 0;
  long long deletions = 0;
  long long insertions = 0;

  long long total() const { return substitutions + deletions + insertions; }
  bool operator==(const EditCounts&) const = default;
};

struct WerResult {
  EditCounts counts;
  double wer = 0.0;  // (S+D+I) / reference length, as a ratio
};

// Minimal-edit alignment with unit costs. The S/D/I split of an optimal
// alignment is not unique; ties resolve by preferring substitution, then
// deletion, then insertion, so counts are deterministic.
// Empty reference with a non-empty hypothesis is undefined WER and throws;
// callers either exclude such pairs or count them separately.
WerResult wer(std::span<const std::string> reference,
              std::span<const std::string> hypothesis);

struct GroupCounts {
  long long errors = 0;
  long long ref_words = 0;
  long long utterances = 0;

  bool operator==(const GroupCounts&) const = default;
};

struct ReportMetadata {
  std::string model_id;
  std::string objective;
  std::uint64_t seed = 0;
  // Groups present but holding zero reference words; excluded from the
  // macro-average and the gap instead of being imputed.
  std::vector<int> excluded_groups;

  bool operator==(const ReportMetadata&) const = default;
};

// Per-group WERs in percent (corpus-level: pooled errors over pooled
// reference words within the group), their unweighted mean, and the spread
// between the worst and best group.
struct FairnessReport {
  std::map<int, double> per_group_wer;
  double macro_average = 0.0;
  double min_max_gap = 0.0;
  std::map<int, GroupCounts> per_group_counts;
  ReportMetadata metadata;

  bool operator==(const FairnessReport&) const = default;
};

// Splits a token sequence into words at the separator token. Leading and
// trailing separators are ignored; consecutive separators yield no empty
// words. Each word renders as its token indices joined by '_'.
std::vector<std::string> detokenize_words(const std::vector<int>& tokens);

// Builds a report from per-group pooled counts.
FairnessReport report_from_counts(const std::map<int, GroupCounts>& counts,
                                  ReportMetadata metadata);

// Decodes every utterance with the model, detokenizes, and aggregates
// corpus-level per-group WER.
FairnessReport evaluate_split(const toymodel::Model& model,
                              const std::vector<accentsynth::Utterance>& split,
                              ReportMetadata metadata = {});

// Pooled WER in percent across all groups, ignoring group boundaries.
double micro_average(const std::map<int, GroupCounts>& counts);
double micro_average(const FairnessReport& report);

// Pearson correlation between per-group mean word length (tokens per word,
// from the reference transcripts) and per-group WER.
double word_length_correlation(
    const std::vector<accentsynth::Utterance>& split,
    const FairnessReport& report);

// Mean squared logit norm over all frames of the split (the quantity the
// spectral-decoupling penalty drives down).
double mean_squared_logit_norm(
    const toymodel::Model& model,
    const std::vector<accentsynth::Utterance>& split);

enum class ReportFormat { table, csv, json };

ReportFormat report_format_from_name(const std::string& name);

// table: one row per report, "model/objective  micro / gap" with one decimal.
// csv: model,objective,seed,micro_wer,macro_wer,min_max_gap,wer_g0,...
// json: the reports verbatim; round-trips through reports_from_json.
std::string emit_report(const std::vector<FairnessReport>& reports,
                        ReportFormat format);

std::vector<FairnessReport> reports_from_json(const std::string& text);

nlohmann::json report_to_json(const FairnessReport& report);
FairnessReport report_from_json(const nlohmann::json& j);

// Audit mode: externally produced transcripts, whitespace word splitting.
struct AuditPair {
  std::string id;
  int group = 0;
  std::string reference;
  std::string hypothesis;

  bool operator==(const AuditPair&) const = default;
};

std::vector<std::string> split_whitespace(const std::string& text);

// Line-delimited {"id", "group", "reference", "hypothesis"}; parse errors
// name the offending line.
std::vector<AuditPair> read_audit_pairs(const std::filesystem::path& path);

// Pairs with an empty reference and non-empty hypothesis count every
// hypothesis word as an insertion against zero reference words.
FairnessReport evaluate_pairs(const std::vector<AuditPair>& pairs,
                              ReportMetadata metadata = {});

}  // namespace fairasr::fairmetrics
