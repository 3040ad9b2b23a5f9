#include "fairasr/fairmetrics.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fairasr/errors.h"

namespace fairasr::fairmetrics {

using nlohmann::json;

WerResult wer(std::span<const std::string> reference,
              std::span<const std::string> hypothesis) {
  const std::size_t m = reference.size();
  const std::size_t n = hypothesis.size();
  if (m == 0) {
    if (n == 0) return WerResult{};
    throw std::invalid_argument(
        "WER undefined: empty reference against non-empty hypothesis");
  }
  std::vector<long long> dp((m + 1) * (n + 1), 0);
  auto cell = [&](std::size_t i, std::size_t j) -> long long& {
    return dp[i * (n + 1) + j];
  };
  for (std::size_t i = 0; i <= m; ++i) cell(i, 0) = static_cast<long long>(i);
  for (std::size_t j = 0; j <= n; ++j) cell(0, j) = static_cast<long long>(j);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      const long long sub =
          cell(i - 1, j - 1) + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1);
      const long long del = cell(i - 1, j) + 1;
      const long long ins = cell(i, j - 1) + 1;
      cell(i, j) = std::min({sub, del, ins});
    }
  }
  // Backtrace; on ties prefer substitution, then deletion, then insertion.
  EditCounts counts;
  std::size_t i = m;
  std::size_t j = n;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool match = reference[i - 1] == hypothesis[j - 1];
      if (cell(i, j) == cell(i - 1, j - 1) + (match ? 0 : 1)) {
        if (!match) counts.substitutions += 1;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && cell(i, j) == cell(i - 1, j) + 1) {
      counts.deletions += 1;
      --i;
      continue;
    }
    counts.insertions += 1;
    --j;
  }
  WerResult result;
  result.counts = counts;
  result.wer = static_cast<double>(counts.total()) / static_cast<double>(m);
  return result;
}

std::vector<std::string> detokenize_words(const std::vector<int>& tokens) {
  std::vector<std::string> words;
  std::string current;
  for (int token : tokens) {
    if (token == accentsynth::kSeparatorToken) {
      if (!current.empty()) {
        words.push_back(std::move(current));
        current.clear();
      }
      continue;
    }
    if (!current.empty()) current += '_';
    current += std::to_string(token);
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

FairnessReport report_from_counts(const std::map<int, GroupCounts>& counts,
                                  ReportMetadata metadata) {
  FairnessReport report;
  report.per_group_counts = counts;
  report.metadata = std::move(metadata);
  double sum = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool first = true;
  for (const auto& [group, gc] : counts) {
    if (gc.ref_words == 0) {
      report.metadata.excluded_groups.push_back(group);
      continue;
    }
    const double wer_pct = 100.0 * static_cast<double>(gc.errors) /
                           static_cast<double>(gc.ref_words);
    report.per_group_wer[group] = wer_pct;
    sum += wer_pct;
    if (first) {
      lo = hi = wer_pct;
      first = false;
    } else {
      lo = std::min(lo, wer_pct);
      hi = std::max(hi, wer_pct);
    }
  }
  std::sort(report.metadata.excluded_groups.begin(),
            report.metadata.excluded_groups.end());
  if (!report.per_group_wer.empty()) {
    report.macro_average =
        sum / static_cast<double>(report.per_group_wer.size());
    report.min_max_gap = hi - lo;
  }
  return report;
}

FairnessReport evaluate_split(const toymodel::Model& model,
                              const std::vector<accentsynth::Utterance>& split,
                              ReportMetadata metadata) {
  std::map<int, GroupCounts> counts;
  for (const accentsynth::Utterance& utt : split) {
    const toymodel::Forward fwd =
        toymodel::forward(model.config, model.params, utt.features);
    const std::vector<int> decoded = toymodel::decode(fwd.logits);
    const std::vector<std::string> ref = detokenize_words(utt.transcript);
    const std::vector<std::string> hyp = detokenize_words(decoded);
    GroupCounts& gc = counts[utt.group];
    gc.utterances += 1;
    if (ref.empty()) {
      gc.errors += static_cast<long long>(hyp.size());
      continue;
    }
    gc.ref_words += static_cast<long long>(ref.size());
    gc.errors += wer(ref, hyp).counts.total();
  }
  return report_from_counts(counts, std::move(metadata));
}

double micro_average(const std::map<int, GroupCounts>& counts) {
  long long errors = 0;
  long long words = 0;
  for (const auto& [group, gc] : counts) {
    errors += gc.errors;
    words += gc.ref_words;
  }
  if (words == 0) {
    throw std::invalid_argument(
        "micro-average undefined: zero reference words in total");
  }
  return 100.0 * static_cast<double>(errors) / static_cast<double>(words);
}

double micro_average(const FairnessReport& report) {
  return micro_average(report.per_group_counts);
}

double word_length_correlation(
    const std::vector<accentsynth::Utterance>& split,
    const FairnessReport& report) {
  struct LengthAcc {
    long long tokens = 0;
    long long words = 0;
  };
  std::map<int, LengthAcc> lengths;
  for (const accentsynth::Utterance& utt : split) {
    LengthAcc& acc = lengths[utt.group];
    for (const std::string& word : detokenize_words(utt.transcript)) {
      acc.words += 1;
      acc.tokens += static_cast<long long>(
          std::count(word.begin(), word.end(), '_') + 1);
    }
  }
  std::vector<double> mean_length;
  std::vector<double> group_wer;
  for (const auto& [group, wer_pct] : report.per_group_wer) {
    auto it = lengths.find(group);
    if (it == lengths.end() || it->second.words == 0) continue;
    mean_length.push_back(static_cast<double>(it->second.tokens) /
                          static_cast<double>(it->second.words));
    group_wer.push_back(wer_pct);
  }
  if (mean_length.size() < 3) {
    throw std::invalid_argument(
        "word-length correlation needs at least 3 groups with defined WER, "
        "got " + std::to_string(mean_length.size()));
  }
  const auto n = static_cast<double>(mean_length.size());
  double mean_x = 0.0;
  double mean_y = 0.0;
  for (std::size_t k = 0; k < mean_length.size(); ++k) {
    mean_x += mean_length[k];
    mean_y += group_wer[k];
  }
  mean_x /= n;
  mean_y /= n;
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t k = 0; k < mean_length.size(); ++k) {
    const double dx = mean_length[k] - mean_x;
    const double dy = group_wer[k] - mean_y;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0) {
    throw std::invalid_argument(
        "word-length correlation undefined: per-group mean word lengths are "
        "all equal");
  }
  if (syy == 0.0) {
    throw std::invalid_argument(
        "word-length correlation undefined: per-group WERs are all equal");
  }
  return sxy / std::sqrt(sxx * syy);
}

double mean_squared_logit_norm(
    const toymodel::Model& model,
    const std::vector<accentsynth::Utterance>& split) {
  double total = 0.0;
  long long frames = 0;
  for (const accentsynth::Utterance& utt : split) {
    const toymodel::Forward fwd =
        toymodel::forward(model.config, model.params, utt.features);
    for (double v : fwd.logits.data()) total += v * v;
    frames += static_cast<long long>(fwd.logits.rows());
  }
  if (frames == 0) {
    throw std::invalid_argument("mean squared logit norm of an empty split");
  }
  return total / static_cast<double>(frames);
}

ReportFormat report_format_from_name(const std::string& name) {
  if (name == "table") return ReportFormat::table;
  if (name == "csv") return ReportFormat::csv;
  if (name == "json") return ReportFormat::json;
  throw ConfigError("unknown report format '" + name +
                    "' (expected table|csv|json)");
}

namespace {

std::string format_double(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::string format_one_decimal(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", value);
  return buf;
}

json metadata_to_json(const ReportMetadata& md) {
  return json{{"model_id", md.model_id},
              {"objective", md.objective},
              {"seed", md.seed},
              {"excluded_groups", md.excluded_groups}};
}

}  // namespace

json report_to_json(const FairnessReport& report) {
  json per_group = json::object();
  for (const auto& [group, wer_pct] : report.per_group_wer) {
    per_group[std::to_string(group)] = wer_pct;
  }
  json counts = json::object();
  for (const auto& [group, gc] : report.per_group_counts) {
    counts[std::to_string(group)] = json{{"errors", gc.errors},
                                         {"ref_words", gc.ref_words},
                                         {"utterances", gc.utterances}};
  }
  return json{{"per_group_wer", per_group},
              {"macro_average", report.macro_average},
              {"min_max_gap", report.min_max_gap},
              {"per_group_counts", counts},
              {"metadata", metadata_to_json(report.metadata)}};
}

FairnessReport report_from_json(const json& j) {
  FairnessReport report;
  for (const auto& [key, value] : j.at("per_group_wer").items()) {
    report.per_group_wer[std::stoi(key)] = value.get<double>();
  }
  report.macro_average = j.at("macro_average").get<double>();
  report.min_max_gap = j.at("min_max_gap").get<double>();
  for (const auto& [key, value] : j.at("per_group_counts").items()) {
    GroupCounts gc;
    gc.errors = value.at("errors").get<long long>();
    gc.ref_words = value.at("ref_words").get<long long>();
    gc.utterances = value.at("utterances").get<long long>();
    report.per_group_counts[std::stoi(key)] = gc;
  }
  const json& md = j.at("metadata");
  report.metadata.model_id = md.at("model_id").get<std::string>();
  report.metadata.objective = md.at("objective").get<std::string>();
  report.metadata.seed = md.at("seed").get<std::uint64_t>();
  report.metadata.excluded_groups =
      md.at("excluded_groups").get<std::vector<int>>();
  return report;
}

std::string emit_report(const std::vector<FairnessReport>& reports,
                        ReportFormat format) {
  if (reports.empty()) {
    throw std::invalid_argument("emit_report requires at least one report");
  }
  std::ostringstream out;
  switch (format) {
    case ReportFormat::table: {
      std::size_t label_width = 16;
      for (const FairnessReport& report : reports) {
        label_width = std::max(label_width, report.metadata.model_id.size() +
                                                report.metadata.objective.size() +
                                                1);
      }
      out << std::string(label_width + 2, ' ') << "wer / gap\n";
      for (const FairnessReport& report : reports) {
        const std::string label =
            report.metadata.model_id + "/" + report.metadata.objective;
        out << label << std::string(label_width + 2 - label.size(), ' ')
            << format_one_decimal(micro_average(report)) << " / "
            << format_one_decimal(report.min_max_gap) << "\n";
      }
      break;
    }
    case ReportFormat::csv: {
      int max_group = -1;
      for (const FairnessReport& report : reports) {
        for (const auto& [group, gc] : report.per_group_counts) {
          max_group = std::max(max_group, group);
        }
        for (const auto& [group, wer_pct] : report.per_group_wer) {
          max_group = std::max(max_group, group);
        }
      }
      out << "model,objective,seed,micro_wer,macro_wer,min_max_gap";
      for (int g = 0; g <= max_group; ++g) out << ",wer_g" << g;
      out << "\n";
      for (const FairnessReport& report : reports) {
        out << report.metadata.model_id << "," << report.metadata.objective
            << "," << report.metadata.seed << ","
            << format_double(micro_average(report)) << ","
            << format_double(report.macro_average) << ","
            << format_double(report.min_max_gap);
        for (int g = 0; g <= max_group; ++g) {
          out << ",";
          auto it = report.per_group_wer.find(g);
          if (it != report.per_group_wer.end()) {
            out << format_double(it->second);
          }
        }
        out << "\n";
      }
      break;
    }
    case ReportFormat::json: {
      json arr = json::array();
      for (const FairnessReport& report : reports) {
        arr.push_back(report_to_json(report));
      }
      out << arr.dump(2) << "\n";
      break;
    }
  }
  return out.str();
}

std::vector<FairnessReport> reports_from_json(const std::string& text) {
  json arr;
  try {
    arr = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed report JSON: ") + e.what());
  }
  std::vector<FairnessReport> reports;
  for (const json& j : arr) {
    reports.push_back(report_from_json(j));
  }
  return reports;
}

std::vector<std::string> split_whitespace(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string word;
  while (in >> word) words.push_back(word);
  return words;
}

std::vector<AuditPair> read_audit_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::vector<AuditPair> pairs;
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
      AuditPair pair;
      pair.id = j.at("id").get<std::string>();
      pair.group = j.at("group").get<int>();
      pair.reference = j.at("reference").get<std::string>();
      pair.hypothesis = j.at("hypothesis").get<std::string>();
      if (pair.group < 0) {
        throw ParseError(where + ": group index must be non-negative");
      }
      pairs.push_back(std::move(pair));
    } catch (const json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  return pairs;
}

FairnessReport evaluate_pairs(const std::vector<AuditPair>& pairs,
                              ReportMetadata metadata) {
  std::map<int, GroupCounts> counts;
  for (const AuditPair& pair : pairs) {
    const std::vector<std::string> ref = split_whitespace(pair.reference);
    const std::vector<std::string> hyp = split_whitespace(pair.hypothesis);
    GroupCounts& gc = counts[pair.group];
    gc.utterances += 1;
    if (ref.empty()) {
      // Undefined per-utterance WER; counted separately as pure insertions.
      gc.errors += static_cast<long long>(hyp.size());
      continue;
    }
    gc.ref_words += static_cast<long long>(ref.size());
    gc.errors += wer(ref, hyp).counts.total();
  }
  return report_from_counts(counts, std::move(metadata));
}

}  // namespace fairasr::fairmetrics
