#pragma once

// Evaluation quantities over run results (success rates, common-solved costs,
// time-to-solve curves) and dataset statistics (target-length distribution,
// length/loss decomposition).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "segprover/boundary.hpp"
#include "segprover/core.hpp"
#include "segprover/io.hpp"
#include "segprover/search.hpp"
#include "segprover/tokenizer.hpp"

namespace segprover {

using RunResults = std::map<std::string, SearchResult>;  // theorem_id -> result

/// Several runs of one method over one theorem universe.
struct RunSet {
  std::string label;
  std::vector<RunResults> runs;

  std::set<std::string> theorems() const {
    std::set<std::string> out;
    if (!runs.empty())
      for (const auto& [id, r] : runs.front()) out.insert(id);
    return out;
  }

  void validate() const {
    if (runs.empty()) throw InvariantError("runset " + label + " has no runs");
    auto universe = theorems();
    for (std::size_t i = 1; i < runs.size(); ++i) {
      std::set<std::string> ids;
      for (const auto& [id, r] : runs[i]) ids.insert(id);
      if (ids != universe)
        throw InvariantError("runset " + label + ": run " + std::to_string(i + 1) + " covers a different theorem set");
    }
  }
};

inline double success_fraction(const RunResults& run) {
  if (run.empty()) return 0.0;
  std::size_t solved = 0;
  for (const auto& [id, r] : run) solved += r.solved ? 1 : 0;
  return static_cast<double>(solved) / static_cast<double>(run.size());
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Mean and sample standard deviation (n - 1); std is 0 for a single value.
inline MeanStd mean_std(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean_std of nothing");
  double sum = 0.0;
  for (double x : xs) sum += x;
  double mean = sum / static_cast<double>(xs.size());
  if (xs.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

/// Success percentage per run, summarized as mean and sample std.
inline MeanStd aggregate_success(const RunSet& runset) {
  if (runset.runs.empty()) throw std::invalid_argument("aggregate_success: empty runset");
  std::vector<double> pct;
  for (const auto& run : runset.runs) pct.push_back(100.0 * success_fraction(run));
  return mean_std(pct);
}

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

/// "66.31 ± 0.79"
inline std::string format_mean_std(const MeanStd& s) {
  return format_fixed(s.mean, 2) + " \xC2\xB1 " + format_fixed(s.std, 2);
}

struct MethodCost {
  std::string label;
  std::optional<double> avg_output_tokens;
  std::optional<double> avg_elapsed_s;
};

struct CommonSolvedCosts {
  std::set<std::string> subset;
  std::vector<MethodCost> methods;
};

/// Theorems solved in every run of every runset, with per-method averages
/// over (theorem, run) pairs restricted to that subset.
inline CommonSolvedCosts common_solved_costs(const std::vector<RunSet>& runsets) {
  CommonSolvedCosts out;
  if (runsets.empty()) return out;
  for (const auto& rs : runsets) rs.validate();
  auto universe = runsets.front().theorems();
  for (const auto& rs : runsets)
    if (rs.theorems() != universe) throw InvariantError("runsets do not share a theorem universe");
  for (const auto& id : universe) {
    bool everywhere = true;
    for (const auto& rs : runsets)
      for (const auto& run : rs.runs) everywhere = everywhere && run.at(id).solved;
    if (everywhere) out.subset.insert(id);
  }
  for (const auto& rs : runsets) {
    MethodCost m{rs.label, std::nullopt, std::nullopt};
    if (!out.subset.empty()) {
      double tokens = 0.0, time = 0.0;
      std::size_t n = 0;
      for (const auto& run : rs.runs)
        for (const auto& id : out.subset) {
          const auto& r = run.at(id);
          tokens += static_cast<double>(r.output_tokens);
          time += r.elapsed_s;
          ++n;
        }
      m.avg_output_tokens = tokens / static_cast<double>(n);
      m.avg_elapsed_s = time / static_cast<double>(n);
    }
    out.methods.push_back(std::move(m));
  }
  return out;
}

struct CurvePoint {
  double cutoff = 0.0;
  double log1p_cutoff = 0.0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Fraction of theorems proved within each cutoff, across runs. Unsolved
/// theorems never count.
inline std::vector<CurvePoint> cumulative_accuracy(const RunSet& runset, const std::vector<double>& cutoffs) {
  if (!std::is_sorted(cutoffs.begin(), cutoffs.end())) throw std::invalid_argument("cutoffs must be ascending");
  std::vector<CurvePoint> out;
  for (double t : cutoffs) {
    std::vector<double> fractions;
    for (const auto& run : runset.runs) {
      std::size_t within = 0;
      for (const auto& [id, r] : run) {
        double time = r.solved ? r.elapsed_s : std::numeric_limits<double>::infinity();
        if (time <= t) ++within;
      }
      fractions.push_back(run.empty() ? 0.0 : static_cast<double>(within) / static_cast<double>(run.size()));
    }
    CurvePoint p{t, std::log1p(t), 0.0, 0.0, 0.0};
    if (!fractions.empty()) {
      p.mean = mean_std(fractions).mean;
      p.min = *std::min_element(fractions.begin(), fractions.end());
      p.max = *std::max_element(fractions.begin(), fractions.end());
    }
    out.push_back(p);
  }
  return out;
}

/// Empirical distribution of serialized-target token lengths.
inline std::map<std::size_t, double> target_length_distribution(const std::vector<SupervisionExample>& dataset,
                                                                const Tokenizer& tokenizer) {
  if (dataset.empty()) throw std::invalid_argument("target_length_distribution: empty dataset");
  std::map<std::size_t, std::size_t> counts;
  for (const auto& e : dataset) ++counts[serialize_target(e.target, tokenizer).token_count];
  std::map<std::size_t, double> out;
  for (auto [len, n] : counts) out[len] = static_cast<double>(n) / static_cast<double>(dataset.size());
  return out;
}

struct LossDecomposition {
  std::map<std::size_t, double> per_length_mean;
  std::map<std::size_t, double> length_probability;
  double overall_mean = 0.0;
  /// sum over L of P(L) * mean loss at L; equals overall_mean up to rounding.
  double reconstruction = 0.0;
};

inline LossDecomposition loss_decomposition(const std::vector<LengthLossRecord>& records) {
  if (records.empty()) throw std::invalid_argument("loss_decomposition: no records");
  std::map<std::size_t, std::pair<double, std::size_t>> by_length;
  double total = 0.0;
  for (const auto& r : records) {
    auto& [sum, n] = by_length[r.length];
    sum += r.loss;
    ++n;
    total += r.loss;
  }
  const auto N = static_cast<double>(records.size());
  LossDecomposition d;
  d.overall_mean = total / N;
  for (const auto& [len, acc] : by_length) {
    double mean = acc.first / static_cast<double>(acc.second);
    double p = static_cast<double>(acc.second) / N;
    d.per_length_mean[len] = mean;
    d.length_probability[len] = p;
    d.reconstruction += p * mean;
  }
  return d;
}

inline std::vector<LengthLossRecord> read_loss_records(const std::filesystem::path& path) {
  std::vector<LengthLossRecord> out;
  for (const auto& j : read_jsonl_file(path)) {
    try {
      out.emplace_back(required<std::string>(j, "example_id"), required<std::size_t>(j, "length"),
                       required<double>(j, "loss"));
    } catch (const InvariantError& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
  return out;
}

inline RunResults read_run_file(const std::filesystem::path& path, std::optional<json>* header = nullptr) {
  RunResults run;
  for (const auto& j : read_jsonl_file(path, header)) {
    auto r = result_from_json(j);
    auto id = r.theorem_id;
    if (!run.emplace(id, std::move(r)).second) throw FormatError(path.string() + ": duplicate theorem " + id);
  }
  return run;
}

/// Loads run_<n>.jsonl files from a directory in run order.
inline RunSet load_runset(const std::string& label, const std::filesystem::path& dir,
                          std::vector<std::string>* digests = nullptr) {
  if (!std::filesystem::is_directory(dir)) throw FormatError("not a results directory: " + dir.string());
  static const std::regex kRunFile(R"(run_(\d+)\.jsonl)");
  std::map<std::size_t, std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    auto name = entry.path().filename().string();
    if (std::regex_match(name, m, kRunFile)) files[std::stoul(m[1])] = entry.path();
  }
  if (files.empty()) throw FormatError("no run_<n>.jsonl files in " + dir.string());
  RunSet rs{label, {}};
  for (const auto& [n, path] : files) {
    std::optional<json> header;
    rs.runs.push_back(read_run_file(path, &header));
    if (digests && header && header->contains("config_digest"))
      digests->push_back((*header)["config_digest"].get<std::string>());
  }
  return rs;
}

}  // namespace segprover
