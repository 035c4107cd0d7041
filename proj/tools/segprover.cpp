// segprover command-line driver.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "segprover/segprover.hpp"

namespace {

using segprover::PipelineConfig;

struct Flags {
  std::string config_file;
  std::optional<std::string> corpus, trajectories, dataset, report, env, policy, theorems, out_dir, loss, tree;
  std::optional<std::string> strategy, tokenizer, mode, clock;
  std::optional<double> threshold, timeout;
  std::optional<std::size_t> beam, max_expansions, rollout_horizon, max_tokens, whole_proof_attempts, workers, runs;
  std::optional<std::int64_t> seed;
  std::optional<int> port;
  std::vector<std::string> methods;
  std::vector<double> cutoffs;
};

// Flags override the config file, which overrides built-in defaults.
PipelineConfig resolve(const Flags& f) {
  PipelineConfig c;
  if (!f.config_file.empty()) {
    std::ifstream in(f.config_file);
    if (!in) throw segprover::FormatError("cannot open config file " + f.config_file);
    segprover::json j;
    try {
      j = segprover::json::parse(in);
    } catch (const segprover::json::parse_error& e) {
      throw segprover::FormatError(f.config_file + ": " + e.what());
    }
    segprover::apply_config_json(c, j);
  }
  auto set = [](auto& dst, const auto& src) {
    if (src) dst = *src;
  };
  set(c.corpus_path, f.corpus);
  set(c.trajectory_path, f.trajectories);
  set(c.dataset_path, f.dataset);
  set(c.report_path, f.report);
  set(c.env_endpoint, f.env);
  set(c.policy_endpoint, f.policy);
  set(c.theorems_path, f.theorems);
  set(c.out_dir, f.out_dir);
  set(c.loss_path, f.loss);
  set(c.tree_path, f.tree);
  if (f.strategy || f.threshold) {
    auto kind = f.strategy ? segprover::parse_boundary_kind(*f.strategy) : c.strategy.kind();
    auto threshold = f.threshold ? f.threshold : c.strategy.threshold();
    if (!segprover::needs_threshold(kind)) threshold.reset();
    c.strategy = segprover::BoundaryStrategy(kind, threshold);
  }
  if (f.tokenizer) c.tokenizer = segprover::TokenizerSpec::parse(*f.tokenizer);
  if (f.mode) c.search.mode = segprover::parse_search_mode(*f.mode);
  if (f.clock) c.search.clock = segprover::parse_clock_kind(*f.clock);
  set(c.search.timeout_s, f.timeout);
  set(c.search.beam, f.beam);
  set(c.search.max_expansions, f.max_expansions);
  set(c.search.rollout_horizon, f.rollout_horizon);
  set(c.search.max_tokens, f.max_tokens);
  set(c.search.whole_proof_attempts, f.whole_proof_attempts);
  set(c.workers, f.workers);
  set(c.runs, f.runs);
  set(c.seed, f.seed);
  if (f.port) c.port = f.port;
  for (const auto& m : f.methods) {
    auto eq = m.find('=');
    if (eq == std::string::npos || eq == 0) throw segprover::FormatError("--method expects label=dir, got " + m);
    c.methods.push_back({m.substr(0, eq), m.substr(eq + 1)});
  }
  if (!f.cutoffs.empty()) c.cutoffs = f.cutoffs;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"segprover: proof trajectory segmentation and best-first proof search"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub) { sub->add_option("--config", f.config_file, "JSON config file"); };

  auto* extract = app.add_subcommand("extract", "Replay a raw corpus into verified trajectories");
  common(extract);
  extract->add_option("--corpus", f.corpus, "Raw corpus (JSONL)");
  extract->add_option("--trajectories", f.trajectories, "Output trajectory file (JSONL)");
  extract->add_option("--report", f.report, "Output rejection report (JSON)");
  extract->add_option("--env", f.env, "Environment endpoint: sim:<tree>, exec:<cmd>, tcp:<host>:<port>");
  extract->add_option("--workers", f.workers);

  auto* segment = app.add_subcommand("segment", "Build a supervision dataset from trajectories");
  common(segment);
  segment->add_option("--trajectories", f.trajectories);
  segment->add_option("--dataset", f.dataset, "Output dataset (JSONL)");
  segment->add_option("--strategy", f.strategy,
                      "step | whole | goal_change | token_threshold | tactic_distance | state_distance");
  segment->add_option("--threshold", f.threshold, "Token count or distance threshold");
  segment->add_option("--tokenizer", f.tokenizer, "whitespace | map:<file>");

  auto* stats = app.add_subcommand("stats", "Target-length distribution and loss decomposition");
  common(stats);
  stats->add_option("--dataset", f.dataset);
  stats->add_option("--tokenizer", f.tokenizer);
  stats->add_option("--loss", f.loss, "Per-example length/loss records (JSONL)");
  stats->add_option("--out-dir", f.out_dir);

  auto* prove = app.add_subcommand("prove", "Run proof search over an evaluation set");
  common(prove);
  prove->add_option("--theorems", f.theorems, "Evaluation set (JSONL with theorem_id, statement)");
  prove->add_option("--env", f.env);
  prove->add_option("--policy", f.policy, "Policy endpoint: scripted:<file>, exec:<cmd>, tcp:<host>:<port>");
  prove->add_option("--mode", f.mode, "step | macro | whole_proof");
  prove->add_option("--beam", f.beam, "Candidates per expansion (default 8)");
  prove->add_option("--max-expansions", f.max_expansions, "Expansion budget (default 600)");
  prove->add_option("--timeout", f.timeout, "Per-theorem timeout in seconds (default 1800)");
  prove->add_option("--rollout-horizon", f.rollout_horizon, "Goal-aware rollout horizon H (default 5, 0 disables)");
  prove->add_option("--max-tokens", f.max_tokens, "Generation length limit (required)");
  prove->add_option("--whole-proof-attempts", f.whole_proof_attempts, "Whole-proof sample budget (default 2048)");
  prove->add_option("--runs", f.runs, "Independent runs (default 5)");
  prove->add_option("--workers", f.workers);
  prove->add_option("--seed", f.seed);
  prove->add_option("--clock", f.clock, "wall | logical");
  prove->add_option("--out-dir", f.out_dir);

  auto* report = app.add_subcommand("report", "Success, cost and time-to-solve tables");
  common(report);
  report->add_option("--method", f.methods, "label=results_dir (repeatable)");
  report->add_option("--cutoffs", f.cutoffs, "Time cutoffs in seconds, ascending");
  report->add_option("--timeout", f.timeout, "Per-theorem timeout used for default cutoffs");
  report->add_option("--out-dir", f.out_dir);

  auto* simenv = app.add_subcommand("simenv", "Serve a simulated environment over the wire protocol");
  common(simenv);
  simenv->add_option("--tree", f.tree, "Tree spec (JSON)");
  simenv->add_option("--port", f.port, "Listen on 127.0.0.1:<port> instead of stdin/stdout");

  CLI11_PARSE(app, argc, argv);

  PipelineConfig config;
  try {
    config = resolve(f);
  } catch (const std::exception& e) {
    std::cerr << "segprover: " << e.what() << '\n';
    return 2;
  }
  if (extract->parsed()) return segprover::cmd_extract(config);
  if (segment->parsed()) return segprover::cmd_segment(config);
  if (stats->parsed()) return segprover::cmd_stats(config);
  if (prove->parsed()) return segprover::cmd_prove(config);
  if (report->parsed()) return segprover::cmd_report(config);
  if (simenv->parsed()) return segprover::cmd_simenv(config);
  return 2;
}
