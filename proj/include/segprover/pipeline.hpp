#pragma once

// Command implementations behind the segprover CLI: extract, segment, stats,
// prove, report, simenv. Each returns a process exit status; per-record
// failures are data and never change it.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "segprover/boundary.hpp"
#include "segprover/io.hpp"
#include "segprover/metrics.hpp"
#include "segprover/policy.hpp"
#include "segprover/protocol.hpp"
#include "segprover/replay.hpp"
#include "segprover/search.hpp"
#include "segprover/sim_env.hpp"
#include "segprover/tokenizer.hpp"
#include "segprover/transport.hpp"

namespace segprover {

struct MethodDir {
  std::string label;
  std::string dir;
};

/// Fully resolved configuration. Defaults: beam 8, 600 expansions, 1800 s
/// timeout, rollout horizon 5, 2048 whole-proof attempts, 5 runs.
struct PipelineConfig {
  std::string corpus_path;
  std::string trajectory_path;
  std::string dataset_path;
  std::string report_path;  // extract rejection report; defaults next to the trajectories
  BoundaryStrategy strategy = BoundaryStrategy::goal_change();
  TokenizerSpec tokenizer;
  SearchConfig search;
  std::string env_endpoint;
  std::string policy_endpoint;
  std::size_t workers = 1;
  std::size_t runs = 5;
  std::int64_t seed = 0;

  std::string theorems_path;
  std::string out_dir;
  std::string loss_path;
  std::vector<MethodDir> methods;
  std::vector<double> cutoffs;
  std::string tree_path;
  std::optional<int> port;

  json to_json() const {
    json methods_json = json::array();
    for (const auto& m : methods) methods_json.push_back({{"label", m.label}, {"dir", m.dir}});
    return json{{"corpus_path", corpus_path},
                {"trajectory_path", trajectory_path},
                {"dataset_path", dataset_path},
                {"report_path", report_path},
                {"strategy", std::string(to_string(strategy.kind()))},
                {"threshold", strategy.threshold() ? json(*strategy.threshold()) : json(nullptr)},
                {"tokenizer", tokenizer.describe()},
                {"search", search.to_json()},
                {"env_endpoint", env_endpoint},
                {"policy_endpoint", policy_endpoint},
                {"workers", workers},
                {"runs", runs},
                {"seed", seed},
                {"theorems_path", theorems_path},
                {"out_dir", out_dir},
                {"loss_path", loss_path},
                {"methods", std::move(methods_json)},
                {"cutoffs", cutoffs},
                {"tree_path", tree_path}};
  }

  std::string digest() const { return digest_of(to_json()); }

  void validate() const {
    if (workers < 1) throw InvariantError("workers must be positive");
    if (runs < 1) throw InvariantError("runs must be at least 1");
    std::vector<std::string> paths;
    for (const auto* p : {&corpus_path, &trajectory_path, &dataset_path, &theorems_path, &loss_path})
      if (!p->empty()) paths.push_back(*p);
    std::sort(paths.begin(), paths.end());
    if (std::adjacent_find(paths.begin(), paths.end()) != paths.end())
      throw InvariantError("input/output paths must be distinct");
  }
};

/// Applies the keys present in a JSON config file; absent keys keep their value.
inline void apply_config_json(PipelineConfig& c, const json& j) {
  auto str = [&](const char* key, std::string& dst) {
    if (j.contains(key)) dst = j[key].get<std::string>();
  };
  try {
    str("corpus_path", c.corpus_path);
    str("trajectory_path", c.trajectory_path);
    str("dataset_path", c.dataset_path);
    str("report_path", c.report_path);
    str("env_endpoint", c.env_endpoint);
    str("policy_endpoint", c.policy_endpoint);
    str("theorems_path", c.theorems_path);
    str("out_dir", c.out_dir);
    str("loss_path", c.loss_path);
    str("tree_path", c.tree_path);
    if (j.contains("strategy") || j.contains("threshold")) {
      auto kind = j.contains("strategy") ? parse_boundary_kind(j["strategy"].get<std::string>()) : c.strategy.kind();
      std::optional<double> threshold = c.strategy.threshold();
      if (j.contains("threshold")) threshold = j["threshold"].is_null() ? std::nullopt : std::optional(j["threshold"].get<double>());
      if (!needs_threshold(kind)) threshold.reset();
      c.strategy = BoundaryStrategy(kind, threshold);
    }
    if (j.contains("tokenizer")) c.tokenizer = TokenizerSpec::parse(j["tokenizer"].get<std::string>());
    if (j.contains("workers")) c.workers = j["workers"].get<std::size_t>();
    if (j.contains("runs")) c.runs = j["runs"].get<std::size_t>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::int64_t>();
    if (j.contains("cutoffs")) c.cutoffs = j["cutoffs"].get<std::vector<double>>();
    if (j.contains("port")) c.port = j["port"].get<int>();
    if (j.contains("methods"))
      for (const auto& m : j["methods"]) c.methods.push_back({m.at("label").get<std::string>(), m.at("dir").get<std::string>()});
    if (j.contains("search")) {
      const auto& s = j["search"];
      auto& d = c.search;
      if (s.contains("mode")) d.mode = parse_search_mode(s["mode"].get<std::string>());
      if (s.contains("beam")) d.beam = s["beam"].get<std::size_t>();
      if (s.contains("max_expansions")) d.max_expansions = s["max_expansions"].get<std::size_t>();
      if (s.contains("timeout_s")) d.timeout_s = s["timeout_s"].get<double>();
      if (s.contains("rollout_horizon")) d.rollout_horizon = s["rollout_horizon"].get<std::size_t>();
      if (s.contains("max_tokens")) d.max_tokens = s["max_tokens"].get<std::size_t>();
      if (s.contains("whole_proof_attempts")) d.whole_proof_attempts = s["whole_proof_attempts"].get<std::size_t>();
      if (s.contains("clock")) d.clock = parse_clock_kind(s["clock"].get<std::string>());
      if (s.contains("extensions")) d.extensions = s["extensions"];
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad config file: ") + e.what());
  }
}

inline json command_header(const PipelineConfig& c, std::string_view command) {
  return json{{"command", command}, {"config", c.to_json()}, {"config_digest", c.digest()}};
}

// ---------------------------------------------------------------------------
// Endpoints

/// Opens environment sessions for one worker. `sim:<tree.json>` runs in
/// process; exec:/tcp: share one connection per worker, each session
/// starting with a fresh init.
class EnvConnector {
 public:
  explicit EnvConnector(const std::string& endpoint) {
    if (endpoint.rfind("sim:", 0) == 0) {
      tree_ = std::make_shared<const SimTree>(load_tree_spec(endpoint.substr(4)));
      return;
    }
    endpoint_ = Endpoint::parse(endpoint);
    if (endpoint_.kind == Endpoint::Kind::other) throw FormatError("unsupported env endpoint: " + endpoint);
  }

  EnvFactory factory() const {
    if (tree_) return [tree = tree_] { return std::make_unique<SimSession>(tree); };
    auto channel = std::shared_ptr<LineChannel>(open_channel(endpoint_));
    return [channel] { return std::make_unique<RemoteEnvSession>(channel); };
  }

 private:
  std::shared_ptr<const SimTree> tree_;
  Endpoint endpoint_;
};

/// `scripted:<file>` policies are shared; remote ones get a channel per worker.
class PolicyConnector {
 public:
  explicit PolicyConnector(const std::string& endpoint) {
    if (endpoint.rfind("scripted:", 0) == 0) {
      scripted_ = std::make_shared<ScriptedPolicy>(ScriptedPolicy::load(endpoint.substr(9)));
      return;
    }
    endpoint_ = Endpoint::parse(endpoint);
    if (endpoint_.kind == Endpoint::Kind::other) throw FormatError("unsupported policy endpoint: " + endpoint);
  }

  std::shared_ptr<Policy> open() const {
    if (scripted_) return scripted_;
    return std::make_shared<RemotePolicy>(std::shared_ptr<LineChannel>(open_channel(endpoint_)));
  }

 private:
  std::shared_ptr<ScriptedPolicy> scripted_;
  Endpoint endpoint_;
};

// ---------------------------------------------------------------------------
// Commands

inline int fail(std::ostream& err, std::string_view command, std::string_view message) {
  err << "segprover " << command << ": " << message << '\n';
  return 1;
}

inline int cmd_extract(const PipelineConfig& c, std::ostream& err = std::cerr) {
  try {
    c.validate();
    if (c.corpus_path.empty() || c.trajectory_path.empty()) return fail(err, "extract", "--corpus and --trajectories are required");
    if (c.env_endpoint.empty()) return fail(err, "extract", "--env is required");
    std::vector<RawRecord> records;
    for (const auto& j : read_jsonl_file(c.corpus_path)) records.push_back(raw_record_from_json(j));
    EnvConnector env(c.env_endpoint);
    // Sessions are per record; remote connections are per worker thread.
    std::mutex mu;
    auto result = verify_corpus_with(
        records,
        [&] {
          std::lock_guard lock(mu);
          return env.factory();
        },
        c.workers);
    std::vector<json> out;
    for (const auto& t : result.trajectories) out.push_back(trajectory_to_json(t));
    write_jsonl_file(c.trajectory_path, command_header(c, "extract"), out);
    auto report_path = c.report_path.empty() ? c.trajectory_path + ".report.json" : c.report_path;
    json report = result.report.to_json();
    report[std::string(kHeaderKey)] = command_header(c, "extract");
    std::ofstream rep(report_path, std::ios::binary);
    if (!rep) return fail(err, "extract", "cannot write " + report_path);
    rep << report.dump(2) << '\n';
    return 0;
  } catch (const std::exception& e) {
    return fail(err, "extract", e.what());
  }
}

inline int cmd_segment(const PipelineConfig& c, std::ostream& err = std::cerr) {
  try {
    c.validate();
    if (c.trajectory_path.empty() || c.dataset_path.empty())
      return fail(err, "segment", "--trajectories and --dataset are required");
    std::vector<Trajectory> trajectories;
    for (const auto& j : read_jsonl_file(c.trajectory_path)) trajectories.push_back(trajectory_from_json(j));
    Tokenizer tokenizer(c.tokenizer);
    auto ds = build_dataset(trajectories, c.strategy, tokenizer);
    write_dataset(c.dataset_path, ds, command_header(c, "segment"));
    return 0;
  } catch (const std::exception& e) {
    return fail(err, "segment", e.what());
  }
}

inline std::string format_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

inline int cmd_stats(const PipelineConfig& c, std::ostream& err = std::cerr) {
  try {
    c.validate();
    if (c.dataset_path.empty() || c.out_dir.empty()) return fail(err, "stats", "--dataset and --out-dir are required");
    Tokenizer tokenizer(c.tokenizer);
    auto examples = read_dataset(c.dataset_path);
    auto dist = target_length_distribution(examples, tokenizer);
    std::ostringstream csv;
    csv << "# config_digest=" << c.digest() << " tokenizer=" << c.tokenizer.describe() << '\n';
    csv << "length,probability\n";
    for (auto [len, p] : dist) csv << len << ',' << format_g(p) << '\n';
    write_text_file(std::filesystem::path(c.out_dir) / "length_distribution.csv", csv.str());

    if (!c.loss_path.empty()) {
      if (!std::filesystem::exists(c.loss_path)) return fail(err, "stats", "loss file not found: " + c.loss_path);
      auto d = loss_decomposition(read_loss_records(c.loss_path));
      std::ostringstream lcsv;
      lcsv << "# config_digest=" << c.digest() << '\n';
      lcsv << "# overall_mean=" << format_g(d.overall_mean) << " reconstruction=" << format_g(d.reconstruction) << '\n';
      lcsv << "length,probability,mean_loss\n";
      for (const auto& [len, mean] : d.per_length_mean)
        lcsv << len << ',' << format_g(d.length_probability.at(len)) << ',' << format_g(mean) << '\n';
      write_text_file(std::filesystem::path(c.out_dir) / "loss_decomposition.csv", lcsv.str());
    }
    return 0;
  } catch (const std::exception& e) {
    return fail(err, "stats", e.what());
  }
}

/// Runs every theorem once with `workers` threads. Each worker owns one
/// environment connection and one policy handle; results keep input order.
inline std::vector<SearchResult> prove_all(const std::vector<TheoremRef>& theorems, const EnvConnector& env,
                                           const PolicyConnector& policy, const SearchConfig& search,
                                           std::size_t workers) {
  std::vector<SearchResult> results(theorems.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mu;
  std::exception_ptr error;
  auto work = [&] {
    try {
      auto factory = env.factory();
      auto pol = policy.open();
      for (std::size_t i = next++; i < theorems.size(); i = next++) {
        if (search.mode == SearchMode::whole_proof) {
          results[i] = whole_proof_prove(theorems[i], *pol, factory, search);
        } else {
          auto session = factory();
          results[i] = best_first_prove(theorems[i], *pol, *session, search);
        }
      }
    } catch (...) {
      std::lock_guard lock(error_mu);
      if (!error) error = std::current_exception();
      next = theorems.size();
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, theorems.size()));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return results;
}

inline std::vector<TheoremRef> read_theorems(const std::filesystem::path& path) {
  std::vector<TheoremRef> out;
  for (const auto& j : read_jsonl_file(path))
    out.push_back({required<std::string>(j, "theorem_id"),
                   j.contains("statement") ? required<std::string>(j, "statement") : std::string()});
  return out;
}

inline int cmd_prove(const PipelineConfig& c, std::ostream& err = std::cerr) {
  try {
    c.validate();
    c.search.validate();
    if (c.theorems_path.empty() || c.out_dir.empty()) return fail(err, "prove", "--theorems and --out-dir are required");
    if (c.env_endpoint.empty() || c.policy_endpoint.empty()) return fail(err, "prove", "--env and --policy are required");
    auto theorems = read_theorems(c.theorems_path);
    EnvConnector env(c.env_endpoint);
    PolicyConnector policy(c.policy_endpoint);
    const auto digest = c.digest();
    for (std::size_t run = 1; run <= c.runs; ++run) {
      SearchConfig search = c.search;
      search.extensions["seed"] = c.seed;
      search.extensions["run"] = run;
      auto results = prove_all(theorems, env, policy, search, c.workers);
      std::vector<json> records;
      for (const auto& r : results) records.push_back(result_to_json(r, run, digest));
      json header = command_header(c, "prove");
      header["run_id"] = run;
      write_jsonl_file(std::filesystem::path(c.out_dir) / ("run_" + std::to_string(run) + ".jsonl"), header, records);
    }
    return 0;
  } catch (const std::exception& e) {
    return fail(err, "prove", e.what());
  }
}

inline std::vector<double> default_cutoffs(double timeout) {
  std::vector<double> out;
  for (double t : {1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0})
    if (t < timeout) out.push_back(t);
  out.push_back(timeout);
  return out;
}

inline int cmd_report(const PipelineConfig& c, std::ostream& err = std::cerr) {
  try {
    if (c.methods.empty() || c.out_dir.empty()) return fail(err, "report", "--method and --out-dir are required");
    std::vector<RunSet> runsets;
    json inputs = json::array();
    for (const auto& m : c.methods) {
      std::vector<std::string> digests;
      runsets.push_back(load_runset(m.label, m.dir, &digests));
      runsets.back().validate();
      inputs.push_back({{"label", m.label}, {"runs", runsets.back().runs.size()}, {"config_digests", digests}});
    }
    auto universe = runsets.front().theorems();
    for (const auto& rs : runsets)
      if (rs.theorems() != universe) return fail(err, "report", "methods cover different theorem universes");

    auto cutoffs = c.cutoffs.empty() ? default_cutoffs(c.search.timeout_s) : c.cutoffs;
    json report_cfg{{"methods", inputs}, {"cutoffs", cutoffs}};
    const auto digest = digest_of(report_cfg);
    const std::string head = "# config_digest=" + digest + "\n";
    const auto dir = std::filesystem::path(c.out_dir);

    std::size_t width = 0;
    for (const auto& rs : runsets) width = std::max(width, rs.label.size());
    auto padded = [width](const std::string& label) { return "  " + label + std::string(width - label.size(), ' '); };

    std::ostringstream success, costs, curve, text;
    success << head << "label,mean,std\n";
    text << "segprover report\nconfig_digest " << digest << "\ntheorems " << universe.size() << "\n\n";
    text << "proof success rate (mean \xC2\xB1 std over runs, %)\n";
    for (const auto& rs : runsets) {
      auto s = aggregate_success(rs);
      success << rs.label << ',' << format_fixed(s.mean, 2) << ',' << format_fixed(s.std, 2) << '\n';
      text << padded(rs.label) << "  " << format_mean_std(s) << "  (" << rs.runs.size() << " runs)\n";
    }

    auto cs = common_solved_costs(runsets);
    costs << head << "# averages over (theorem, run) pairs in the common-solved subset\n";
    costs << "label,avg_tokens,avg_time,subset_size\n";
    text << "\ncommon-solved subset: " << cs.subset.size() << " theorems; averages over (theorem, run) pairs\n";
    for (const auto& m : cs.methods) {
      auto tok = m.avg_output_tokens ? format_fixed(*m.avg_output_tokens, 2) : std::string();
      auto tim = m.avg_elapsed_s ? format_fixed(*m.avg_elapsed_s, 2) : std::string();
      costs << m.label << ',' << tok << ',' << tim << ',' << cs.subset.size() << '\n';
      text << padded(m.label) << "  tokens " << (tok.empty() ? "-" : tok) << "  time_s " << (tim.empty() ? "-" : tim)
           << '\n';
    }

    curve << head << "label,cutoff,log1p_cutoff,mean,min,max\n";
    text << "\ncumulative accuracy at cutoffs (mean over runs)\n";
    for (const auto& rs : runsets) {
      text << padded(rs.label);
      for (const auto& p : cumulative_accuracy(rs, cutoffs)) {
        curve << rs.label << ',' << format_g(p.cutoff) << ',' << format_fixed(p.log1p_cutoff, 6) << ','
              << format_fixed(p.mean, 6) << ',' << format_fixed(p.min, 6) << ',' << format_fixed(p.max, 6) << '\n';
        text << "  " << format_g(p.cutoff) << "s:" << format_fixed(100.0 * p.mean, 2);
      }
      text << '\n';
    }
    write_text_file(dir / "success.csv", success.str());
    write_text_file(dir / "costs.csv", costs.str());
    write_text_file(dir / "curve.csv", curve.str());
    write_text_file(dir / "report.txt", text.str());
    return 0;
  } catch (const std::exception& e) {
    return fail(err, "report", e.what());
  }
}

/// Serves the tree on stdin/stdout (one session), or on a TCP port with one
/// session per connection when `port` is set.
inline int cmd_simenv(const PipelineConfig& c, std::ostream& err = std::cerr) {
  std::shared_ptr<const SimTree> tree;
  try {
    if (c.tree_path.empty()) return fail(err, "simenv", "--tree is required");
    tree = std::make_shared<const SimTree>(load_tree_spec(c.tree_path));
  } catch (const std::exception& e) {
    return fail(err, "simenv", e.what());
  }
  try {
    if (c.port) {
      TcpListener listener(static_cast<unsigned short>(*c.port));
      err << "simenv listening on 127.0.0.1:" << listener.port() << std::endl;
      serve_sim_tcp(tree, listener);
    } else {
      FdChannel stdio(dup(0), dup(1));
      serve_sim_session(tree, stdio);
    }
    return 0;
  } catch (const std::exception& e) {
    return fail(err, "simenv", e.what());
  }
}

}  // namespace segprover
