#include <atomic>
#include <csignal>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "intentaug/intentaug.hpp"

namespace {

using namespace intentaug;

int report_error(const std::string& command, ErrorKind kind, const std::string& message,
                 const std::vector<std::string>& details = {}) {
  nlohmann::json err{{"error", to_string(kind)}, {"command", command}, {"message", message}};
  if (!details.empty()) err["details"] = details;
  std::cerr << err.dump() << '\n';
  return exit_code(kind);
}

MockServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"LLM data augmentation for intent recognition with ambiguity-driven regeneration"};
  cli.require_subcommand(1);

  // augment
  auto* augment = cli.add_subcommand("augment", "Generate, detect and disambiguate synthetic utterances");
  std::string config_path;
  bool dry_run = false;
  std::optional<std::string> run_dir;
  std::optional<std::uint64_t> seed, first_round;
  std::optional<std::size_t> n_shot, rounds, n_synthetic;
  std::optional<std::string> strategy, metric, center, output_dir;
  augment->add_option("--config", config_path, "Run config (TOML)")->required()->check(CLI::ExistingFile);
  augment->add_flag("--dry-run", dry_run, "Validate and print the planned call counts without calling providers");
  augment->add_option("--run-dir", run_dir, "Write into this directory instead of a fresh one under output_dir");
  augment->add_option("--seed", seed);
  augment->add_option("--n-shot", n_shot);
  augment->add_option("--rounds", rounds);
  augment->add_option("--first-round", first_round);
  augment->add_option("--n-synthetic", n_synthetic);
  augment->add_option("--strategy", strategy, "none | drop | dis-<k>");
  augment->add_option("--metric", metric, "cosine | euclidean");
  augment->add_option("--center", center, "mean | median");
  augment->add_option("--output-dir", output_dir);

  // report
  auto* report = cli.add_subcommand("report", "Aggregate run directories into CSV tables");
  std::vector<std::string> report_dirs;
  std::string report_out;
  std::vector<std::string> score_files;
  bool group = false;
  report->add_option("run_dirs", report_dirs, "Run or round directories")->required();
  report->add_option("--out", report_out, "Output directory for the tables")->required();
  report->add_option("--scores", score_files, "seed,macro_f1 CSV files from the classifier harness");
  report->add_flag("--group", group, "Aggregate each configuration separately instead of rejecting mixed runs");

  // validate-corpus
  auto* validate_cmd = cli.add_subcommand("validate-corpus", "Check a corpus file and print class sizes");
  std::string corpus_path, corpus_format = "csv";
  std::optional<std::string> labels_path;
  std::optional<std::size_t> min_shot;
  validate_cmd->add_option("corpus", corpus_path)->required()->check(CLI::ExistingFile);
  validate_cmd->add_option("--format", corpus_format, "csv | jsonl");
  validate_cmd->add_option("--labels", labels_path, "Label manifest (JSON)");
  validate_cmd->add_option("--n-shot", min_shot, "Fail if any class has fewer utterances");

  // pvi
  auto* pvi = cli.add_subcommand("pvi", "Score and filter synthetic utterances by pointwise V-information");
  std::string prob_path, pvi_out, pvi_mode = "per_intent";
  std::optional<double> pvi_threshold;
  std::optional<std::string> thresholds_file;
  double min_kept = 0.5;
  pvi->add_option("probabilities", prob_path, "JSONL of {id,label,p_with_input,p_null}")->required();
  pvi->add_option("--out", pvi_out, "Output directory (a round directory to feed report)")->required();
  pvi->add_option("--mode", pvi_mode, "global | per_intent");
  pvi->add_option("--threshold", pvi_threshold, "Global threshold (default: mean PVI)");
  pvi->add_option("--thresholds", thresholds_file, "JSON object of per-class thresholds");
  pvi->add_option("--min-kept-fraction", min_kept, "Flag classes keeping less than this fraction");

  // mock-serve
  auto* serve = cli.add_subcommand("mock-serve", "Serve deterministic mock chat and embedding endpoints over HTTP");
  std::string host = "127.0.0.1", prefix = "/v1", mock_gen = "convergent", mock_enc = "hash";
  int port = 8080, fail_first = 0;
  std::size_t dim = 64;
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--prefix", prefix);
  serve->add_option("--generator", mock_gen)->check(CLI::IsMember({"convergent", "echo"}));
  serve->add_option("--encoder", mock_enc)->check(CLI::IsMember({"hash", "tokens"}));
  serve->add_option("--dim", dim);
  serve->add_option("--fail-first", fail_first, "Answer the first N requests with HTTP 500");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorKind::config);
  }

  const std::string command = cli.get_subcommands().front()->get_name();
  try {
    if (*augment) {
      std::vector<std::string> errors;
      auto cfg = load_run_config(config_path, errors);
      if (!errors.empty()) throw ConfigError(std::move(errors));
      if (seed) cfg.seed = *seed;
      if (n_shot) cfg.n_shot = *n_shot;
      if (rounds) cfg.rounds = *rounds;
      if (first_round) cfg.first_round = *first_round;
      if (n_synthetic) cfg.n_synthetic = *n_synthetic;
      if (strategy) cfg.strategy = *strategy;
      if (metric) cfg.metric = parse_metric(*metric);
      if (center) cfg.center_kind = parse_center_kind(*center);
      if (output_dir) cfg.output_dir = *output_dir;
      app::AugmentOptions opts;
      opts.dry_run = dry_run;
      if (run_dir) opts.run_dir = *run_dir;
      const auto res = app::cmd_augment(cfg, opts, std::cerr);
      if (dry_run) {
        std::cout << res.plan.dump(2) << '\n';
      } else {
        std::cout << res.run_dir.string() << '\n';
      }
    } else if (*report) {
      app::ReportOptions opts;
      opts.dirs.assign(report_dirs.begin(), report_dirs.end());
      opts.out_dir = report_out;
      opts.score_files.assign(score_files.begin(), score_files.end());
      opts.group = group;
      const auto reports = app::cmd_report(opts);
      for (const auto& r : reports) std::cout << r.key.describe() << ": " << r.runs << " runs\n";
    } else if (*validate_cmd) {
      std::optional<std::filesystem::path> manifest;
      if (labels_path) manifest = *labels_path;
      std::cout << app::cmd_validate_corpus(corpus_path, parse_corpus_format(corpus_format), manifest, min_shot).dump(2)
                << '\n';
    } else if (*pvi) {
      app::PviOptions opts;
      opts.probabilities = prob_path;
      opts.mode = parse_pvi_mode(pvi_mode);
      opts.global_threshold = pvi_threshold;
      if (thresholds_file) opts.thresholds_file = *thresholds_file;
      opts.min_kept_fraction = min_kept;
      opts.out_dir = pvi_out;
      const auto res = app::cmd_pvi(opts);
      std::cout << to_json(res).dump(2) << '\n';
    } else if (*serve) {
      const auto chat = mock_gen == "echo" ? mock::ChatFn(mock::echo_intent_chat) : mock::ChatFn(mock::convergent_chat);
      const mock::EmbedFn embed = mock_enc == "tokens"
                                      ? mock::EmbedFn([dim](std::string_view t) { return mock::token_embedding(t, dim); })
                                      : mock::EmbedFn([dim](std::string_view t) { return mock::hash_embedding(t, dim); });
      MockServer server(std::make_shared<mock::MockEndpoint>(chat, embed, fail_first), prefix);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "serving on http://" << host << ":" << port << prefix << '\n';
      server.run(host, port);
      g_server = nullptr;
    }
  } catch (const ConfigError& e) {
    return report_error(command, ErrorKind::config, e.what(), e.messages());
  } catch (const Error& e) {
    return report_error(command, e.kind(), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return report_error(command, ErrorKind::data, e.what());
  } catch (const nlohmann::json::exception& e) {
    return report_error(command, ErrorKind::data, e.what());
  }
  return 0;
}
