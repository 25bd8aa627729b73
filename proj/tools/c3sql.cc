// c3sql: zero-shot text-to-SQL batch runner.
//
//   c3sql run --data corpus/mini --db-dir build/mini_corpus/database \
//             --backend replay --cache-dir corpus/mini/replay --out runs/mini
//
// Exit status: 0 success, 1 some questions failed, 2 configuration or
// environment problem.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "c3sql/errors.h"
#include "c3sql/pipeline.h"
#include "c3sql/text_util.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitConfig = 2;

struct Options {
  std::string data_dir;
  std::string tables;
  std::string questions;
  std::string db_dir;
  std::string out = "out";
  std::string config_file;
  std::vector<std::pair<std::string, std::string>> overrides;  // CLI layer

  std::string backend, cache_dir, layout, model;
  int n_samples = 0;
  int workers = 0;
  bool no_calibration = false, no_linking = false, no_self_consistency = false,
       no_foreign_keys = false, dump_traces = false, auc_per_question = false;
  std::vector<std::string> settings;  // --set key=value

  bool force = false;
  std::string predictions;
  std::string question_id;
  std::string stage = "generation";
  bool verbose = false;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--data", o.data_dir,
                  "Dataset directory holding tables.json, dev.json and database/");
  cmd->add_option("--tables", o.tables, "Spider tables.json (overrides --data)");
  cmd->add_option("--questions", o.questions, "Question file in dev.json layout (overrides --data)");
  cmd->add_option("--db-dir", o.db_dir, "Directory of <db_id>/<db_id>.sqlite files");
  cmd->add_option("--out", o.out, "Output directory")->capture_default_str();
  cmd->add_option("--config", o.config_file, "Flat key = value configuration file");
  cmd->add_option("--backend", o.backend, "live, record or replay");
  cmd->add_option("--cache-dir", o.cache_dir, "Response cache directory");
  cmd->add_option("--layout", o.layout, "clear or complicated");
  cmd->add_option("--model", o.model, "Model name sent to the endpoint");
  cmd->add_option("--n-samples", o.n_samples, "SQL samples per question");
  cmd->add_option("--workers", o.workers, "Questions processed concurrently");
  cmd->add_flag("--no-calibration", o.no_calibration, "Drop the calibration hint history");
  cmd->add_flag("--no-linking", o.no_linking, "Prompt with the full schema");
  cmd->add_flag("--no-self-consistency", o.no_self_consistency, "Draw a single sample");
  cmd->add_flag("--no-foreign-keys", o.no_foreign_keys, "Omit foreign-key lines from generation");
  cmd->add_flag("--dump-traces", o.dump_traces, "Write per-question vote traces");
  cmd->add_flag("--auc-per-question", o.auc_per_question, "Macro-average recall AUC per question");
  cmd->add_option("--set", o.settings, "Any configuration key as key=value (repeatable)");
  cmd->add_flag("-v,--verbose", o.verbose, "Debug logging");
}

void collect_overrides(const CLI::App& cmd, Options& o) {
  auto& ov = o.overrides;
  for (const auto& s : o.settings) {
    auto eq = s.find('=');
    if (eq == std::string::npos) throw c3sql::ConfigError("--set expects key=value, got '" + s + "'");
    ov.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (cmd.count("--backend")) ov.emplace_back("backend", o.backend);
  if (cmd.count("--cache-dir")) ov.emplace_back("cache_dir", o.cache_dir);
  if (cmd.count("--layout")) ov.emplace_back("layout", o.layout);
  if (cmd.count("--model")) ov.emplace_back("model_name", o.model);
  if (cmd.count("--n-samples")) ov.emplace_back("n_samples", std::to_string(o.n_samples));
  if (cmd.count("--workers")) ov.emplace_back("workers", std::to_string(o.workers));
  if (o.no_calibration) ov.emplace_back("use_calibration", "false");
  if (o.no_linking) ov.emplace_back("use_linking", "false");
  if (o.no_self_consistency) ov.emplace_back("use_self_consistency", "false");
  if (o.no_foreign_keys) ov.emplace_back("use_foreign_keys", "false");
  if (o.dump_traces) ov.emplace_back("dump_traces", "true");
  if (o.auc_per_question) ov.emplace_back("auc_per_question", "true");
}

c3sql::PipelineConfig build_config(const Options& o) {
  c3sql::PipelineConfig config;
  if (!o.config_file.empty()) c3sql::apply_config_file(config, o.config_file);
  c3sql::apply_environment(config, [](const char* name) { return std::getenv(name); });
  for (const auto& [key, value] : o.overrides) c3sql::apply_setting(config, key, value);
  return config;
}

c3sql::DatasetPaths dataset_paths(const Options& o) {
  c3sql::DatasetPaths paths;
  if (!o.data_dir.empty()) {
    paths.tables = fs::path(o.data_dir) / "tables.json";
    paths.questions = fs::path(o.data_dir) / "dev.json";
  }
  if (!o.tables.empty()) paths.tables = o.tables;
  if (!o.questions.empty()) paths.questions = o.questions;
  if (!o.db_dir.empty()) paths.db_dir = o.db_dir;
  if (paths.tables.empty() || paths.questions.empty()) {
    throw c3sql::ConfigError("no dataset given: pass --data or both --tables and --questions");
  }
  return paths;
}

int exit_for(const std::vector<c3sql::StageSummary>& stages) {
  int code = kExitOk;
  for (const auto& s : stages) {
    std::cout << s.stage << ": " << s.processed << " done, " << s.skipped << " skipped, "
              << s.failures.size() << " failed\n";
    if (!s.failures.empty()) code = kExitPartial;
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("c3sql"));

  CLI::App app{"Zero-shot text-to-SQL with schema linking and execution-based voting"};
  app.require_subcommand(1);
  Options o;

  auto* link = app.add_subcommand("link", "Recall tables and columns for every question");
  auto* generate = app.add_subcommand("generate", "Sample SQL and vote by execution result");
  auto* eval = app.add_subcommand("eval", "Score predictions by execution accuracy");
  auto* run = app.add_subcommand("run", "link, generate and eval in sequence");
  auto* dump = app.add_subcommand("dump-prompt", "Print the prompt sent for one question");
  for (auto* cmd : {link, generate, eval, run, dump}) add_common(cmd, o);
  for (auto* cmd : {link, run}) {
    cmd->add_flag("--force", o.force, "Redo linking even when artifacts exist");
  }
  eval->add_option("--predictions", o.predictions, "Predictions file (default <out>/predictions.json)");
  dump->add_option("--question-id", o.question_id, "Question to render")->required();
  dump->add_option("--stage", o.stage, "table, column or generation")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const CLI::App* cmd = app.get_subcommands().front();
    collect_overrides(*cmd, o);
    spdlog::set_level(o.verbose ? spdlog::level::debug : spdlog::level::info);
    c3sql::Pipeline pipeline(build_config(o), dataset_paths(o), o.out);

    if (cmd == link) return exit_for({pipeline.link(o.force)});
    if (cmd == generate) return exit_for({pipeline.generate()});
    if (cmd == eval) {
      std::optional<fs::path> predictions;
      if (!o.predictions.empty()) predictions = o.predictions;
      auto summary = pipeline.eval(predictions);
      std::cout << c3sql::text::read_file(pipeline.out_dir() / "report.txt");
      return exit_for({summary});
    }
    if (cmd == run) {
      auto summary = pipeline.run(o.force);
      std::cout << c3sql::text::read_file(pipeline.out_dir() / "report.txt");
      return exit_for(summary.stages);
    }
    std::cout << pipeline.dump_prompt(o.question_id, o.stage);
    return kExitOk;
  } catch (const c3sql::ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
  } catch (const c3sql::EnvironmentError& e) {
    spdlog::error("environment error: {}", e.what());
  } catch (const c3sql::AuthenticationError& e) {
    spdlog::error("authentication failed: {}", e.what());
  } catch (const c3sql::Error& e) {
    spdlog::error("{}", e.what());
  }
  return kExitConfig;
}
