#include "c3sql/pipeline.h"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <map>
#include <mutex>
#include <set>

#include "c3sql/consistency_vote.h"
#include "c3sql/errors.h"
#include "c3sql/evaluation.h"
#include "c3sql/parallel.h"
#include "c3sql/schema_linking.h"
#include "c3sql/text_util.h"

namespace c3sql {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string file_stem_for(std::string_view question_id) {
  std::string out(question_id);
  for (auto& c : out) {
    if (!(text::is_identifier_char(c) || c == '.' || c == '-')) c = '_';
  }
  return out;
}

// Runs fn for each question, turning recoverable errors into failures.
// Configuration, environment and authentication problems abort the stage.
template <typename Fn>
void for_each_question(const std::vector<Question>& questions, int workers,
                       StageSummary& summary, Fn&& fn) {
  std::vector<std::optional<std::string>> errors(questions.size());
  std::vector<char> skipped(questions.size(), 0);
  parallel_for(questions.size(), workers, [&](std::size_t i) {
    try {
      skipped[i] = fn(i) ? 0 : 1;
    } catch (const AuthenticationError&) {
      throw;
    } catch (const ConfigError&) {
      throw;
    } catch (const EnvironmentError&) {
      throw;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < questions.size(); ++i) {
    if (errors[i]) {
      spdlog::warn("{} failed for {}: {}", summary.stage, questions[i].question_id, *errors[i]);
      summary.failures.push_back({questions[i].question_id, *errors[i]});
    } else if (skipped[i]) {
      ++summary.skipped;
    } else {
      ++summary.processed;
    }
  }
}

}  // namespace

bool RunSummary::has_failures() const {
  return std::any_of(stages.begin(), stages.end(),
                     [](const StageSummary& s) { return !s.failures.empty(); });
}

std::shared_ptr<ChatBackend> make_backend(const PipelineConfig& config,
                                          std::shared_ptr<ChatBackend> upstream) {
  auto live = [&]() -> std::shared_ptr<ChatBackend> {
    if (upstream) return upstream;
    const char* key = std::getenv(config.api_key_env.c_str());
    if (!key || !*key) {
      throw ConfigError("the " + std::string(to_string(config.backend)) +
                        " backend needs an API key in $" + config.api_key_env);
    }
    HttpBackendOptions options;
    options.base_url = config.api_base_url;
    options.api_key = key;
    options.max_attempts = config.max_attempts;
    return std::make_shared<HttpChatBackend>(options);
  };
  switch (config.backend) {
    case BackendKind::kLive:
      return live();
    case BackendKind::kRecord:
      return std::make_shared<RecordingBackend>(live(),
                                                std::make_shared<ResponseCache>(config.cache_dir));
    case BackendKind::kReplay:
      return std::make_shared<ReplayBackend>(std::make_shared<ResponseCache>(config.cache_dir));
  }
  throw ConfigError("unknown backend");
}

std::string render_transcript(const ChatExchange& exchange) {
  std::string out = "model=" + exchange.model_name + " n=" + std::to_string(exchange.n) +
                    " temperature=" + json(exchange.temperature).dump() +
                    " max_output_tokens=" + std::to_string(exchange.max_output_tokens) +
                    "\nfingerprint=" + request_fingerprint(exchange) + "\n";
  for (const auto& m : exchange.messages) {
    out += "\n[" + std::string(to_string(m.role)) + "]\n" + m.content + "\n";
  }
  return out;
}

Pipeline::Pipeline(PipelineConfig config, DatasetPaths paths, fs::path out_dir,
                   std::shared_ptr<ChatBackend> upstream)
    : config_(std::move(config)), paths_(std::move(paths)), out_dir_(std::move(out_dir)) {
  config_.validate();
  gateway_ = std::make_unique<LlmGateway>(make_backend(config_, std::move(upstream)),
                                          config_.max_inflight_requests);
}

void Pipeline::load_dataset() {
  if (loaded_) return;
  catalog_ = Catalog(load_spider_tables(paths_.tables, paths_.db_dir));
  questions_ = load_questions(paths_.questions);
  loaded_ = true;
}

const Question& Pipeline::question(const std::string& question_id) {
  load_dataset();
  for (const auto& q : questions_) {
    if (q.question_id == question_id) return q;
  }
  throw ConfigError("no question with id '" + question_id + "'");
}

fs::path Pipeline::link_path(const Question& q) const {
  return out_dir_ / "links" / (file_stem_for(q.question_id) + ".json");
}

SchemaView Pipeline::generation_context(const Question& q, const DatabaseSchema& schema) const {
  if (!config_.use_linking) return SchemaView::from(schema);
  auto path = link_path(q);
  if (!fs::exists(path)) {
    throw LinkingFailure("no linking artifact at " + path.string() + "; run the link stage first");
  }
  return linking_from_json(json::parse(text::read_file(path))).linked;
}

void Pipeline::write_failures(const StageSummary& summary) const {
  json failures = json::array();
  for (const auto& f : summary.failures) {
    failures.push_back({{"question_id", f.question_id}, {"message", f.message}});
  }
  text::write_file_atomic(out_dir_ / (summary.stage + "_failures.json"), failures.dump(2) + "\n");
}

StageSummary Pipeline::link(bool force) {
  load_dataset();
  StageSummary summary{"link"};
  const auto linking = config_.linking_config();
  for_each_question(questions_, config_.workers, summary, [&](std::size_t i) {
    const auto& q = questions_[i];
    auto path = link_path(q);
    if (!force && fs::exists(path)) return false;
    const auto& schema = catalog_.at(q.db_id);
    auto result = link_schema(schema, q, *gateway_, linking);
    text::write_file_atomic(path, linking_to_json(q, result).dump(2) + "\n");
    return true;
  });
  write_failures(summary);
  spdlog::info("link: {} linked, {} already present, {} failed", summary.processed,
               summary.skipped, summary.failures.size());
  return summary;
}

StageSummary Pipeline::generate() {
  load_dataset();
  StageSummary summary{"generate"};
  const auto generation = config_.generation_config();
  std::vector<std::optional<std::string>> predictions(questions_.size());
  for_each_question(questions_, config_.workers, summary, [&](std::size_t i) {
    const auto& q = questions_[i];
    const auto& schema = catalog_.at(q.db_id);
    auto vote = generate_sql(q, generation_context(q, schema), schema.sqlite_path, *gateway_,
                             generation);
    predictions[i] = vote.winner.text;
    if (config_.dump_traces) {
      text::write_file_atomic(out_dir_ / "traces" / (file_stem_for(q.question_id) + ".json"),
                              vote_trace_json(q, vote).dump(2) + "\n");
    }
    return true;
  });

  json out = json::array();
  for (std::size_t i = 0; i < questions_.size(); ++i) {
    if (predictions[i]) out.push_back({{"question_id", questions_[i].question_id}, {"sql", *predictions[i]}});
  }
  text::write_file_atomic(out_dir_ / "predictions.json", out.dump(2) + "\n");
  write_failures(summary);
  spdlog::info("generate: {} predicted, {} failed ({} LLM calls, {} prompt / {} completion tokens)",
               summary.processed, summary.failures.size(), gateway_->calls(),
               gateway_->prompt_tokens(), gateway_->completion_tokens());
  return summary;
}

StageSummary Pipeline::eval(const std::optional<fs::path>& predictions_path) {
  load_dataset();
  StageSummary summary{"eval"};
  auto path = predictions_path.value_or(out_dir_ / "predictions.json");
  json parsed;
  try {
    parsed = json::parse(text::read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
  if (!parsed.is_array()) throw ParseError(path.string() + ": expected a JSON array", 0);

  std::map<std::string, std::string> predicted;
  for (const auto& entry : parsed) {
    predicted[entry.at("question_id").get<std::string>()] = entry.at("sql").get<std::string>();
  }

  std::vector<std::string> notes;
  std::vector<EvalItem> items;
  std::vector<RecallSample> recall;
  std::set<std::string> known;
  for (const auto& q : questions_) {
    known.insert(q.question_id);
    if (!q.gold_sql) {
      notes.push_back("no gold query for " + q.question_id + "; not scored");
      continue;
    }
    const auto& schema = catalog_.at(q.db_id);
    std::optional<std::string> sql;
    if (auto it = predicted.find(q.question_id); it != predicted.end()) {
      sql = it->second;
    } else {
      notes.push_back("no prediction for " + q.question_id);
      summary.failures.push_back({q.question_id, "no prediction"});
    }
    items.push_back({q.question_id, sql, *q.gold_sql, schema.sqlite_path, q.difficulty});

    auto link_file = link_path(q);
    if (config_.use_linking && fs::exists(link_file)) {
      auto linking = linking_from_json(json::parse(text::read_file(link_file)));
      recall.push_back(
          {q.question_id, std::move(linking.scores), extract_gold_schema_items(*q.gold_sql, schema)});
    }
  }
  for (const auto& [id, sql] : predicted) {
    if (!known.count(id)) notes.push_back("prediction for unknown question " + id + " ignored");
  }

  auto records = score_items(items, config_.execution_limits(), config_.workers);
  auto report = summarize(records);
  if (recall.empty()) {
    notes.push_back("no linking artifacts; recall AUC not computed");
  } else {
    auto auc = recall_auc(recall, config_.auc_per_question ? AucPooling::kPerQuestion
                                                           : AucPooling::kPooled);
    report.table_auc = auc.table_auc;
    report.column_auc = auc.column_auc;
    notes.insert(notes.end(), auc.notes.begin(), auc.notes.end());
  }
  report.notes.insert(report.notes.end(), notes.begin(), notes.end());

  json record_json = json::array();
  for (const auto& r : records) {
    record_json.push_back({{"question_id", r.question_id},
                           {"predicted_sql", r.predicted_sql},
                           {"gold_sql", r.gold_sql},
                           {"outcome", to_string(r.outcome)},
                           {"difficulty", r.difficulty ? json(to_string(*r.difficulty)) : json()},
                           {"detail", r.detail}});
  }
  text::write_file_atomic(out_dir_ / "eval_records.json", record_json.dump(2) + "\n");
  text::write_file_atomic(out_dir_ / "report.json", render_report(report, ReportFormat::kJson));
  text::write_file_atomic(out_dir_ / "report.txt", render_report(report, ReportFormat::kText));
  summary.processed = records.size();
  write_failures(summary);
  spdlog::info("eval: EX {} over {} questions",
               report.overall.ex() ? fmt::format("{:.4f}", *report.overall.ex()) : "n/a",
               report.overall.total);
  return summary;
}

RunSummary Pipeline::run(bool force) {
  RunSummary run;
  if (config_.use_linking) run.stages.push_back(link(force));
  run.stages.push_back(generate());
  run.stages.push_back(eval());
  return run;
}

std::string Pipeline::dump_prompt(const std::string& question_id, const std::string& stage) {
  const auto& q = question(question_id);
  const auto& schema = catalog_.at(q.db_id);
  if (stage == "table") {
    return render_transcript(build_table_recall_prompt(schema, q, config_.linking_config()));
  }
  if (stage == "column") {
    // The column prompt lists every column of the linked tables.
    SchemaView candidates = SchemaView::from(schema);
    if (config_.use_linking && fs::exists(link_path(q))) {
      auto linked = generation_context(q, schema);
      SchemaView full;
      full.db_id = schema.db_id;
      for (const auto& t : linked.tables) {
        TableView view{t.name, {}};
        for (const auto& c : schema.find_table(t.name)->columns) view.columns.push_back(c.name);
        full.tables.push_back(std::move(view));
      }
      full.foreign_keys = linked.foreign_keys;
      candidates = std::move(full);
    }
    return render_transcript(build_column_recall_prompt(candidates, q, config_.linking_config()));
  }
  if (stage == "generation") {
    return render_transcript(build_generation_prompt(generation_context(q, schema), q,
                                                     config_.prompt_config(),
                                                     config_.sampling_params()));
  }
  throw ConfigError("unknown stage '" + stage + "' (expected table, column or generation)");
}

}  // namespace c3sql
