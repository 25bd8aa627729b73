#include "c3sql/pipeline.h"

#include <cstdlib>
#include <map>

#include "c3sql/errors.h"
#include "c3sql/evaluation.h"
#include "c3sql/text_util.h"
#include "doctest.h"
#include "json.hpp"
#include "scripted_backend.h"
#include "test_support.h"

using namespace c3sql;
namespace fs = std::filesystem;

namespace {

DatasetPaths mini_paths() {
  return {testing::mini_corpus_dir() / "tables.json", testing::mini_corpus_dir() / "dev.json",
          testing::mini_db_dir()};
}

std::shared_ptr<testing::ScriptedBackend> scripted() {
  return std::make_shared<testing::ScriptedBackend>(testing::mini_corpus_dir() / "script.json");
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(text::read_file(p)); }

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("defaults") {
    PipelineConfig c;
    CHECK(c.model_name == "gpt-3.5-turbo-0301");
    CHECK(c.temperature == 1.0);
    CHECK(c.n_samples == 20);
    CHECK(c.recall_samples == 10);
    CHECK(c.k_tables == 4);
    CHECK(c.k_columns == 5);
    CHECK(c.exec_timeout_ms == 5000);
    CHECK(c.max_inflight_requests == 4);
    CHECK(c.use_calibration);
    CHECK(c.use_linking);
    CHECK(c.use_self_consistency);
    CHECK(c.use_foreign_keys);
    CHECK(c.layout == PromptLayout::kClear);
    CHECK(c.backend == BackendKind::kReplay);
    CHECK_NOTHROW(c.validate());
  }

  TEST_CASE("file, then environment, then explicit settings") {
    testing::TempDir dir;
    text::write_file_atomic(dir / "c.conf",
                            "# comment\nn_samples = 5\nworkers=3\n\nk-tables = 2\n");
    PipelineConfig c;
    apply_config_file(c, dir / "c.conf");
    std::map<std::string, std::string> env = {{"C3SQL_N_SAMPLES", "7"}, {"C3SQL_WORKERS", "6"}};
    apply_environment(c, [&](const char* name) -> const char* {
      auto it = env.find(name);
      return it == env.end() ? nullptr : it->second.c_str();
    });
    apply_setting(c, "n_samples", "9");
    CHECK(c.n_samples == 9);
    CHECK(c.workers == 6);
    CHECK(c.k_tables == 2);

    CHECK_THROWS_AS(apply_setting(c, "bogus", "1"), ConfigError);
    CHECK_THROWS_AS(apply_setting(c, "n_samples", "many"), ConfigError);
    CHECK_THROWS_AS(apply_setting(c, "use_linking", "perhaps"), ConfigError);
    apply_setting(c, "use_linking", "off");
    CHECK_FALSE(c.use_linking);

    text::write_file_atomic(dir / "bad.conf", "n_samples = 5\nnot a setting\n");
    try {
      apply_config_file(c, dir / "bad.conf");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("bad.conf:2") != std::string::npos);
    }
  }

  TEST_CASE("validation") {
    PipelineConfig c;
    c.n_samples = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.layout = PromptLayout::kComplicated;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.use_linking = false;
    CHECK_NOTHROW(c.validate());

    c = {};
    c.use_self_consistency = false;
    CHECK(c.effective_n_samples() == 1);
    CHECK(c.sampling_params().n == 1);

    c = {};
    c.backend = BackendKind::kLive;
    c.api_key_env = "C3SQL_TEST_KEY_THAT_IS_NOT_SET";
    CHECK_THROWS_AS(Pipeline(c, mini_paths(), "unused"), ConfigError);
    c.backend = BackendKind::kRecord;
    CHECK_THROWS_AS(Pipeline(c, mini_paths(), "unused"), ConfigError);
  }

  TEST_CASE("backend calls stay under the in-flight bound") {
    testing::TempDir out;
    auto counting = std::make_shared<testing::CountingBackend>(" 1", 10);
    PipelineConfig c;
    c.backend = BackendKind::kLive;
    c.use_linking = false;
    c.max_inflight_requests = 2;
    c.workers = 6;
    Pipeline p(c, mini_paths(), out.path(), counting);
    auto s = p.generate();
    CHECK(s.failures.empty());
    CHECK(counting->calls() == 12);
    CHECK(counting->max_concurrent() <= 2);
    CHECK(counting->max_concurrent() >= 1);
  }

  TEST_CASE("linking resumes from existing artifacts") {
    testing::TempDir out, cache;
    auto upstream = scripted();
    PipelineConfig c;
    c.backend = BackendKind::kRecord;
    c.cache_dir = cache.path();
    {
      Pipeline p(c, mini_paths(), out.path(), upstream);
      auto s = p.link(false);
      CHECK(s.failures.empty());
      CHECK(s.processed == 12);
    }
    const int first = upstream->calls();
    CHECK(first > 0);
    {
      Pipeline p(c, mini_paths(), out.path(), upstream);
      auto s = p.link(false);
      CHECK(s.skipped == 12);
      CHECK(s.processed == 0);
    }
    CHECK(upstream->calls() == first);
    {
      // Forced relinking is served by the cache.
      Pipeline p(c, mini_paths(), out.path(), upstream);
      CHECK(p.link(true).processed == 12);
      CHECK(p.gateway().calls() > 0);
    }
    CHECK(upstream->calls() == first);
    auto link = read_json(out / "links" / "q06.json");
    CHECK(link["db_id"] == "car_1");
    CHECK(link["linked"]["tables"].size() <= 4);
  }

  TEST_CASE("replay misses become per-question failures") {
    testing::TempDir out, cache;
    PipelineConfig c;
    c.cache_dir = cache.path();
    c.use_linking = false;
    Pipeline p(c, mini_paths(), out.path());
    auto s = p.generate();
    REQUIRE(s.failures.size() == 12);
    CHECK(s.failures[0].message.find("fingerprint") != std::string::npos);
    CHECK(read_json(out / "predictions.json").empty());
    CHECK(read_json(out / "generate_failures.json").size() == 12);

    auto e = p.eval();
    CHECK(e.failures.size() == 12);
    auto report = read_json(out / "report.json");
    CHECK(report["overall"]["ex"] == 0.0);
    CHECK(report["counts"]["mismatch"] == 12);
  }

  TEST_CASE("generation without linking artifacts fails per question") {
    testing::TempDir out;
    PipelineConfig c;
    c.backend = BackendKind::kLive;
    Pipeline p(c, mini_paths(), out.path(), scripted());
    auto s = p.generate();
    REQUIRE(s.failures.size() == 12);
    CHECK(s.failures[0].message.find("link stage") != std::string::npos);
  }

  TEST_CASE("an empty dataset gives an empty report") {
    testing::TempDir out, data;
    text::write_file_atomic(data / "dev.json", "[]");
    PipelineConfig c;
    c.backend = BackendKind::kLive;
    Pipeline p(c, {testing::mini_corpus_dir() / "tables.json", data / "dev.json",
                   testing::mini_db_dir()},
               out.path(), scripted());
    auto r = p.run(false);
    CHECK_FALSE(r.has_failures());
    auto report = read_json(out / "report.json");
    CHECK(report["overall"]["total"] == 0);
    CHECK(report["overall"]["ex"].is_null());
  }

  TEST_CASE("eval handles stray and malformed predictions") {
    testing::TempDir out;
    PipelineConfig c;
    c.use_linking = false;
    Pipeline p(c, mini_paths(), out.path());
    text::write_file_atomic(out / "bad.json", "[{\"question_id\": ");
    CHECK_THROWS_AS(p.eval(out / "bad.json"), ParseError);

    auto questions = load_questions(mini_paths().questions);
    nlohmann::json preds = nlohmann::json::array();
    for (const auto& q : questions) preds.push_back({{"question_id", q.question_id}, {"sql", *q.gold_sql}});
    preds.push_back({{"question_id", "zzz"}, {"sql", "SELECT 1"}});
    text::write_file_atomic(out / "gold.json", preds.dump());
    auto s = p.eval(out / "gold.json");
    CHECK(s.failures.empty());
    auto report = read_json(out / "report.json");
    CHECK(report["overall"]["ex"] == 1.0);
    bool noted = false;
    for (const auto& n : report["notes"]) noted |= n.get<std::string>().find("zzz") != std::string::npos;
    CHECK(noted);
    CHECK(read_json(out / "eval_records.json").size() == 12);
  }

  TEST_CASE("prompt dumps") {
    testing::TempDir out;
    PipelineConfig c;
    c.use_linking = false;
    Pipeline p(c, mini_paths(), out.path());
    auto g = p.dump_prompt("q01", "generation");
    CHECK(g.starts_with("model=gpt-3.5-turbo-0301 n=20 temperature=1.0 max_output_tokens=512\n"));
    CHECK(g.find("\n[system]\n") != std::string::npos);
    CHECK(g.find("# singer_in_concert.singer_id = singer.singer_id") != std::string::npos);
    CHECK(p.dump_prompt("q05", "table").find("\n[user]\nGiven the database schema") !=
          std::string::npos);
    CHECK_THROWS_AS(p.dump_prompt("q01", "other"), ConfigError);
    CHECK_THROWS_AS(p.dump_prompt("nope", "generation"), ConfigError);
  }
  TEST_CASE("replay run matches the frozen outputs and the AUC oracle") {
    testing::TempDir out;
    PipelineConfig c;
    c.cache_dir = testing::mini_corpus_dir() / "replay";
    c.dump_traces = true;
    Pipeline p(c, mini_paths(), out.path());
    auto r = p.run(false);
    CHECK_FALSE(r.has_failures());
    for (const char* name : {"predictions.json", "report.json", "report.txt"}) {
      CAPTURE(name);
      CHECK(text::read_file(out / name) ==
            text::read_file(testing::mini_corpus_dir() / "expected" / name));
    }
    auto questions = load_questions(mini_paths().questions);
    std::size_t link_files = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(out / "links")) ++link_files;
    CHECK(link_files == questions.size());
    CHECK(fs::exists(out / "traces" / "q11.json"));

    // Pooled table AUC recomputed pair by pair from the link artifacts.
    std::vector<double> pos, neg;
    for (const auto& q : questions) {
      auto link = read_json(out / "links" / (q.question_id + ".json"));
      auto gold = extract_gold_schema_items(*q.gold_sql, testing::mini_schema(q.db_id));
      for (const auto& entry : link["scores"]["tables"]) {
        auto name = entry["table"].get<std::string>();
        (gold.tables.count(name) ? pos : neg).push_back(entry["score"].get<double>());
      }
    }
    double wins = 0.0;
    for (double a : pos) {
      for (double b : neg) wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
    }
    auto report = read_json(out / "report.json");
    CHECK(report["table_auc"].get<double>() == wins / (pos.size() * neg.size()));
  }
}
