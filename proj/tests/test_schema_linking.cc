#include "c3sql/schema_linking.h"

#include <functional>
#include <random>
#include <set>

#include "c3sql/errors.h"
#include "doctest.h"
#include "scripted_backend.h"
#include "c3sql/text_util.h"
#include "test_support.h"

using namespace c3sql;

namespace {

DatabaseSchema make_schema(int tables) {
  DatabaseSchema s;
  s.db_id = "s";
  for (int i = 0; i < tables; ++i) {
    auto name = "t" + std::to_string(i);
    s.tables.push_back({name, {{"id", "number"}, {"a", "text"}, {"b", "text"}}});
  }
  if (tables >= 2) s.foreign_keys.push_back({"t1", "id", "t0", "id"});
  return s;
}

// Answers table recall and column recall prompts from two fixed lists.
class FixedBackend : public ChatBackend {
 public:
  FixedBackend(std::vector<std::string> tables, std::vector<std::string> columns)
      : tables_(std::move(tables)), columns_(std::move(columns)) {}
  ChatCompletion complete(const ChatExchange& e) override {
    ++calls;
    bool table_stage = e.messages.back().content.starts_with("Given the database schema");
    const auto& pool = table_stage ? tables_ : columns_;
    ChatCompletion out;
    for (int i = 0; i < e.n; ++i) out.texts.push_back(pool[i % pool.size()]);
    return out;
  }
  int calls = 0;

 private:
  std::vector<std::string> tables_, columns_;
};

Question q() { return {"q", "s", "How many t0?", {}, {}}; }

}  // namespace

TEST_SUITE("schema_linking") {
  TEST_CASE("table lists parse as JSON or as a loose list") {
    auto s = make_schema(6);
    CHECK(parse_table_list("Sure:\n[\"T2\", \"t0\", \"nope\", \"t2\"]", s) ==
          std::vector<std::string>{"t2", "t0"});
    CHECK(parse_table_list("[t3, 't1' , `t5`]", s) == std::vector<std::string>{"t3", "t1", "t5"});
    CHECK(parse_table_list("no list here", s).empty());
    CHECK(parse_table_list("[unclosed", s).empty());
  }

  TEST_CASE("table set vote") {
    using V = std::vector<std::vector<std::string>>;
    // Same set in a different order counts as one; the first order seen wins.
    CHECK(vote_table_sets(V{{"a", "b"}, {"c"}, {"b", "a"}}, 4) == std::vector<std::string>{"a", "b"});
    // Truncation to k happens before keying.
    CHECK(vote_table_sets(V{{"a", "b", "x"}, {"a", "b", "y"}, {"c"}}, 2) ==
          std::vector<std::string>{"a", "b"});
    // Ties go to the set seen first; empty samples are ignored.
    CHECK(vote_table_sets(V{{}, {"c"}, {"d"}}, 4) == std::vector<std::string>{"c"});
    CHECK_THROWS_AS(vote_table_sets(V{{}, {}}, 4), LinkingFailure);
  }

  TEST_CASE("column dictionary parsing") {
    SchemaView view{"s", {{"t0", {"id", "a"}}, {"t1", {"id", "b"}}}, {}};
    auto m = parse_column_dict(
        "Because...\n{\"T0\": [\"a\", \"t0.id\", \"zzz\", \"a\"], \"t9\": [\"x\"]}", view);
    REQUIRE(m.size() == 2);
    CHECK(m[0] == TableColumns{"t0", {"a", "id"}});
    CHECK(m[1] == TableColumns{"t1", {}});
    auto broken = parse_column_dict("{not json}", view);
    CHECK(broken[0].columns.empty());
  }

  TEST_CASE("column vote ranks by count, then mean position, then schema order") {
    SchemaView view{"s", {{"t", {"c0", "c1", "c2", "c3"}}, {"u", {"x", "y"}}}, {}};
    std::vector<ColumnMap> samples = {
        {{"t", {"c2", "c1"}}},
        {{"t", {"c1", "c2", "c3"}}},
        {{"t", {"c3", "c2", "c1"}}},
    };
    // c1 and c2 have 3 votes; c2 mean (1+2+2)/3 < c1 mean (2+1+3)/3. c3 has 2.
    auto voted = vote_columns(samples, view, 3);
    REQUIRE(voted.size() == 2);
    CHECK(voted[0].columns == std::vector<std::string>{"c2", "c1", "c3"});
    CHECK(voted[1].columns == std::vector<std::string>{"x", "y"});  // nobody mentioned u
  }

  TEST_CASE("small schemas skip table recall") {
    auto s = make_schema(3);
    auto backend = std::make_shared<FixedBackend>(
        std::vector<std::string>{"unused"},
        std::vector<std::string>{"{\"t0\": [\"a\"], \"t1\": [\"id\", \"b\"]}"});
    LlmGateway gateway(backend, 2);
    LinkingConfig config;
    auto r = link_schema(s, q(), gateway, config);
    CHECK(backend->calls == 1);
    CHECK(r.scores.table_scores.at("t0") == 1.0);
    CHECK(r.scores.table_scores.at("t2") == 1.0);
    CHECK(r.linked.tables.size() == 3);
    CHECK(r.linked.foreign_keys.size() == 1);
    CHECK(r.scores.column_scores.at({"t1", "b"}) == 1.0);
    CHECK(r.scores.column_scores.at({"t2", "a"}) == 0.0);
  }

  TEST_CASE("recall scores are top-k hit fractions") {
    auto s = make_schema(6);
    // 10 samples cycling over 4 answers: t0 always in top 2, t3 in 6 of 10.
    auto backend = std::make_shared<FixedBackend>(
        std::vector<std::string>{"[\"t0\", \"t3\"]", "[\"t3\", \"t0\"]", "[\"t0\", \"t1\"]",
                                 "[\"t1\", \"t0\"]"},
        std::vector<std::string>{"{}"});
    LlmGateway gateway(backend, 2);
    LinkingConfig config;
    config.k_tables = 2;
    auto r = link_schema(s, q(), gateway, config);
    CHECK(backend->calls == 2);
    CHECK(r.scores.table_scores.at("t0") == doctest::Approx(1.0));
    CHECK(r.scores.table_scores.at("t3") == doctest::Approx(0.6));
    CHECK(r.scores.table_scores.at("t1") == doctest::Approx(0.4));
    CHECK(r.scores.table_scores.at("t5") == 0.0);
    // {t0, t3} appears in samples 0,1,4,5,8,9 (6 votes) against {t0, t1} (4).
    REQUIRE(r.linked.tables.size() == 2);
    CHECK(r.linked.tables[0].name == "t0");
    CHECK(r.linked.tables[1].name == "t3");
    CHECK(r.linked.foreign_keys.empty());
    // Nothing recalled: first k_columns columns.
    CHECK(r.linked.tables[0].columns == std::vector<std::string>{"id", "a", "b"});
  }

  TEST_CASE("all-empty table recall falls back to schema order") {
    auto s = make_schema(6);
    auto backend = std::make_shared<FixedBackend>(std::vector<std::string>{"I cannot tell."},
                                                  std::vector<std::string>{"{}"});
    LlmGateway gateway(backend, 1);
    LinkingConfig config;
    auto r = link_schema(s, q(), gateway, config);
    CHECK(r.fell_back);
    CHECK_FALSE(r.note.empty());
    REQUIRE(r.linked.tables.size() == 4);
    CHECK(r.linked.tables[3].name == "t3");
    CHECK(r.linked.foreign_keys.size() == 1);
  }

  TEST_CASE("JSON round trip") {
    auto s = make_schema(3);
    auto backend = std::make_shared<FixedBackend>(std::vector<std::string>{"x"},
                                                  std::vector<std::string>{"{\"t0\": [\"b\"]}"});
    LlmGateway gateway(backend, 1);
    auto r = link_schema(s, q(), gateway, {});
    auto back = linking_from_json(linking_to_json(q(), r));
    CHECK(back.linked == r.linked);
    CHECK(back.scores.table_scores == r.scores.table_scores);
    CHECK(back.scores.column_scores == r.scores.column_scores);
    CHECK(back.fell_back == r.fell_back);
  }

  TEST_CASE("recall prompts end in the question") {
    const auto& car = testing::mini_schema("car_1");
    auto e = build_table_recall_prompt(car, q(), {});
    CHECK(e.n == 10);
    CHECK(e.messages.size() == 1);
    CHECK(e.messages[0].content.ends_with("\nQuestion:\n### How many t0?"));
  }
  TEST_CASE("table lists on the reference schemas") {
    const auto& car = testing::mini_schema("car_1");
    CHECK(parse_table_list(
              "[\"car_makers\", \"cars_data\", \"car_names\", \"model_list\", \"countries\", "
              "\"continents\"]",
              car) == std::vector<std::string>{"car_makers", "cars_data", "car_names",
                                               "model_list", "countries", "continents"});
    CHECK(parse_table_list("The most relevant is:\n[\"CARS_DATA\"]", car) ==
          std::vector<std::string>{"cars_data"});
    const auto& singer = testing::mini_schema("concert_singer");
    CHECK(parse_table_list("[\"ghost_table\", \"singer\"]", singer) ==
          std::vector<std::string>{"singer"});
  }

  TEST_CASE("table vote: majority, unanimity and ties") {
    using V = std::vector<std::vector<std::string>>;
    V samples;
    for (int i = 0; i < 4; ++i) samples.push_back({"A", "B", "C", "E"});
    for (int i = 0; i < 6; ++i) samples.push_back({"D", "C", "B", "A"});
    CHECK(vote_table_sets(samples, 4) == std::vector<std::string>{"D", "C", "B", "A"});
    CHECK(vote_table_sets(V(10, {"x", "y"}), 4) == std::vector<std::string>{"x", "y"});

    V tie;
    for (int i = 0; i < 5; ++i) {
      tie.push_back({"B", "A"});
      tie.push_back({"C"});
    }
    CHECK(vote_table_sets(tie, 4) == std::vector<std::string>{"B", "A"});
  }

  TEST_CASE("table vote agrees with brute-force counting") {
    // Sets drawn from a small pool; the oracle counts votes by canonical
    // string and breaks ties by first occurrence.
    const std::vector<std::vector<std::string>> pool = {
        {"a", "b"}, {"b", "a"}, {"a", "c"}, {"c"}, {}, {"a", "b", "c"}, {"c", "a"}};
    std::mt19937 rng(5);
    for (int round = 0; round < 2000; ++round) {
      std::vector<std::vector<std::string>> samples(1 + rng() % 10);
      for (auto& s : samples) s = pool[rng() % pool.size()];
      const int k = 1 + static_cast<int>(rng() % 3);

      std::vector<std::string> keys;
      std::map<std::string, int> votes;
      std::map<std::string, std::size_t> first_seen;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        std::vector<std::string> top(samples[i].begin(),
                                     samples[i].begin() + std::min<std::size_t>(k, samples[i].size()));
        if (top.empty()) {
          keys.push_back("");
          continue;
        }
        std::sort(top.begin(), top.end());
        std::string key;
        for (const auto& t : top) key += t + ",";
        keys.push_back(key);
        ++votes[key];
        first_seen.emplace(key, i);
      }
      if (votes.empty()) {
        CHECK_THROWS_AS(vote_table_sets(samples, k), LinkingFailure);
        continue;
      }
      std::string best;
      for (const auto& [key, count] : votes) {
        if (best.empty() || count > votes[best] ||
            (count == votes[best] && first_seen[key] < first_seen[best])) {
          best = key;
        }
      }
      const auto& winner_sample = samples[first_seen[best]];
      std::vector<std::string> expected(
          winner_sample.begin(),
          winner_sample.begin() + std::min<std::size_t>(k, winner_sample.size()));
      auto got = vote_table_sets(samples, k);
      CHECK(got == expected);

      // A strict majority set always wins.
      for (const auto& [key, count] : votes) {
        if (2 * count > static_cast<int>(samples.size())) CHECK(key == best);
      }
    }
  }

  TEST_CASE("column dictionaries on the reference schema") {
    const auto& car = testing::mini_schema("car_1");
    auto view = SchemaView::from(car);
    auto m = parse_column_dict(
        "```json\n{\"car_makers\": [\"maker\", \"id\"], \"cars_data\": [\"year\", \"id\", "
        "\"model\"]}\n```",
        view);
    auto find = [&](const std::string& t) {
      return std::find_if(m.begin(), m.end(), [&](const auto& tc) { return tc.table == t; })->columns;
    };
    CHECK(find("car_makers") == std::vector<std::string>{"maker", "id"});
    // "model" belongs to model_list and car_names, not cars_data.
    CHECK(find("cars_data") == std::vector<std::string>{"year", "id"});
    CHECK(find("countries").empty());
  }

  TEST_CASE("column vote: frequency, short tables and mean rank") {
    SchemaView view{"s", {{"t", {"p", "q", "r", "s", "u", "v", "w"}}, {"small", {"x", "y", "z"}}}, {}};
    std::vector<ColumnMap> samples;
    for (int i = 0; i < 10; ++i) {
      std::vector<std::string> cols = {"w"};
      if (i < 3) cols.push_back("v");
      samples.push_back({{"t", cols}, {"small", {"z", "y", "x"}}});
    }
    auto voted = vote_columns(samples, view, 5);
    CHECK(voted[0].columns == std::vector<std::string>{"w", "v"});
    CHECK(voted[1].columns == std::vector<std::string>{"z", "y", "x"});

    // p and q each appear in 7 of 10 samples; p has the lower mean rank.
    std::vector<ColumnMap> ranked;
    const std::vector<std::vector<std::string>> layouts = {
        {"p", "q"}, {"p", "q"}, {"p", "q"}, {"p", "q"}, {"q", "p"},
        {"r", "s", "p", "q"}, {"s", "p", "u", "q"}, {"r"}, {"s"}, {"u"}};
    for (const auto& l : layouts) ranked.push_back({{"t", l}});
    // Oracle: per column, (count, sum of 1-based positions).
    std::map<std::string, std::pair<int, int>> tally;
    for (const auto& l : layouts) {
      for (std::size_t i = 0; i < l.size(); ++i) {
        tally[l[i]].first += 1;
        tally[l[i]].second += static_cast<int>(i) + 1;
      }
    }
    CHECK(tally["p"].first == 7);
    CHECK(tally["q"].first == 7);
    CHECK(tally["p"].second < tally["q"].second);
    auto out = vote_columns(ranked, view, 2);
    CHECK(out[0].columns == std::vector<std::string>{"p", "q"});
  }

  TEST_CASE("vote output is a duplicate-free subset of the schema") {
    SchemaView view{"s", {{"t", {"a", "b", "c", "d", "e", "f", "g"}}}, {}};
    std::mt19937 rng(8);
    for (int round = 0; round < 200; ++round) {
      std::vector<ColumnMap> samples(1 + rng() % 10);
      for (auto& s : samples) {
        TableColumns tc{"t", {}};
        for (int i = 0; i < static_cast<int>(rng() % 8); ++i) {
          tc.columns.push_back(std::string(1, static_cast<char>('a' + rng() % 9)));
        }
        s.push_back(tc);
      }
      auto out = vote_columns(samples, view, 5)[0].columns;
      std::set<std::string> unique(out.begin(), out.end());
      CHECK(unique.size() == out.size());
      CHECK(out.size() <= 5);
      for (const auto& c : out) CHECK(c <= "g");
    }
  }

  TEST_CASE("recorded car_1 linking") {
    const auto& car = testing::mini_schema("car_1");
    auto backend = std::make_shared<testing::ScriptedBackend>(testing::mini_corpus_dir() / "script.json");
    LlmGateway gateway(backend, 1);
    Question question{"q06", "car_1",
                      "What is the name of the different car makers who produced a car in 1970?",
                      {}, {}};
    auto r = link_schema(car, question, gateway, {});
    REQUIRE(r.linked.tables.size() == 4);
    std::set<std::string> names;
    for (const auto& t : r.linked.tables) {
      names.insert(t.name);
      CHECK(t.columns.size() <= 5);
      for (const auto& c : t.columns) CHECK(car.find_table(t.name)->find_column(c) != nullptr);
    }
    CHECK(names == std::set<std::string>{"car_makers", "model_list", "car_names", "cars_data"});
    const std::vector<FkRelation> expected_fks = {{"model_list", "maker", "car_makers", "id"},
                                                  {"car_names", "model", "model_list", "model"},
                                                  {"cars_data", "id", "car_names", "makeid"}};
    CHECK(r.linked.foreign_keys == expected_fks);
    std::size_t columns = 0;
    for (const auto& t : car.tables) columns += t.columns.size();
    CHECK(r.scores.table_scores.size() == car.tables.size());
    CHECK(r.scores.column_scores.size() == columns);
  }

  TEST_CASE("recall prompt details") {
    const auto& car = testing::mini_schema("car_1");
    auto e = build_table_recall_prompt(car, q(), {});
    CHECK(e.messages[0].content.find("2 - Check whether you consider all the tables.") !=
          std::string::npos);

    DatabaseSchema one;
    one.db_id = "one";
    one.tables.push_back({"only", {{"x", "text"}}});
    auto p = build_table_recall_prompt(one, q(), {}).messages[0].content;
    std::size_t table_lines = 0;
    for (auto line : text::split_lines(p)) table_lines += line.starts_with("# ");
    CHECK(table_lines == 1);

    SchemaView no_fk{"s", {{"t", {"a"}}}, {}};
    auto c = build_column_recall_prompt(no_fk, q(), {}).messages[0].content;
    CHECK(c.find("Foreign keys:") == std::string::npos);
    CHECK(c.ends_with("\n### How many t0?"));
  }
}
