#include "c3sql/consistency_vote.h"

#include <algorithm>
#include <numeric>

#include "c3sql/errors.h"
#include "c3sql/text_util.h"

namespace c3sql {

using nlohmann::json;

namespace {

bool is_fence(std::string_view line) { return text::trim(line).starts_with("```"); }

bool is_sql_start(std::string_view line) {
  auto t = text::trim(line);
  return text::starts_with_keyword(t, "SELECT") || text::starts_with_keyword(t, "WITH");
}

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

std::string_view to_string(DiscardReason reason) {
  switch (reason) {
    case DiscardReason::kSqlError: return "sql_error";
    case DiscardReason::kTimeout: return "timeout";
    case DiscardReason::kUnparseable: return "unparseable";
    case DiscardReason::kRowOverflow: return "row_overflow";
  }
  return "sql_error";
}

SqlCandidate postprocess_completion(std::string_view raw, int sample_index) {
  SqlCandidate candidate;
  candidate.sample_index = sample_index;
  candidate.raw_completion = std::string(raw);

  auto lines = text::split_lines(raw);

  // Keep only the first fenced block when there is one.
  auto open = std::find_if(lines.begin(), lines.end(), is_fence);
  if (open != lines.end()) {
    auto close = std::find_if(open + 1, lines.end(), is_fence);
    lines = std::vector<std::string_view>(open + 1, close);
  }

  // Drop prose before the first line that starts a statement.
  auto first_sql = std::find_if(lines.begin(), lines.end(), is_sql_start);
  if (first_sql != lines.end()) lines.erase(lines.begin(), first_sql);

  // A blank line after the query starts usually introduces an explanation.
  std::string joined;
  for (auto line : lines) {
    auto t = text::trim(line);
    if (t.empty()) {
      if (!joined.empty()) break;
      continue;
    }
    if (!joined.empty()) joined += ' ';
    joined += t;
  }

  std::string_view body = joined;
  while (true) {
    body = text::trim_right(body);
    if (body.empty() || body.back() != ';') break;
    body.remove_suffix(1);
  }
  body = text::trim(body);

  if (body.empty()) {
    candidate.parseable = false;
    return candidate;
  }
  if (text::starts_with_keyword(body, "SELECT") || text::starts_with_keyword(body, "WITH")) {
    candidate.text = std::string(body);
  } else {
    candidate.text = "SELECT " + std::string(body);
  }
  return candidate;
}

Clustering group_outcomes(std::span<const SqlCandidate> candidates,
                          std::span<const ExecutionOutcome> outcomes) {
  Clustering result;
  std::vector<std::size_t> ok;  // positions into candidates/outcomes
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (!c.parseable) {
      result.discarded.push_back({c.sample_index, DiscardReason::kUnparseable, "empty completion"});
      continue;
    }
    const auto& o = outcomes[i];
    if (is_success(o)) {
      ok.push_back(i);
    } else if (const auto* e = std::get_if<SqlError>(&o)) {
      result.discarded.push_back({c.sample_index, DiscardReason::kSqlError, e->message});
    } else if (std::holds_alternative<TimedOut>(o)) {
      result.discarded.push_back({c.sample_index, DiscardReason::kTimeout, "timeout"});
    } else {
      result.discarded.push_back({c.sample_index, DiscardReason::kRowOverflow, describe(o)});
    }
  }

  DisjointSets sets(ok.size());
  for (std::size_t a = 0; a < ok.size(); ++a) {
    for (std::size_t b = a + 1; b < ok.size(); ++b) {
      if (sets.find(a) == sets.find(b)) continue;
      if (results_equivalent(std::get<ResultTable>(outcomes[ok[a]]),
                             std::get<ResultTable>(outcomes[ok[b]]))) {
        sets.unite(a, b);
      }
    }
  }

  std::vector<std::vector<std::size_t>> components(ok.size());
  for (std::size_t a = 0; a < ok.size(); ++a) components[sets.find(a)].push_back(ok[a]);
  for (auto& positions : components) {
    if (positions.empty()) continue;
    std::sort(positions.begin(), positions.end(), [&](std::size_t x, std::size_t y) {
      return candidates[x].sample_index < candidates[y].sample_index;
    });
    ResultCluster cluster;
    cluster.representative = std::get<ResultTable>(outcomes[positions.front()]);
    for (auto p : positions) cluster.members.push_back(candidates[p].sample_index);
    result.clusters.push_back(std::move(cluster));
  }
  std::sort(result.clusters.begin(), result.clusters.end(),
            [](const ResultCluster& x, const ResultCluster& y) {
              if (x.members.size() != y.members.size()) return x.members.size() > y.members.size();
              return x.members.front() < y.members.front();
            });
  std::sort(result.discarded.begin(), result.discarded.end(),
            [](const Discard& x, const Discard& y) { return x.sample_index < y.sample_index; });
  return result;
}

Clustering cluster_by_execution(std::span<const SqlCandidate> candidates,
                                const std::filesystem::path& db_path,
                                const ExecutionLimits& limits) {
  ReadOnlyDatabase db(db_path);
  std::vector<ExecutionOutcome> outcomes;
  outcomes.reserve(candidates.size());
  for (const auto& c : candidates) {
    outcomes.push_back(c.parseable ? db.execute(c.text, limits)
                                   : ExecutionOutcome{SqlError{"unparseable"}});
  }
  return group_outcomes(candidates, outcomes);
}

VoteResult select_final(Clustering clustering, std::span<const SqlCandidate> candidates,
                        const SqlCandidate& fallback) {
  VoteResult vote;
  vote.clusters = std::move(clustering.clusters);
  vote.discarded = std::move(clustering.discarded);
  if (vote.clusters.empty()) {
    vote.winner = fallback;
    vote.used_fallback = true;
    return vote;
  }
  int index = vote.clusters.front().members.front();
  auto it = std::find_if(candidates.begin(), candidates.end(),
                         [&](const SqlCandidate& c) { return c.sample_index == index; });
  vote.winner = it != candidates.end() ? *it : fallback;
  return vote;
}

VoteResult generate_sql(const Question& question, const SchemaView& context,
                        const std::filesystem::path& db_path, LlmGateway& gateway,
                        const GenerationConfig& config) {
  auto exchange = build_generation_prompt(context, question, config.prompt, config.sampling);
  warn_if_over_budget(exchange, config.token_budget, "question " + question.question_id);
  auto completion = gateway.complete(exchange);
  if (completion.texts.empty()) throw BackendError("generation returned no completions");

  std::vector<SqlCandidate> candidates;
  candidates.reserve(completion.texts.size());
  for (std::size_t i = 0; i < completion.texts.size(); ++i) {
    candidates.push_back(postprocess_completion(completion.texts[i], static_cast<int>(i)));
  }
  SqlCandidate fallback = candidates.front();
  if (fallback.text.empty()) fallback.text = std::string(text::trim(fallback.raw_completion));

  return select_final(cluster_by_execution(candidates, db_path, config.limits), candidates,
                      fallback);
}

json vote_trace_json(const Question& question, const VoteResult& vote) {
  json clusters = json::array();
  for (const auto& c : vote.clusters) {
    clusters.push_back({{"members", c.members},
                        {"size", c.members.size()},
                        {"result_rows", c.representative.rows.size()},
                        {"result_columns", c.representative.column_count},
                        {"order_sensitive", c.representative.order_sensitive}});
  }
  json discarded = json::array();
  for (const auto& d : vote.discarded) {
    discarded.push_back(
        {{"sample_index", d.sample_index}, {"reason", to_string(d.reason)}, {"detail", d.detail}});
  }
  return {{"question_id", question.question_id},
          {"winner", {{"sample_index", vote.winner.sample_index}, {"sql", vote.winner.text}}},
          {"used_fallback", vote.used_fallback},
          {"clusters", clusters},
          {"discarded", discarded}};
}

}  // namespace c3sql
