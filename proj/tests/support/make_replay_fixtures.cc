// Regenerates corpus/mini/replay from the scripted completions by running
// the default pipeline with a recording backend. With --freeze the run's
// predictions and reports also replace corpus/mini/expected.

#include <cstring>
#include <iostream>
#include <memory>

#include "c3sql/pipeline.h"
#include "c3sql/text_util.h"
#include "scripted_backend.h"
#include "test_support.h"

namespace fs = std::filesystem;
using namespace c3sql;

int main(int argc, char** argv) {
  const bool freeze = argc > 1 && std::strcmp(argv[1], "--freeze") == 0;
  const auto corpus = testing::mini_corpus_dir();
  const auto replay = corpus / "replay";
  fs::remove_all(replay);
  fs::create_directories(replay);

  testing::TempDir out;
  PipelineConfig config;
  config.backend = BackendKind::kRecord;
  config.cache_dir = replay;
  config.dump_traces = true;
  auto upstream = std::make_shared<testing::ScriptedBackend>(corpus / "script.json");
  Pipeline pipeline(config, {corpus / "tables.json", corpus / "dev.json", testing::mini_db_dir()},
                    out.path(), upstream);
  auto summary = pipeline.run(false);
  for (const auto& stage : summary.stages) {
    std::cout << stage.stage << ": " << stage.processed << " done, " << stage.failures.size()
              << " failed\n";
    for (const auto& f : stage.failures) std::cout << "  " << f.question_id << ": " << f.message << "\n";
  }
  std::cout << text::read_file(out / "report.txt");
  if (summary.has_failures()) return 1;

  if (freeze) {
    const auto expected = corpus / "expected";
    fs::create_directories(expected);
    for (const char* name : {"predictions.json", "report.json", "report.txt"}) {
      fs::copy_file(out / name, expected / name, fs::copy_options::overwrite_existing);
    }
    std::cout << "froze expected outputs into " << expected << "\n";
  }
  return 0;
}
