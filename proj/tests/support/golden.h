#pragma once

// The five reference prompt scenarios, assembled through the library, and
// the frozen fixture each must match byte for byte.

#include <string>
#include <vector>

namespace c3sql::testing {

struct GoldenCase {
  std::string name;
  std::string fixture;  // file under tests/fixtures/prompts
  std::string actual;
  std::string expected;
};

std::vector<GoldenCase> golden_prompt_cases();

}  // namespace c3sql::testing
