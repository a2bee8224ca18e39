#pragma once

#include <functional>
#include <string>
#include <vector>

namespace knowgpt::acceptance {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  // Wall-clock limit in seconds; 0 means none.
  double budget_seconds = 0.0;
  std::function<Outcome()> run;
};

std::vector<Criterion> bandit_criteria();
std::vector<Criterion> rl_criteria();
std::vector<Criterion> pipeline_criteria();

}  // namespace knowgpt::acceptance
