#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace scan::suites {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  bool quick;  // part of the `check` command
  std::function<Outcome()> run;
};

const std::vector<Criterion>& acceptance_criteria();

// Runs the selected criteria, printing one `PASS`/`FAIL` line each. Returns
// the number of failures.
int run_criteria(const std::vector<Criterion>& selected, std::ostream& out);

}  // namespace scan::suites
