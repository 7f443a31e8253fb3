#include <iostream>

#include "scan/check/suites.hpp"

int main() {
  const int failures = scan::suites::run_criteria(scan::suites::acceptance_criteria(), std::cout);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
