#pragma once

#include <string>
#include <vector>

namespace ctc {

struct SelftestCase {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Quick invariant suite over small seeded assets.
std::vector<SelftestCase> run_selftest();

}  // namespace ctc
