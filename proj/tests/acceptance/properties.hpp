#pragma once

#include <string>
#include <vector>

namespace acceptance {

struct PropertyResult {
  std::string name;
  bool ok = true;
  std::string detail;
};

std::vector<PropertyResult> run_property_suites();

}  // namespace acceptance
