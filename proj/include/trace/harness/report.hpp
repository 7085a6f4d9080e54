#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace trace::harness {

struct Report {
  nlohmann::ordered_json summary;
  std::vector<std::string> gaps;  // expected streams that are missing
  std::size_t long_rows = 0;
};

/// Reads a finished run and writes report/long.csv (step,metric,layer,label,seed,value)
/// and report/summary.json. The manifest must verify.
Report emit_report(const std::filesystem::path& run_dir);

}  // namespace trace::harness
