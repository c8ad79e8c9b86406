#pragma once

// Frozen regression values. A missing fixture file is written on first run
// and reported; later runs compare against it.

#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

namespace fixture {

inline void check(const std::string& name, const std::vector<double>& values, double rel_tol = 0.0) {
  const std::filesystem::path path = std::filesystem::path(SPDELAB_FIXTURE_DIR) / (name + ".txt");
  if (!std::filesystem::exists(path)) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    out << std::setprecision(17);
    for (double v : values) out << v << '\n';
    WARN("recorded new fixture " << path.string());
    return;
  }
  std::ifstream in(path);
  std::vector<double> frozen;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) frozen.push_back(std::stod(line));
  REQUIRE(frozen.size() == values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    INFO(name << "[" << i << "]");
    if (rel_tol == 0.0)
      CHECK(values[i] == frozen[i]);
    else
      CHECK(std::abs(values[i] - frozen[i]) <= rel_tol * std::max(std::abs(frozen[i]), 1e-300));
  }
}

}  // namespace fixture
