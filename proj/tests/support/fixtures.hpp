#pragma once

// Synthetic ATIS-shaped data. Counts are made up to land on 16 classes and
// 5836 queries once classes with fewer than 7 queries are dropped.

#include <array>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace fixture {

inline const std::vector<std::pair<std::string, int>>& atis_class_counts() {
  static const std::vector<std::pair<std::string, int>> counts = {
      {"atis_flight", 4549},      {"atis_airfare", 420},    {"atis_ground_service", 255},
      {"atis_airline", 157},      {"atis_abbreviation", 147}, {"atis_aircraft", 81},
      {"atis_flight_time", 54},   {"atis_quantity", 51},    {"atis_distance", 20},
      {"atis_airport", 20},       {"atis_city", 19},        {"atis_ground_fare", 18},
      {"atis_capacity", 16},      {"atis_flight_no", 12},   {"atis_meal", 9},
      {"atis_restriction", 8},
      // dropped by the small-class filter
      {"atis_cheapest", 1},       {"atis_day_name", 2},     {"atis_airfare+flight", 6},
  };
  return counts;
}

inline std::vector<std::string> atis_lines(unsigned seed = 5) {
  static const std::array<const char*, 12> words = {"show", "me", "flights", "from", "boston",
                                                    "to", "denver", "cheapest", "on", "monday",
                                                    "what", "is"};
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> len(2, 9);
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
  std::vector<std::string> lines = {"# synthetic ATIS-style fixture", ""};
  for (const auto& [label, n] : atis_class_counts()) {
    for (int i = 0; i < n; ++i) {
      std::string line = "BOS";
      for (int t = len(rng); t > 0; --t) line += std::string(" ") + words[pick(rng)];
      lines.push_back(line + " EOS " + label);
    }
  }
  return lines;
}

inline void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const auto& l : lines) out << l << '\n';
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("fewshot_" + tag + "_" + std::to_string(std::random_device{}()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixture
