#pragma once

#include <filesystem>
#include <random>
#include <vector>

namespace test_support {

inline std::filesystem::path source_dir() {
  return std::filesystem::path(SIMARENA_SOURCE_DIR);
}

inline std::filesystem::path templates_dir() {
  return source_dir() / "templates";
}

inline std::filesystem::path fixtures_dir() {
  return source_dir() / "fixtures";
}

inline std::filesystem::path attributes_dir() {
  return source_dir() / "attributes";
}

// Deterministic generators; all property tests share one seeded engine type.
inline std::mt19937& rng() {
  static std::mt19937 engine(0x5eed);
  return engine;
}

inline int rand_int(int lo, int hi) {
  return lo + int(rng()() % (unsigned(hi - lo) + 1u));
}

inline std::vector<double> random_int_vector(std::size_t n, int lo, int hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = double(rand_int(lo, hi));
  return v;
}

/// Random strictly increasing map applied to v: equal inputs stay equal,
/// order is preserved, gaps are randomized.
inline std::vector<double> random_monotone_transform(
    const std::vector<double>& v) {
  std::vector<double> sorted(v);
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  std::vector<double> image(sorted.size());
  double acc = double(rand_int(-50, 50));
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    acc += double(rand_int(1, 20)) / 4.0;  // strictly positive increment
    image[i] = acc;
  }

  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto it = std::lower_bound(sorted.begin(), sorted.end(), v[i]);
    out[i] = image[std::size_t(it - sorted.begin())];
  }
  return out;
}

inline bool non_constant(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] != v[0]) return true;
  return false;
}

}  // namespace test_support
