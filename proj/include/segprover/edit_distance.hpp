#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

namespace segprover {

/// Levenshtein distance over arbitrary token sequences (unit costs).
template <class T>
std::size_t levenshtein(std::span<const T> a, std::span<const T> b) {
  if (a.size() < b.size()) std::swap(a, b);
  if (b.empty()) return a.size();
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i + 1;
    for (std::size_t j = 0; j < b.size(); ++j) {
      std::size_t up = row[j + 1];
      row[j + 1] = a[i] == b[j] ? diag : 1 + std::min({diag, up, row[j]});
      diag = up;
    }
  }
  return row[b.size()];
}

/// Levenshtein distance divided by the longer length; 0 when both are empty.
template <class T>
double normalized_edit_distance(std::span<const T> a, std::span<const T> b) {
  std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 0.0;
  return static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

template <class T>
double normalized_edit_distance(const std::vector<T>& a, const std::vector<T>& b) {
  return normalized_edit_distance(std::span<const T>(a), std::span<const T>(b));
}

}  // namespace segprover
