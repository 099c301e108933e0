#pragma once

#include <vector>

namespace rsr {

// Number of k-subsets of an n-set, computed in floating point so that guard
// checks against large budgets never overflow.
inline double subset_count(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / i;
  return c;
}

// Visits every k-combination of {0,...,n-1} in lexicographic order.
// The visitor returns false to stop the walk early.
template <typename F>
void for_each_combination(int n, int k, F&& visit) {
  if (k < 0 || k > n) return;
  std::vector<int> comb(k);
  for (int i = 0; i < k; ++i) comb[i] = i;
  if (k == 0) {
    visit(static_cast<const std::vector<int>&>(comb));
    return;
  }
  while (true) {
    if (!visit(static_cast<const std::vector<int>&>(comb))) return;
    int i = k - 1;
    while (i >= 0 && comb[i] == n - k + i) --i;
    if (i < 0) return;
    ++comb[i];
    for (int j = i + 1; j < k; ++j) comb[j] = comb[j - 1] + 1;
  }
}

}  // namespace rsr
