#pragma once

#include "segfuse/grid.hpp"

namespace segfuse {

// Soft Jaccard coefficient of two probability maps:
//   sum(truth * pred) / (sum(truth + pred) - sum(truth * pred))
// with the convention that two all-zero maps score exactly 1. Sums are
// accumulated in double regardless of the map scalar type.
template <class T>
double jaccard_image(const Grid<T>& truth, const Grid<T>& pred);

template <class T>
double jaccard_loss(const Grid<T>& truth, const Grid<T>& pred);

// d(loss)/d(pred), elementwise; zero where the coefficient is the constant
// branch (both maps all-zero).
template <class T>
Grid<T> jaccard_loss_grad(const Grid<T>& truth, const Grid<T>& pred);

// Relative improvement over a positive baseline: (score - baseline) / baseline.
double gain(double new_score, double baseline);

}  // namespace segfuse
