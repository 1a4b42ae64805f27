#include "segfuse/jaccard.hpp"

#include <cmath>
#include <string>

namespace segfuse {

namespace {

template <class T>
void check_pair(const Grid<T>& truth, const Grid<T>& pred) {
  if (!truth.same_shape(pred))
    throw Error("jaccard: shape mismatch " + std::to_string(truth.h) + "x" +
                std::to_string(truth.w) + " vs " + std::to_string(pred.h) + "x" +
                std::to_string(pred.w));
  for (const T& x : truth.v)
    if (!std::isfinite(double(x))) throw Error("jaccard: non-finite value in truth map");
  for (const T& x : pred.v)
    if (!std::isfinite(double(x))) throw Error("jaccard: non-finite value in predicted map");
}

template <class T>
void sums(const Grid<T>& truth, const Grid<T>& pred, double& inter, double& uni) {
  double prod = 0.0, add = 0.0;
  for (size_t i = 0; i < truth.v.size(); ++i) {
    double a = double(truth.v[i]), b = double(pred.v[i]);
    prod += a * b;
    add += a + b;
  }
  inter = prod;
  uni = add - prod;
}

}  // namespace

template <class T>
double jaccard_image(const Grid<T>& truth, const Grid<T>& pred) {
  check_pair(truth, pred);
  double inter, uni;
  sums(truth, pred, inter, uni);
  if (uni == 0.0) return 1.0;  // J(0,0) = 1 by convention
  return inter / uni;
}

template <class T>
double jaccard_loss(const Grid<T>& truth, const Grid<T>& pred) {
  return 1.0 - jaccard_image(truth, pred);
}

template <class T>
Grid<T> jaccard_loss_grad(const Grid<T>& truth, const Grid<T>& pred) {
  check_pair(truth, pred);
  double inter, uni;
  sums(truth, pred, inter, uni);
  Grid<T> grad(truth.h, truth.w, T(0));
  if (uni == 0.0) return grad;  // constant branch
  // dJ/dp_k = (t_k * U - I * (1 - t_k)) / U^2; loss is 1 - J.
  double inv_u2 = 1.0 / (uni * uni);
  for (size_t i = 0; i < grad.v.size(); ++i) {
    double t = double(truth.v[i]);
    grad.v[i] = T(-(t * uni - inter * (1.0 - t)) * inv_u2);
  }
  return grad;
}

template double jaccard_image(const Grid<float>&, const Grid<float>&);
template double jaccard_image(const Grid<double>&, const Grid<double>&);
template double jaccard_loss(const Grid<float>&, const Grid<float>&);
template double jaccard_loss(const Grid<double>&, const Grid<double>&);
template Grid<float> jaccard_loss_grad(const Grid<float>&, const Grid<float>&);
template Grid<double> jaccard_loss_grad(const Grid<double>&, const Grid<double>&);

double gain(double new_score, double baseline) {
  if (!(baseline > 0.0))
    throw Error("gain: baseline must be positive (got " + std::to_string(baseline) + ")");
  return (new_score - baseline) / baseline;
}

}  // namespace segfuse
