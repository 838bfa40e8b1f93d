#include "patchcraft/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "patchcraft/errors.hpp"

namespace patchcraft {

namespace {

double relative_gap(double analytic, double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace

template <typename T>
double grad_check(const std::function<BasicTensor<T>(const BasicTensor<T>&)>& f,
                  const BasicTensor<T>& x, double eps) {
  std::vector<NamedTensor<T>> inputs{{"x", x.detach()}};
  inputs[0].tensor.set_requires_grad(true);
  BasicTensor<T> leaf = inputs[0].tensor;
  return grad_check_all<T>([&] { return f(leaf); }, inputs, eps).max_relative_error;
}

template <typename T>
GradCheckReport grad_check_all(const std::function<BasicTensor<T>()>& loss,
                               std::span<NamedTensor<T>> inputs, double eps) {
  std::vector<bool> previous(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    previous[i] = inputs[i].tensor.requires_grad();
    inputs[i].tensor.set_requires_grad(true);
    inputs[i].tensor.zero_grad();
  }

  {
    Tape<T> tape;
    auto scope = tape.record();
    BasicTensor<T> value = loss();
    tape.backward(value);
  }

  GradCheckReport report;
  for (auto& input : inputs) {
    BasicTensor<T>& t = input.tensor;
    std::vector<T> analytic(t.numel(), T{0});
    if (t.has_grad()) {
      std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    }
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T original = values[i];
      values[i] = static_cast<T>(original + eps);
      const double plus = loss().item();
      values[i] = static_cast<T>(original - eps);
      const double minus = loss().item();
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double gap = relative_gap(analytic[i], numeric);
      if (!std::isfinite(gap)) {
        throw ContractError("grad_check: non-finite gradient in " + input.name);
      }
      if (report.worst_tensor.empty() || gap > report.max_relative_error) {
        report.max_relative_error = gap;
        report.worst_tensor = input.name;
        report.worst_index = i;
      }
      ++report.coordinates;
    }
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    inputs[i].tensor.zero_grad();
    inputs[i].tensor.set_requires_grad(previous[i]);
  }
  return report;
}

template double grad_check<float>(const std::function<Tensor(const Tensor&)>&, const Tensor&,
                                  double);
template double grad_check<double>(const std::function<Tensor64(const Tensor64&)>&,
                                   const Tensor64&, double);
template GradCheckReport grad_check_all<float>(const std::function<Tensor()>&,
                                               std::span<NamedTensor<float>>, double);
template GradCheckReport grad_check_all<double>(const std::function<Tensor64()>&,
                                                std::span<NamedTensor<double>>, double);

}  // namespace patchcraft
