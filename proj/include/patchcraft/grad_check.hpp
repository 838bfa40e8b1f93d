#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "patchcraft/tensor.hpp"

namespace patchcraft {

// Largest per-coordinate gap between the taped gradient of a scalar function
// and its central difference, measured as
//   |analytic - numeric| / max(1, |analytic|, |numeric|).
// Run it on double tensors ("shadow mode") to keep difference noise far
// below the tolerance.
template <typename T>
double grad_check(const std::function<BasicTensor<T>(const BasicTensor<T>&)>& f,
                  const BasicTensor<T>& x, double eps);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

// Checks every coordinate of every listed tensor against a scalar loss that
// closes over them. Perturbations are written into the tensors and undone.
template <typename T>
GradCheckReport grad_check_all(const std::function<BasicTensor<T>()>& loss,
                               std::span<NamedTensor<T>> inputs, double eps);

}  // namespace patchcraft
