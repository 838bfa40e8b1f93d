#include "patchcraft/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "patchcraft/errors.hpp"

namespace patchcraft::ops {

namespace {

// Eight independent partial sums so the loop vectorizes without reassociation flags.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) {
      acc[j] += a[i + j] * b[i + j];
    }
  }
  T total = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) {
    total += a[i] * b[i];
  }
  return total;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] += alpha * x[i];
  }
}

template <typename T>
void require_rank(const BasicTensor<T>& x, std::size_t rank, const char* op) {
  if (!x.defined() || x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + (x.defined() ? shape_string(x.shape()) : "<undefined>"));
  }
}

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluCubic = 0.044715;

}  // namespace

double gelu_value(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluScale * (x + kGeluCubic * x * x * x)));
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0);
  const std::size_t k = a.dim(1);
  const std::size_t n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dims differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  std::vector<T> c(m * n, T{0});
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      axpy(ad[i * k + p], bd + p * n, row, n);
    }
  }
  BasicTensor<T> out(Shape{m, n}, std::move(c));
  return detail::record_op(out, {&a, &b},
                           [an = a.node().get(), bn = b.node().get(), on = out.node().get(), m, k,
                            n]() {
                             const T* gc = on->grad.data();
                             if (an->requires_grad) {
                               T* ga = an->ensure_grad().data();
                               for (std::size_t i = 0; i < m; ++i) {
                                 for (std::size_t p = 0; p < k; ++p) {
                                   ga[i * k + p] += dot(gc + i * n, bn->data.data() + p * n, n);
                                 }
                               }
                             }
                             if (bn->requires_grad) {
                               T* gb = bn->ensure_grad().data();
                               for (std::size_t i = 0; i < m; ++i) {
                                 for (std::size_t p = 0; p < k; ++p) {
                                   axpy(an->data[i * k + p], gc + i * n, gb + p * n, n);
                                 }
                               }
                             }
                           });
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const std::size_t rows = x.dim(0);
  const std::size_t in = x.dim(1);
  const std::size_t out_dim = weight.dim(1);
  if (weight.dim(0) != in) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + " does not fit weight " +
                         shape_string(weight.shape()));
  }
  if (bias.numel() != out_dim) {
    throw DimensionError("linear: bias " + shape_string(bias.shape()) + " does not fit weight " +
                         shape_string(weight.shape()));
  }
  std::vector<T> y(rows * out_dim);
  const T* xd = x.data().data();
  const T* wd = weight.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = y.data() + r * out_dim;
    std::copy(bias.data().begin(), bias.data().end(), row);
    for (std::size_t i = 0; i < in; ++i) {
      axpy(xd[r * in + i], wd + i * out_dim, row, out_dim);
    }
  }
  BasicTensor<T> out(Shape{rows, out_dim}, std::move(y));
  return detail::record_op(
      out, {&x, &weight, &bias},
      [xn = x.node().get(), wn = weight.node().get(), bn = bias.node().get(),
       on = out.node().get(), rows, in, out_dim]() {
        const T* gy = on->grad.data();
        if (xn->requires_grad) {
          T* gx = xn->ensure_grad().data();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < in; ++i) {
              gx[r * in + i] += dot(gy + r * out_dim, wn->data.data() + i * out_dim, out_dim);
            }
          }
        }
        if (wn->requires_grad) {
          T* gw = wn->ensure_grad().data();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < in; ++i) {
              axpy(xn->data[r * in + i], gy + r * out_dim, gw + i * out_dim, out_dim);
            }
          }
        }
        if (bn->requires_grad) {
          T* gb = bn->ensure_grad().data();
          for (std::size_t r = 0; r < rows; ++r) {
            axpy(T{1}, gy + r * out_dim, gb, out_dim);
          }
        }
      });
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = a[i] + b[i];
  }
  BasicTensor<T> out(a.shape(), std::move(y));
  return detail::record_op(out, {&a, &b},
                           [an = a.node().get(), bn = b.node().get(), on = out.node().get()]() {
                             const std::size_t n = on->grad.size();
                             if (an->requires_grad) {
                               axpy(T{1}, on->grad.data(), an->ensure_grad().data(), n);
                             }
                             if (bn->requires_grad) {
                               axpy(T{1}, on->grad.data(), bn->ensure_grad().data(), n);
                             }
                           });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = a[i] * b[i];
  }
  BasicTensor<T> out(a.shape(), std::move(y));
  return detail::record_op(out, {&a, &b},
                           [an = a.node().get(), bn = b.node().get(), on = out.node().get()]() {
                             const std::size_t n = on->grad.size();
                             const T* g = on->grad.data();
                             if (an->requires_grad) {
                               T* ga = an->ensure_grad().data();
                               for (std::size_t i = 0; i < n; ++i) {
                                 ga[i] += g[i] * bn->data[i];
                               }
                             }
                             if (bn->requires_grad) {
                               T* gb = bn->ensure_grad().data();
                               for (std::size_t i = 0; i < n; ++i) {
                                 gb[i] += g[i] * an->data[i];
                               }
                             }
                           });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  std::vector<T> y(x.data().begin(), x.data().end());
  for (T& v : y) {
    v *= factor;
  }
  BasicTensor<T> out(x.shape(), std::move(y));
  return detail::record_op(out, {&x}, [xn = x.node().get(), on = out.node().get(), factor]() {
    axpy(factor, on->grad.data(), xn->ensure_grad().data(), on->grad.size());
  });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  double total = 0.0;
  for (T v : x.data()) {
    total += v;
  }
  auto out = BasicTensor<T>::scalar(static_cast<T>(total));
  return detail::record_op(out, {&x}, [xn = x.node().get(), on = out.node().get()]() {
    const T g = on->grad[0];
    for (T& gx : xn->ensure_grad()) {
      gx += g;
    }
  });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                         shape_string(shape));
  }
  BasicTensor<T> out(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  return detail::record_op(out, {&x}, [xn = x.node().get(), on = out.node().get()]() {
    axpy(T{1}, on->grad.data(), xn->ensure_grad().data(), on->grad.size());
  });
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                         shape_string(x.shape()));
  }
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t a = 0; a < axis; ++a) {
    outer *= x.dim(a);
  }
  for (std::size_t a = axis + 1; a < x.rank(); ++a) {
    inner *= x.dim(a);
  }
  const std::size_t len = x.dim(axis);
  std::vector<T> y(x.numel());
  const T* xd = x.data().data();
  std::vector<double> e(len);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      T peak = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < len; ++j) {
        peak = std::max(peak, xd[base + j * inner]);
      }
      double total = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        e[j] = std::exp(static_cast<double>(xd[base + j * inner] - peak));
        total += e[j];
      }
      for (std::size_t j = 0; j < len; ++j) {
        y[base + j * inner] = static_cast<T>(e[j] / total);
      }
    }
  }
  BasicTensor<T> out(x.shape(), std::move(y));
  return detail::record_op(out, {&x},
                           [xn = x.node().get(), on = out.node().get(), outer, inner, len]() {
                             const T* g = on->grad.data();
                             const T* yd = on->data.data();
                             T* gx = xn->ensure_grad().data();
                             for (std::size_t o = 0; o < outer; ++o) {
                               for (std::size_t i = 0; i < inner; ++i) {
                                 const std::size_t base = o * len * inner + i;
                                 double weighted = 0.0;
                                 for (std::size_t j = 0; j < len; ++j) {
                                   weighted += static_cast<double>(g[base + j * inner]) *
                                               yd[base + j * inner];
                                 }
                                 for (std::size_t j = 0; j < len; ++j) {
                                   const std::size_t at = base + j * inner;
                                   gx[at] += static_cast<T>(yd[at] * (g[at] - weighted));
                                 }
                               }
                             }
                           });
}

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, T eps) {
  const std::size_t width = x.shape().back();
  if (gamma.numel() != width || beta.numel() != width) {
    throw DimensionError("layer_norm: gamma " + shape_string(gamma.shape()) + " / beta " +
                         shape_string(beta.shape()) + " do not fit input " +
                         shape_string(x.shape()));
  }
  if (!(eps > T{0})) {
    throw ContractError("layer_norm: eps must be positive");
  }
  const std::size_t rows = x.numel() / width;
  std::vector<T> y(x.numel());
  std::vector<T> normalized(x.numel());
  std::vector<T> inv_std(rows);
  const T* xd = x.data().data();
  const T* gd = gamma.data().data();
  const T* bd = beta.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xd + r * width;
    double mean = 0.0;
    for (std::size_t c = 0; c < width; ++c) {
      mean += row[c];
    }
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t c = 0; c < width; ++c) {
      const double d = row[c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(width);
    const double rstd = 1.0 / std::sqrt(var + static_cast<double>(eps));
    inv_std[r] = static_cast<T>(rstd);
    for (std::size_t c = 0; c < width; ++c) {
      const T xhat = static_cast<T>((row[c] - mean) * rstd);
      normalized[r * width + c] = xhat;
      y[r * width + c] = gd[c] * xhat + bd[c];
    }
  }
  BasicTensor<T> out(x.shape(), std::move(y));
  return detail::record_op(
      out, {&x, &gamma, &beta},
      [xn = x.node().get(), gn = gamma.node().get(), bn = beta.node().get(),
       on = out.node().get(), normalized = std::move(normalized),
       inv_std = std::move(inv_std), rows, width]() {
        const T* g = on->grad.data();
        if (gn->requires_grad) {
          T* gg = gn->ensure_grad().data();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < width; ++c) {
              gg[c] += g[r * width + c] * normalized[r * width + c];
            }
          }
        }
        if (bn->requires_grad) {
          T* gb = bn->ensure_grad().data();
          for (std::size_t r = 0; r < rows; ++r) {
            axpy(T{1}, g + r * width, gb, width);
          }
        }
        if (xn->requires_grad) {
          T* gx = xn->ensure_grad().data();
          const T* gamma_d = gn->data.data();
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0;
            double mean_dx = 0.0;
            for (std::size_t c = 0; c < width; ++c) {
              const double dxhat = static_cast<double>(g[r * width + c]) * gamma_d[c];
              mean_d += dxhat;
              mean_dx += dxhat * normalized[r * width + c];
            }
            mean_d /= static_cast<double>(width);
            mean_dx /= static_cast<double>(width);
            for (std::size_t c = 0; c < width; ++c) {
              const double dxhat = static_cast<double>(g[r * width + c]) * gamma_d[c];
              gx[r * width + c] += static_cast<T>(
                  inv_std[r] * (dxhat - mean_d - normalized[r * width + c] * mean_dx));
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
  std::vector<T> y(x.numel());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = static_cast<T>(gelu_value(x[i]));
  }
  BasicTensor<T> out(x.shape(), std::move(y));
  return detail::record_op(out, {&x}, [xn = x.node().get(), on = out.node().get()]() {
    const T* g = on->grad.data();
    T* gx = xn->ensure_grad().data();
    for (std::size_t i = 0; i < on->grad.size(); ++i) {
      const double v = xn->data[i];
      const double t = std::tanh(kGeluScale * (v + kGeluCubic * v * v * v));
      const double slope =
          0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kGeluScale * (1.0 + 3.0 * kGeluCubic * v * v);
      gx[i] += static_cast<T>(g[i] * slope);
    }
  });
}

template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& x, T rate, Rng& rng) {
  if (rate < T{0} || rate >= T{1}) {
    throw ContractError("dropout: rate must lie in [0, 1)");
  }
  if (rate == T{0}) {
    return x;
  }
  const T keep_scale = T{1} / (T{1} - rate);
  std::vector<T> mask(x.numel());
  std::vector<T> y(x.numel());
  for (std::size_t i = 0; i < y.size(); ++i) {
    mask[i] = rng.bernoulli(static_cast<double>(rate)) ? T{0} : keep_scale;
    y[i] = x[i] * mask[i];
  }
  BasicTensor<T> out(x.shape(), std::move(y));
  return detail::record_op(out, {&x},
                           [xn = x.node().get(), on = out.node().get(), mask = std::move(mask)]() {
                             T* gx = xn->ensure_grad().data();
                             for (std::size_t i = 0; i < mask.size(); ++i) {
                               gx[i] += on->grad[i] * mask[i];
                             }
                           });
}

template <typename T>
BasicTensor<T> slice_rows(const BasicTensor<T>& x, std::size_t begin, std::size_t count) {
  require_rank(x, 2, "slice_rows");
  if (count == 0 || begin + count > x.dim(0)) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " +
                         shape_string(x.shape()));
  }
  const std::size_t width = x.dim(1);
  auto first = x.data().begin() + static_cast<std::ptrdiff_t>(begin * width);
  BasicTensor<T> out(Shape{count, width},
                     std::vector<T>(first, first + static_cast<std::ptrdiff_t>(count * width)));
  return detail::record_op(out, {&x},
                           [xn = x.node().get(), on = out.node().get(), begin, width]() {
                             axpy(T{1}, on->grad.data(), xn->ensure_grad().data() + begin * width,
                                  on->grad.size());
                           });
}

template <typename T>
BasicTensor<T> take_rows(const BasicTensor<T>& x, std::span<const std::size_t> rows) {
  require_rank(x, 2, "take_rows");
  if (rows.empty()) {
    throw DimensionError("take_rows: empty index list");
  }
  const std::size_t width = x.dim(1);
  std::vector<T> y(rows.size() * width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.dim(0)) {
      throw DimensionError("take_rows: row " + std::to_string(rows[i]) + " out of range for " +
                           shape_string(x.shape()));
    }
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * width), width,
                y.begin() + static_cast<std::ptrdiff_t>(i * width));
  }
  BasicTensor<T> out(Shape{rows.size(), width}, std::move(y));
  return detail::record_op(out, {&x},
                           [xn = x.node().get(), on = out.node().get(),
                            index = std::vector<std::size_t>(rows.begin(), rows.end()), width]() {
                             T* gx = xn->ensure_grad().data();
                             for (std::size_t i = 0; i < index.size(); ++i) {
                               axpy(T{1}, on->grad.data() + i * width, gx + index[i] * width,
                                    width);
                             }
                           });
}

template <typename T>
BasicTensor<T> concat_rows(std::span<const BasicTensor<T>> parts) {
  if (parts.empty()) {
    throw DimensionError("concat_rows: nothing to concatenate");
  }
  const std::size_t width = parts.front().shape().back();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_rows");
    if (p.dim(1) != width) {
      throw DimensionError("concat_rows: width mismatch " + shape_string(parts.front().shape()) +
                           " vs " + shape_string(p.shape()));
    }
    rows += p.dim(0);
  }
  std::vector<T> y;
  y.reserve(rows * width);
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(y.size());
    y.insert(y.end(), p.data().begin(), p.data().end());
  }
  BasicTensor<T> out(Shape{rows, width}, std::move(y));
  std::vector<typename Tape<T>::Node*> nodes;
  for (const auto& p : parts) {
    nodes.push_back(p.node().get());
  }
  return detail::record_op_list<T>(
      out, parts,
      [nodes = std::move(nodes), offsets = std::move(offsets), on = out.node().get()]() {
        for (std::size_t i = 0; i < nodes.size(); ++i) {
          if (nodes[i]->requires_grad) {
            axpy(T{1}, on->grad.data() + offsets[i], nodes[i]->ensure_grad().data(),
                 nodes[i]->data.size());
          }
        }
      });
}

template <typename T>
BasicTensor<T> attention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                         const BasicTensor<T>& v, std::size_t batch, std::size_t heads,
                         std::vector<T>* probabilities) {
  require_rank(q, 2, "attention");
  require_same_shape(q, k, "attention");
  require_same_shape(q, v, "attention");
  const std::size_t rows = q.dim(0);
  const std::size_t width = q.dim(1);
  if (batch == 0 || rows % batch != 0) {
    throw DimensionError("attention: " + std::to_string(rows) + " rows do not split into " +
                         std::to_string(batch) + " sequences");
  }
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("attention: width " + std::to_string(width) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  const std::size_t tokens = rows / batch;
  const std::size_t head_dim = width / heads;
  const T scale_factor = static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim)));

  std::vector<T> probs(batch * heads * tokens * tokens);
  std::vector<T> y(rows * width, T{0});
  const T* qd = q.data().data();
  const T* kd = k.data().data();
  const T* vd = v.data().data();
  std::vector<T> scores(tokens);
  std::vector<double> e(tokens);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t col = h * head_dim;
      for (std::size_t i = 0; i < tokens; ++i) {
        const T* qi = qd + (b * tokens + i) * width + col;
        T peak = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < tokens; ++j) {
          scores[j] = dot(qi, kd + (b * tokens + j) * width + col, head_dim) * scale_factor;
          peak = std::max(peak, scores[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < tokens; ++j) {
          e[j] = std::exp(static_cast<double>(scores[j] - peak));
          total += e[j];
        }
        T* p = probs.data() + ((b * heads + h) * tokens + i) * tokens;
        T* yi = y.data() + (b * tokens + i) * width + col;
        for (std::size_t j = 0; j < tokens; ++j) {
          p[j] = static_cast<T>(e[j] / total);
          axpy(p[j], vd + (b * tokens + j) * width + col, yi, head_dim);
        }
      }
    }
  }
  if (probabilities != nullptr) {
    *probabilities = probs;
  }
  BasicTensor<T> out(Shape{rows, width}, std::move(y));
  return detail::record_op(
      out, {&q, &k, &v},
      [qn = q.node().get(), kn = k.node().get(), vn = v.node().get(), on = out.node().get(),
       probs = std::move(probs), batch, heads, tokens, width, head_dim, scale_factor]() {
        const T* g = on->grad.data();
        const T* qd = qn->data.data();
        const T* kd = kn->data.data();
        const T* vd = vn->data.data();
        // Scratch buffers stand in for inputs that do not need gradients.
        std::vector<T> scratch_q;
        std::vector<T> scratch_k;
        std::vector<T> scratch_v;
        auto target = [](detail::TensorNode<T>* node, std::vector<T>& scratch) {
          if (node->requires_grad) {
            return node->ensure_grad().data();
          }
          scratch.assign(node->data.size(), T{0});
          return scratch.data();
        };
        T* gq = target(qn, scratch_q);
        T* gk = target(kn, scratch_k);
        T* gv = target(vn, scratch_v);
        std::vector<T> dscore(tokens);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t col = h * head_dim;
            for (std::size_t i = 0; i < tokens; ++i) {
              const std::size_t qi = (b * tokens + i) * width + col;
              const T* gi = g + qi;
              const T* p = probs.data() + ((b * heads + h) * tokens + i) * tokens;
              double weighted = 0.0;
              for (std::size_t j = 0; j < tokens; ++j) {
                const std::size_t vj = (b * tokens + j) * width + col;
                dscore[j] = dot(gi, vd + vj, head_dim);
                weighted += static_cast<double>(p[j]) * dscore[j];
                axpy(p[j], gi, gv + vj, head_dim);
              }
              for (std::size_t j = 0; j < tokens; ++j) {
                const std::size_t kj = (b * tokens + j) * width + col;
                const T ds = static_cast<T>(p[j] * (dscore[j] - weighted)) * scale_factor;
                axpy(ds, kd + kj, gq + qi, head_dim);
                axpy(ds, qd + qi, gk + kj, head_dim);
              }
            }
          }
        }
      });
}

#define PATCHCRAFT_INSTANTIATE_OPS(T)                                                        \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);              \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&,               \
                                 const BasicTensor<T>&);                                     \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                 \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                 \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                   \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                        \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                             \
  template BasicTensor<T> softmax(const BasicTensor<T>&, std::size_t);                       \
  template BasicTensor<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&,           \
                                     const BasicTensor<T>&, T);                              \
  template BasicTensor<T> gelu(const BasicTensor<T>&);                                       \
  template BasicTensor<T> dropout(const BasicTensor<T>&, T, Rng&);                           \
  template BasicTensor<T> slice_rows(const BasicTensor<T>&, std::size_t, std::size_t);       \
  template BasicTensor<T> take_rows(const BasicTensor<T>&, std::span<const std::size_t>);    \
  template BasicTensor<T> concat_rows(std::span<const BasicTensor<T>>);                      \
  template BasicTensor<T> attention(const BasicTensor<T>&, const BasicTensor<T>&,            \
                                    const BasicTensor<T>&, std::size_t, std::size_t,         \
                                    std::vector<T>*);

PATCHCRAFT_INSTANTIATE_OPS(float)
PATCHCRAFT_INSTANTIATE_OPS(double)

#undef PATCHCRAFT_INSTANTIATE_OPS

}  // namespace patchcraft::ops
