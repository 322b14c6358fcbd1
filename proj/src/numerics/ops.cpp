#include <algorithm>
#include <cmath>
#include <string>

#include "leaffed/kernels.hpp"
#include "leaffed/tape.hpp"

namespace leaffed {
namespace {

template <typename T>
BasicTensor<T> transpose2d(const BasicTensor<T>& m) {
  const std::size_t rows = m.dim(0);
  const std::size_t cols = m.dim(1);
  BasicTensor<T> out({cols, rows});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = m[i * cols + j];
  }
  return out;
}

void require_rank(const Shape& shape, std::size_t rank, std::string_view op, std::string_view what) {
  if (shape.size() != rank) {
    throw ShapeError(std::string(op) + ": " + std::string(what) + " must have rank " +
                     std::to_string(rank) + ", got " + shape_string(shape));
  }
}

}  // namespace

namespace ops {

template <typename T>
Var dense(Tape<T>& tape, Var x, Var weight, Var bias) {
  const auto& xv = tape.value(x);
  const auto& wv = tape.value(weight);
  const auto& bv = tape.value(bias);
  require_rank(xv.shape(), 2, "dense", "input");
  require_rank(wv.shape(), 2, "dense", "weight");
  if (xv.dim(1) != wv.dim(0)) {
    throw ShapeError("dense: input " + shape_string(xv.shape()) + " incompatible with weight " +
                     shape_string(wv.shape()));
  }
  if (bv.rank() != 1 || bv.dim(0) != wv.dim(1)) {
    throw ShapeError("dense: bias " + shape_string(bv.shape()) + " incompatible with weight " +
                     shape_string(wv.shape()));
  }
  const std::size_t n = xv.dim(0), d = xv.dim(1), h = wv.dim(1);
  BasicTensor<T> out({n, h});
  for (std::size_t i = 0; i < n; ++i) std::copy(bv.raw(), bv.raw() + h, out.raw() + i * h);
  kernels::gemm(xv.raw(), wv.raw(), out.raw(), n, d, h);

  return tape.record(std::move(out), {x, weight, bias}, "dense",
                     [x, weight, bias, n, d, h](Tape<T>& t, const BasicTensor<T>& g) {
                       if (t.requires_grad(x)) {
                         const auto wt = transpose2d(t.value(weight));
                         kernels::gemm(g.raw(), wt.raw(), t.grad_buffer(x).raw(), n, h, d);
                       }
                       if (t.requires_grad(weight)) {
                         kernels::gemm_tn(t.value(x).raw(), g.raw(), t.grad_buffer(weight).raw(), n, d, h);
                       }
                       if (t.requires_grad(bias)) {
                         kernels::add_rows(g.raw(), t.grad_buffer(bias).raw(), n, h);
                       }
                     });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  const auto& xv = tape.value(x);
  BasicTensor<T> out(xv.shape());
  kernels::relu(xv.raw(), out.raw(), xv.size());
  return tape.record(std::move(out), {x}, "relu", [x](Tape<T>& t, const BasicTensor<T>& g) {
    const auto& in = t.value(x);
    kernels::relu_backward(in.raw(), g.raw(), t.grad_buffer(x).raw(), in.size());
  });
}

template <typename T>
Var concat(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  require_rank(av.shape(), 2, "concat", "left operand");
  require_rank(bv.shape(), 2, "concat", "right operand");
  if (av.dim(0) != bv.dim(0)) {
    throw ShapeError("concat: leading dimensions differ: " + shape_string(av.shape()) + " vs " +
                     shape_string(bv.shape()));
  }
  const std::size_t n = av.dim(0), da = av.dim(1), db = bv.dim(1);
  BasicTensor<T> out({n, da + db});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(av.raw() + i * da, av.raw() + (i + 1) * da, out.raw() + i * (da + db));
    std::copy(bv.raw() + i * db, bv.raw() + (i + 1) * db, out.raw() + i * (da + db) + da);
  }
  return tape.record(std::move(out), {a, b}, "concat", [a, b, n, da, db](Tape<T>& t, const BasicTensor<T>& g) {
    if (t.requires_grad(a)) {
      T* ga = t.grad_buffer(a).raw();
      for (std::size_t i = 0; i < n; ++i) kernels::add(g.raw() + i * (da + db), ga + i * da, da);
    }
    if (t.requires_grad(b) && db > 0) {
      T* gb = t.grad_buffer(b).raw();
      for (std::size_t i = 0; i < n; ++i) kernels::add(g.raw() + i * (da + db) + da, gb + i * db, db);
    }
  });
}

template <typename T>
Var repeat_vector(Tape<T>& tape, Var x, std::size_t repeats) {
  if (repeats == 0) throw ValidationError("repeat_vector: repeat count must be at least 1");
  const auto& xv = tape.value(x);
  require_rank(xv.shape(), 2, "repeat_vector", "input");
  const std::size_t n = xv.dim(0), d = xv.dim(1);
  BasicTensor<T> out({n, repeats, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < repeats; ++r) {
      std::copy(xv.raw() + i * d, xv.raw() + (i + 1) * d, out.raw() + (i * repeats + r) * d);
    }
  }
  return tape.record(std::move(out), {x}, "repeat_vector",
                     [x, n, d, repeats](Tape<T>& t, const BasicTensor<T>& g) {
                       T* gx = t.grad_buffer(x).raw();
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t r = 0; r < repeats; ++r) {
                           kernels::add(g.raw() + (i * repeats + r) * d, gx + i * d, d);
                         }
                       }
                     });
}

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape) {
  auto out = tape.value(x).reshaped(std::move(shape));
  return tape.record(std::move(out), {x}, "reshape", [x](Tape<T>& t, const BasicTensor<T>& g) {
    auto& gx = t.grad_buffer(x);
    kernels::add(g.raw(), gx.raw(), gx.size());
  });
}

namespace {

// Patch matrix (n*H*W, 9*C) for a 3x3 same-padded convolution.
template <typename T>
BasicTensor<T> im2col3x3(const BasicTensor<T>& x) {
  const std::size_t n = x.dim(0), height = x.dim(1), width = x.dim(2), ch = x.dim(3);
  BasicTensor<T> cols({n * height * width, 9 * ch});
  T* out = cols.raw();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t xx = 0; xx < width; ++xx) {
        T* row = out + ((b * height + y) * width + xx) * 9 * ch;
        for (std::size_t ky = 0; ky < 3; ++ky) {
          for (std::size_t kx = 0; kx < 3; ++kx) {
            T* dst = row + (ky * 3 + kx) * ch;
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + kx) - 1;
            if (sy < 0 || sx < 0 || sy >= static_cast<std::ptrdiff_t>(height) ||
                sx >= static_cast<std::ptrdiff_t>(width)) {
              continue;  // zero padding; cols is zero-initialized
            }
            const T* src = x.raw() + ((b * height + static_cast<std::size_t>(sy)) * width +
                                      static_cast<std::size_t>(sx)) * ch;
            std::copy(src, src + ch, dst);
          }
        }
      }
    }
  }
  return cols;
}

template <typename T>
void col2im3x3_add(const BasicTensor<T>& cols, BasicTensor<T>& gx) {
  const std::size_t n = gx.dim(0), height = gx.dim(1), width = gx.dim(2), ch = gx.dim(3);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t xx = 0; xx < width; ++xx) {
        const T* row = cols.raw() + ((b * height + y) * width + xx) * 9 * ch;
        for (std::size_t ky = 0; ky < 3; ++ky) {
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + kx) - 1;
            if (sy < 0 || sx < 0 || sy >= static_cast<std::ptrdiff_t>(height) ||
                sx >= static_cast<std::ptrdiff_t>(width)) {
              continue;
            }
            T* dst = gx.raw() + ((b * height + static_cast<std::size_t>(sy)) * width +
                                 static_cast<std::size_t>(sx)) * ch;
            kernels::add(row + (ky * 3 + kx) * ch, dst, ch);
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var conv3x3(Tape<T>& tape, Var x, Var kernel, Var bias) {
  const auto& xv = tape.value(x);
  const auto& kv = tape.value(kernel);
  const auto& bv = tape.value(bias);
  require_rank(xv.shape(), 4, "conv3x3", "input");
  require_rank(kv.shape(), 2, "conv3x3", "kernel");
  const std::size_t ch = xv.dim(3);
  if (kv.dim(0) != 9 * ch) {
    throw ShapeError("conv3x3: input " + shape_string(xv.shape()) + " incompatible with kernel " +
                     shape_string(kv.shape()));
  }
  const std::size_t filters = kv.dim(1);
  if (bv.rank() != 1 || bv.dim(0) != filters) {
    throw ShapeError("conv3x3: bias " + shape_string(bv.shape()) + " incompatible with kernel " +
                     shape_string(kv.shape()));
  }
  const std::size_t n = xv.dim(0), height = xv.dim(1), width = xv.dim(2);
  const std::size_t pixels = n * height * width;
  const auto cols = im2col3x3(xv);
  BasicTensor<T> out({n, height, width, filters});
  for (std::size_t p = 0; p < pixels; ++p) std::copy(bv.raw(), bv.raw() + filters, out.raw() + p * filters);
  kernels::gemm(cols.raw(), kv.raw(), out.raw(), pixels, 9 * ch, filters);

  return tape.record(std::move(out), {x, kernel, bias}, "conv3x3",
                     [x, kernel, bias, pixels, ch, filters](Tape<T>& t, const BasicTensor<T>& g) {
                       if (t.requires_grad(kernel)) {
                         const auto patches = im2col3x3(t.value(x));
                         kernels::gemm_tn(patches.raw(), g.raw(), t.grad_buffer(kernel).raw(), pixels,
                                          9 * ch, filters);
                       }
                       if (t.requires_grad(bias)) {
                         kernels::add_rows(g.raw(), t.grad_buffer(bias).raw(), pixels, filters);
                       }
                       if (t.requires_grad(x)) {
                         const auto kt = transpose2d(t.value(kernel));
                         BasicTensor<T> dcols({pixels, 9 * ch});
                         kernels::gemm(g.raw(), kt.raw(), dcols.raw(), pixels, filters, 9 * ch);
                         col2im3x3_add(dcols, t.grad_buffer(x));
                       }
                     });
}

template <typename T>
Var avg_pool2(Tape<T>& tape, Var x) {
  const auto& xv = tape.value(x);
  require_rank(xv.shape(), 4, "avg_pool2", "input");
  const std::size_t n = xv.dim(0), height = xv.dim(1), width = xv.dim(2), ch = xv.dim(3);
  const std::size_t oh = height / 2, ow = width / 2;
  if (oh == 0 || ow == 0) throw ShapeError("avg_pool2: input too small " + shape_string(xv.shape()));
  BasicTensor<T> out({n, oh, ow, ch});
  const T quarter = T{0.25};
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const T* p00 = xv.raw() + ((b * height + 2 * y) * width + 2 * xx) * ch;
        const T* p01 = p00 + ch;
        const T* p10 = p00 + width * ch;
        const T* p11 = p10 + ch;
        T* dst = out.raw() + ((b * oh + y) * ow + xx) * ch;
        for (std::size_t c = 0; c < ch; ++c) dst[c] = (p00[c] + p01[c] + p10[c] + p11[c]) * quarter;
      }
    }
  }
  return tape.record(std::move(out), {x}, "avg_pool2",
                     [x, n, height, width, ch, oh, ow, quarter](Tape<T>& t, const BasicTensor<T>& g) {
                       T* gx = t.grad_buffer(x).raw();
                       for (std::size_t b = 0; b < n; ++b) {
                         for (std::size_t y = 0; y < oh; ++y) {
                           for (std::size_t xx = 0; xx < ow; ++xx) {
                             const T* src = g.raw() + ((b * oh + y) * ow + xx) * ch;
                             T* q00 = gx + ((b * height + 2 * y) * width + 2 * xx) * ch;
                             T* q01 = q00 + ch;
                             T* q10 = q00 + width * ch;
                             T* q11 = q10 + ch;
                             kernels::axpy(quarter, src, q00, ch);
                             kernels::axpy(quarter, src, q01, ch);
                             kernels::axpy(quarter, src, q10, ch);
                             kernels::axpy(quarter, src, q11, ch);
                           }
                         }
                       }
                     });
}

template <typename T>
Var softmax_cross_entropy(Tape<T>& tape, Var logits, const BasicTensor<T>& onehot) {
  const auto& lv = tape.value(logits);
  require_rank(lv.shape(), 2, "softmax_cross_entropy", "logits");
  if (onehot.shape() != lv.shape()) {
    throw ShapeError("softmax_cross_entropy: logits " + shape_string(lv.shape()) + " vs targets " +
                     shape_string(onehot.shape()));
  }
  validate_onehot(onehot);
  const std::size_t n = lv.dim(0), classes = lv.dim(1);
  // Row losses accumulate in double; the probabilities are kept for backward.
  BasicTensor<T> probs({n, classes});
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = lv.raw() + i * classes;
    double peak = row[0];
    for (std::size_t c = 1; c < classes; ++c) peak = std::max(peak, static_cast<double>(row[c]));
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(static_cast<double>(row[c]) - peak);
    const double lse = peak + std::log(denom);
    for (std::size_t c = 0; c < classes; ++c) {
      const double y = static_cast<double>(onehot[i * classes + c]);
      probs[i * classes + c] = static_cast<T>(std::exp(static_cast<double>(row[c]) - lse));
      if (y != 0.0) total += y * (lse - static_cast<double>(row[c]));
    }
  }
  BasicTensor<T> loss({1}, static_cast<T>(total / static_cast<double>(n)));
  return tape.record(std::move(loss), {logits}, "softmax_cross_entropy",
                     [logits, probs = std::move(probs), onehot, n](Tape<T>& t, const BasicTensor<T>& g) {
                       auto& gl = t.grad_buffer(logits);
                       const T scale = g[0] / static_cast<T>(n);
                       for (std::size_t i = 0; i < gl.size(); ++i) {
                         gl[i] = gl[i] + (probs[i] - onehot[i]) * scale;
                       }
                     });
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  const auto& xv = tape.value(x);
  T total{0};
  for (T v : xv.data()) total += v;
  return tape.record(BasicTensor<T>({1}, total), {x}, "sum", [x](Tape<T>& t, const BasicTensor<T>& g) {
    auto& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = gx[i] + g[0];
  });
}

template <typename T>
Var dot(Tape<T>& tape, Var x, const BasicTensor<T>& coeffs) {
  const auto& xv = tape.value(x);
  if (coeffs.size() != xv.size()) {
    throw ShapeError("dot: operand " + shape_string(xv.shape()) + " vs coefficients " +
                     shape_string(coeffs.shape()));
  }
  T total{0};
  for (std::size_t i = 0; i < xv.size(); ++i) total += coeffs[i] * xv[i];
  return tape.record(BasicTensor<T>({1}, total), {x}, "dot",
                     [x, coeffs](Tape<T>& t, const BasicTensor<T>& g) {
                       kernels::axpy(g[0], coeffs.raw(), t.grad_buffer(x).raw(), coeffs.size());
                     });
}

}  // namespace ops

template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& logits) {
  require_rank(logits.shape(), 2, "softmax_rows", "logits");
  const std::size_t n = logits.dim(0), classes = logits.dim(1);
  BasicTensor<T> out(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.raw() + i * classes;
    double peak = row[0];
    for (std::size_t c = 1; c < classes; ++c) peak = std::max(peak, static_cast<double>(row[c]));
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(static_cast<double>(row[c]) - peak);
    for (std::size_t c = 0; c < classes; ++c) {
      out[i * classes + c] = static_cast<T>(std::exp(static_cast<double>(row[c]) - peak) / denom);
    }
  }
  return out;
}

template <typename T>
void validate_onehot(const BasicTensor<T>& onehot) {
  require_rank(onehot.shape(), 2, "validate_onehot", "targets");
  const std::size_t n = onehot.dim(0), classes = onehot.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t ones = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const T v = onehot[i * classes + c];
      if (v == T{1}) {
        ++ones;
      } else if (v != T{0}) {
        throw ValidationError("target row " + std::to_string(i) + " is not one-hot");
      }
    }
    if (ones != 1) throw ValidationError("target row " + std::to_string(i) + " is not one-hot");
  }
}

template <typename T>
BasicTensor<T> onehot_rows(std::span<const int> labels, std::size_t classes) {
  BasicTensor<T> out({labels.size(), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw ValidationError("label " + std::to_string(labels[i]) + " out of range for " +
                            std::to_string(classes) + " classes");
    }
    out[i * classes + static_cast<std::size_t>(labels[i])] = T{1};
  }
  return out;
}

#define LEAFFED_INSTANTIATE_OPS(T)                                                        \
  template Var ops::dense<T>(Tape<T>&, Var, Var, Var);                                    \
  template Var ops::relu<T>(Tape<T>&, Var);                                               \
  template Var ops::concat<T>(Tape<T>&, Var, Var);                                        \
  template Var ops::repeat_vector<T>(Tape<T>&, Var, std::size_t);                         \
  template Var ops::reshape<T>(Tape<T>&, Var, Shape);                                     \
  template Var ops::conv3x3<T>(Tape<T>&, Var, Var, Var);                                  \
  template Var ops::avg_pool2<T>(Tape<T>&, Var);                                          \
  template Var ops::softmax_cross_entropy<T>(Tape<T>&, Var, const BasicTensor<T>&);       \
  template Var ops::sum<T>(Tape<T>&, Var);                                                \
  template Var ops::dot<T>(Tape<T>&, Var, const BasicTensor<T>&);                         \
  template BasicTensor<T> softmax_rows<T>(const BasicTensor<T>&);                         \
  template void validate_onehot<T>(const BasicTensor<T>&);                                \
  template BasicTensor<T> onehot_rows<T>(std::span<const int>, std::size_t);

LEAFFED_INSTANTIATE_OPS(float)
LEAFFED_INSTANTIATE_OPS(double)

}  // namespace leaffed
