// AVX2 variants. Compiled with -mavx2 and without FMA so each lane performs
// the same rounded multiply and add sequence as the scalar reference.

#include "backends.hpp"

#if defined(LEAFFED_HAVE_AVX2_KERNELS)

#include <immintrin.h>

#include <cmath>

namespace leaffed::kernels::detail {
namespace {

struct F32 {
  using T = float;
  using V = __m256;
  static constexpr std::size_t width = 8;
  static V load(const T* p) { return _mm256_loadu_ps(p); }
  static void store(T* p, V v) { _mm256_storeu_ps(p, v); }
  static V set1(T x) { return _mm256_set1_ps(x); }
  static V zero() { return _mm256_setzero_ps(); }
  static V add(V a, V b) { return _mm256_add_ps(a, b); }
  static V sub(V a, V b) { return _mm256_sub_ps(a, b); }
  static V mul(V a, V b) { return _mm256_mul_ps(a, b); }
  static V div(V a, V b) { return _mm256_div_ps(a, b); }
  static V sqrt(V a) { return _mm256_sqrt_ps(a); }
  static V positive_mask(V a) { return _mm256_cmp_ps(a, zero(), _CMP_GT_OQ); }
  static V select_masked(V mask, V a) { return _mm256_and_ps(mask, a); }
};

struct F64 {
  using T = double;
  using V = __m256d;
  static constexpr std::size_t width = 4;
  static V load(const T* p) { return _mm256_loadu_pd(p); }
  static void store(T* p, V v) { _mm256_storeu_pd(p, v); }
  static V set1(T x) { return _mm256_set1_pd(x); }
  static V zero() { return _mm256_setzero_pd(); }
  static V add(V a, V b) { return _mm256_add_pd(a, b); }
  static V sub(V a, V b) { return _mm256_sub_pd(a, b); }
  static V mul(V a, V b) { return _mm256_mul_pd(a, b); }
  static V div(V a, V b) { return _mm256_div_pd(a, b); }
  static V sqrt(V a) { return _mm256_sqrt_pd(a); }
  static V positive_mask(V a) { return _mm256_cmp_pd(a, zero(), _CMP_GT_OQ); }
  static V select_masked(V mask, V a) { return _mm256_and_pd(mask, a); }
};

// c[row, j0..] accumulates a_col[p] * b[p, j0..] over p ascending. Four
// registers per step keep the column block resident across the p loop.
template <typename S>
void gemm(const typename S::T* a, const typename S::T* b, typename S::T* c, std::size_t n,
          std::size_t k, std::size_t m) {
  using T = typename S::T;
  constexpr std::size_t w = S::width;
  for (std::size_t i = 0; i < n; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * m;
    std::size_t j = 0;
    for (; j + 4 * w <= m; j += 4 * w) {
      auto c0 = S::load(crow + j);
      auto c1 = S::load(crow + j + w);
      auto c2 = S::load(crow + j + 2 * w);
      auto c3 = S::load(crow + j + 3 * w);
      for (std::size_t p = 0; p < k; ++p) {
        const auto av = S::set1(arow[p]);
        const T* brow = b + p * m + j;
        c0 = S::add(c0, S::mul(av, S::load(brow)));
        c1 = S::add(c1, S::mul(av, S::load(brow + w)));
        c2 = S::add(c2, S::mul(av, S::load(brow + 2 * w)));
        c3 = S::add(c3, S::mul(av, S::load(brow + 3 * w)));
      }
      S::store(crow + j, c0);
      S::store(crow + j + w, c1);
      S::store(crow + j + 2 * w, c2);
      S::store(crow + j + 3 * w, c3);
    }
    for (; j + w <= m; j += w) {
      auto acc = S::load(crow + j);
      for (std::size_t p = 0; p < k; ++p) {
        acc = S::add(acc, S::mul(S::set1(arow[p]), S::load(b + p * m + j)));
      }
      S::store(crow + j, acc);
    }
    for (; j < m; ++j) {
      T acc = crow[j];
      for (std::size_t p = 0; p < k; ++p) acc = acc + arow[p] * b[p * m + j];
      crow[j] = acc;
    }
  }
}

template <typename S>
void gemm_tn(const typename S::T* a, const typename S::T* b, typename S::T* c, std::size_t n,
             std::size_t k, std::size_t m) {
  using T = typename S::T;
  constexpr std::size_t w = S::width;
  for (std::size_t p = 0; p < k; ++p) {
    T* crow = c + p * m;
    std::size_t j = 0;
    for (; j + 2 * w <= m; j += 2 * w) {
      auto c0 = S::load(crow + j);
      auto c1 = S::load(crow + j + w);
      for (std::size_t i = 0; i < n; ++i) {
        const auto av = S::set1(a[i * k + p]);
        const T* brow = b + i * m + j;
        c0 = S::add(c0, S::mul(av, S::load(brow)));
        c1 = S::add(c1, S::mul(av, S::load(brow + w)));
      }
      S::store(crow + j, c0);
      S::store(crow + j + w, c1);
    }
    for (; j + w <= m; j += w) {
      auto acc = S::load(crow + j);
      for (std::size_t i = 0; i < n; ++i) {
        acc = S::add(acc, S::mul(S::set1(a[i * k + p]), S::load(b + i * m + j)));
      }
      S::store(crow + j, acc);
    }
    for (; j < m; ++j) {
      T acc = crow[j];
      for (std::size_t i = 0; i < n; ++i) acc = acc + a[i * k + p] * b[i * m + j];
      crow[j] = acc;
    }
  }
}

template <typename S>
void add_rows(const typename S::T* a, typename S::T* out, std::size_t n, std::size_t m) {
  using T = typename S::T;
  constexpr std::size_t w = S::width;
  std::size_t j = 0;
  for (; j + w <= m; j += w) {
    auto acc = S::load(out + j);
    for (std::size_t i = 0; i < n; ++i) acc = S::add(acc, S::load(a + i * m + j));
    S::store(out + j, acc);
  }
  for (; j < m; ++j) {
    T acc = out[j];
    for (std::size_t i = 0; i < n; ++i) acc = acc + a[i * m + j];
    out[j] = acc;
  }
}

template <typename S>
void add(const typename S::T* x, typename S::T* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + S::width <= n; i += S::width) S::store(y + i, S::add(S::load(y + i), S::load(x + i)));
  for (; i < n; ++i) y[i] = y[i] + x[i];
}

template <typename S>
void axpy(typename S::T alpha, const typename S::T* x, typename S::T* y, std::size_t n) {
  const auto av = S::set1(alpha);
  std::size_t i = 0;
  for (; i + S::width <= n; i += S::width) {
    S::store(y + i, S::add(S::load(y + i), S::mul(av, S::load(x + i))));
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

template <typename S>
void relu(const typename S::T* x, typename S::T* y, std::size_t n) {
  using T = typename S::T;
  std::size_t i = 0;
  for (; i + S::width <= n; i += S::width) {
    const auto v = S::load(x + i);
    S::store(y + i, S::select_masked(S::positive_mask(v), v));
  }
  for (; i < n; ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
}

template <typename S>
void relu_backward(const typename S::T* x, const typename S::T* gy, typename S::T* gx,
                   std::size_t n) {
  using T = typename S::T;
  std::size_t i = 0;
  for (; i + S::width <= n; i += S::width) {
    const auto mask = S::positive_mask(S::load(x + i));
    S::store(gx + i, S::add(S::load(gx + i), S::select_masked(mask, S::load(gy + i))));
  }
  for (; i < n; ++i) gx[i] = gx[i] + (x[i] > T{0} ? gy[i] : T{0});
}

template <typename S>
void sgd_update(typename S::T* p, const typename S::T* g, typename S::T lr, std::size_t n) {
  const auto lv = S::set1(lr);
  std::size_t i = 0;
  for (; i + S::width <= n; i += S::width) {
    S::store(p + i, S::sub(S::load(p + i), S::mul(lv, S::load(g + i))));
  }
  for (; i < n; ++i) p[i] = p[i] - lr * g[i];
}

template <typename S>
void adam_update(typename S::T* p, const typename S::T* g, typename S::T* m, typename S::T* v,
                 const AdamCoefficients<typename S::T>& c, std::size_t n) {
  using T = typename S::T;
  const auto b1 = S::set1(c.beta1);
  const auto omb1 = S::set1(c.one_minus_beta1);
  const auto b2 = S::set1(c.beta2);
  const auto omb2 = S::set1(c.one_minus_beta2);
  const auto bc1 = S::set1(c.bias_correction1);
  const auto bc2 = S::set1(c.bias_correction2);
  const auto lr = S::set1(c.learning_rate);
  const auto eps = S::set1(c.epsilon);
  std::size_t i = 0;
  for (; i + S::width <= n; i += S::width) {
    const auto gi = S::load(g + i);
    const auto mi = S::add(S::mul(b1, S::load(m + i)), S::mul(omb1, gi));
    const auto vi = S::add(S::mul(b2, S::load(v + i)), S::mul(omb2, S::mul(gi, gi)));
    S::store(m + i, mi);
    S::store(v + i, vi);
    const auto m_hat = S::div(mi, bc1);
    const auto v_hat = S::div(vi, bc2);
    const auto step = S::mul(lr, S::div(m_hat, S::add(S::sqrt(v_hat), eps)));
    S::store(p + i, S::sub(S::load(p + i), step));
  }
  for (; i < n; ++i) {
    const T gi = g[i];
    m[i] = c.beta1 * m[i] + c.one_minus_beta1 * gi;
    v[i] = c.beta2 * v[i] + c.one_minus_beta2 * (gi * gi);
    const T m_hat = m[i] / c.bias_correction1;
    const T v_hat = v[i] / c.bias_correction2;
    p[i] = p[i] - c.learning_rate * (m_hat / (std::sqrt(v_hat) + c.epsilon));
  }
}

void accumulate_scaled_f32(const float* x, double w, double* acc, std::size_t n) {
  const auto wv = _mm256_set1_pd(w);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const auto xd = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
    _mm256_storeu_pd(acc + i, _mm256_add_pd(_mm256_loadu_pd(acc + i), _mm256_mul_pd(wv, xd)));
  }
  for (; i < n; ++i) acc[i] = acc[i] + w * static_cast<double>(x[i]);
}

void accumulate_scaled_f64(const double* x, double w, double* acc, std::size_t n) {
  const auto wv = _mm256_set1_pd(w);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(acc + i,
                     _mm256_add_pd(_mm256_loadu_pd(acc + i), _mm256_mul_pd(wv, _mm256_loadu_pd(x + i))));
  }
  for (; i < n; ++i) acc[i] = acc[i] + w * x[i];
}

template <typename S>
KernelSet<typename S::T> make_set(void (*scaled)(const typename S::T*, double, double*, std::size_t)) {
  return KernelSet<typename S::T>{&gemm<S>,       &gemm_tn<S>,       &add_rows<S>,
                                  &add<S>,        &axpy<S>,          &relu<S>,
                                  &relu_backward<S>, &sgd_update<S>, &adam_update<S>,
                                  scaled};
}

}  // namespace

BackendKernels make_avx2_kernels() {
  return BackendKernels{Backend::avx2, make_set<F32>(&accumulate_scaled_f32),
                        make_set<F64>(&accumulate_scaled_f64)};
}

}  // namespace leaffed::kernels::detail

#endif
