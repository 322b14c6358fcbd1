#include <cmath>

#include "backends.hpp"

namespace leaffed::kernels::detail {
namespace {

template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    T* crow = c + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      const T* brow = b + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] = crow[j] + aip * brow[j];
    }
  }
}

template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const T* brow = b + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      T* crow = c + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] = crow[j] + aip * brow[j];
    }
  }
}

template <typename T>
void add_rows(const T* a, T* out, std::size_t n, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = a + i * m;
    for (std::size_t j = 0; j < m; ++j) out[j] = out[j] + row[j];
  }
}

template <typename T>
void add(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + x[i];
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

template <typename T>
void relu(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
}

template <typename T>
void relu_backward(const T* x, const T* gy, T* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) gx[i] = gx[i] + (x[i] > T{0} ? gy[i] : T{0});
}

template <typename T>
void sgd_update(T* p, const T* g, T lr, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) p[i] = p[i] - lr * g[i];
}

template <typename T>
void adam_update(T* p, const T* g, T* m, T* v, const AdamCoefficients<T>& c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const T gi = g[i];
    m[i] = c.beta1 * m[i] + c.one_minus_beta1 * gi;
    v[i] = c.beta2 * v[i] + c.one_minus_beta2 * (gi * gi);
    const T m_hat = m[i] / c.bias_correction1;
    const T v_hat = v[i] / c.bias_correction2;
    p[i] = p[i] - c.learning_rate * (m_hat / (std::sqrt(v_hat) + c.epsilon));
  }
}

template <typename T>
void accumulate_scaled(const T* x, double w, double* acc, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] = acc[i] + w * static_cast<double>(x[i]);
}

template <typename T>
KernelSet<T> make_set() {
  return KernelSet<T>{&gemm<T>,       &gemm_tn<T>,    &add_rows<T>,    &add<T>,
                      &axpy<T>,       &relu<T>,       &relu_backward<T>, &sgd_update<T>,
                      &adam_update<T>, &accumulate_scaled<T>};
}

}  // namespace

BackendKernels make_scalar_kernels() {
  return BackendKernels{Backend::scalar, make_set<float>(), make_set<double>()};
}

}  // namespace leaffed::kernels::detail
