#pragma once

// Data-parallel inner loops behind the tensor ops, optimizers and FedAvg.
//
// Every kernel has a scalar reference and may have SIMD variants. The
// variants vectorize only along independent output elements and keep the
// per-element operation order of the reference (separate multiply and add,
// no FMA contraction), so all backends produce bitwise-identical results.

#include <cstddef>
#include <string_view>
#include <vector>

namespace leaffed::kernels {

enum class Backend { scalar, avx2 };

template <typename T>
struct AdamCoefficients {
  T beta1;
  T one_minus_beta1;
  T beta2;
  T one_minus_beta2;
  T bias_correction1;  // 1 - beta1^t
  T bias_correction2;  // 1 - beta2^t
  T learning_rate;
  T epsilon;
};

// Function table for one backend and one element type.
template <typename T>
struct KernelSet {
  // c[n,m] += a[n,k] * b[k,m]
  void (*gemm)(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t m);
  // c[k,m] += transpose(a[n,k]) * b[n,m]
  void (*gemm_tn)(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t m);
  // out[m] += sum over rows of a[n,m], rows in ascending order
  void (*add_rows)(const T* a, T* out, std::size_t n, std::size_t m);
  // y += x
  void (*add)(const T* x, T* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  // y = max(x, 0) with y = +0 for x <= 0
  void (*relu)(const T* x, T* y, std::size_t n);
  // gx += (x > 0) ? gy : 0
  void (*relu_backward)(const T* x, const T* gy, T* gx, std::size_t n);
  // p = p - lr * g
  void (*sgd_update)(T* p, const T* g, T lr, std::size_t n);
  // bias-corrected Adam; m and v advanced in place
  void (*adam_update)(T* p, const T* g, T* m, T* v, const AdamCoefficients<T>& c, std::size_t n);
  // acc += w * double(x)
  void (*accumulate_scaled)(const T* x, double w, double* acc, std::size_t n);
};

struct BackendKernels {
  Backend backend;
  KernelSet<float> f32;
  KernelSet<double> f64;
};

std::string_view backend_name(Backend backend);
bool backend_available(Backend backend);
std::vector<Backend> available_backends();

// Widest backend the running CPU supports.
Backend best_backend();

// Initially best_backend(), or the value of LEAFFED_SIMD (scalar|avx2)
// when that variable is set.
Backend active_backend();

// Throws ValidationError when the backend is not available on this CPU.
void set_backend(Backend backend);

// Direct access to a backend's tables, independent of the active choice.
const BackendKernels& kernels_for(Backend backend);

template <typename T>
const KernelSet<T>& active();
template <>
const KernelSet<float>& active<float>();
template <>
const KernelSet<double>& active<double>();

// Typed front doors used by the rest of the library.
template <typename T>
inline void gemm(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t m) {
  active<T>().gemm(a, b, c, n, k, m);
}
template <typename T>
inline void gemm_tn(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t m) {
  active<T>().gemm_tn(a, b, c, n, k, m);
}
template <typename T>
inline void add_rows(const T* a, T* out, std::size_t n, std::size_t m) {
  active<T>().add_rows(a, out, n, m);
}
template <typename T>
inline void add(const T* x, T* y, std::size_t n) {
  active<T>().add(x, y, n);
}
template <typename T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
  active<T>().axpy(alpha, x, y, n);
}
template <typename T>
inline void relu(const T* x, T* y, std::size_t n) {
  active<T>().relu(x, y, n);
}
template <typename T>
inline void relu_backward(const T* x, const T* gy, T* gx, std::size_t n) {
  active<T>().relu_backward(x, gy, gx, n);
}
template <typename T>
inline void sgd_update(T* p, const T* g, T lr, std::size_t n) {
  active<T>().sgd_update(p, g, lr, n);
}
template <typename T>
inline void adam_update(T* p, const T* g, T* m, T* v, const AdamCoefficients<T>& c, std::size_t n) {
  active<T>().adam_update(p, g, m, v, c, n);
}
template <typename T>
inline void accumulate_scaled(const T* x, double w, double* acc, std::size_t n) {
  active<T>().accumulate_scaled(x, w, acc, n);
}

}  // namespace leaffed::kernels
