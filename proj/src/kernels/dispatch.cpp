#include <atomic>
#include <cstdlib>
#include <string>

#include "backends.hpp"
#include "leaffed/error.hpp"

namespace leaffed::kernels {
namespace {

const BackendKernels& scalar_kernels() {
  static const BackendKernels table = detail::make_scalar_kernels();
  return table;
}

#if defined(LEAFFED_HAVE_AVX2_KERNELS)
const BackendKernels& avx2_kernels() {
  static const BackendKernels table = detail::make_avx2_kernels();
  return table;
}
#endif

bool cpu_has_avx2() {
#if defined(LEAFFED_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Backend initial_backend() {
  if (const char* env = std::getenv("LEAFFED_SIMD")) {
    const std::string value(env);
    if (value == "scalar") return Backend::scalar;
    if (value == "avx2" && backend_available(Backend::avx2)) return Backend::avx2;
  }
  return best_backend();
}

std::atomic<const BackendKernels*>& active_table() {
  static std::atomic<const BackendKernels*> table{&kernels_for(initial_backend())};
  return table;
}

}  // namespace

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::scalar:
      return "scalar";
    case Backend::avx2:
      return "avx2";
  }
  return "unknown";
}

bool backend_available(Backend backend) {
  switch (backend) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
      return cpu_has_avx2();
  }
  return false;
}

std::vector<Backend> available_backends() {
  std::vector<Backend> out{Backend::scalar};
  if (backend_available(Backend::avx2)) out.push_back(Backend::avx2);
  return out;
}

Backend best_backend() { return backend_available(Backend::avx2) ? Backend::avx2 : Backend::scalar; }

Backend active_backend() { return active_table().load()->backend; }

void set_backend(Backend backend) {
  if (!backend_available(backend)) {
    throw ValidationError("kernel backend '" + std::string(backend_name(backend)) +
                          "' is not available on this CPU");
  }
  active_table().store(&kernels_for(backend));
}

const BackendKernels& kernels_for(Backend backend) {
#if defined(LEAFFED_HAVE_AVX2_KERNELS)
  if (backend == Backend::avx2) {
    if (!cpu_has_avx2()) throw ValidationError("avx2 kernels requested on a CPU without AVX2");
    return avx2_kernels();
  }
#endif
  if (backend != Backend::scalar) {
    throw ValidationError("kernel backend '" + std::string(backend_name(backend)) +
                          "' was not compiled into this build");
  }
  return scalar_kernels();
}

template <>
const KernelSet<float>& active<float>() {
  return active_table().load(std::memory_order_relaxed)->f32;
}

template <>
const KernelSet<double>& active<double>() {
  return active_table().load(std::memory_order_relaxed)->f64;
}

}  // namespace leaffed::kernels
