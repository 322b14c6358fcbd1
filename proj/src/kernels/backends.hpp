#pragma once

#include "leaffed/kernels.hpp"

namespace leaffed::kernels::detail {

BackendKernels make_scalar_kernels();

#if defined(__x86_64__) || defined(_M_X64)
#define LEAFFED_HAVE_AVX2_KERNELS 1
BackendKernels make_avx2_kernels();
#endif

}  // namespace leaffed::kernels::detail
