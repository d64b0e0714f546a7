#pragma once

// Scalar type of the numeric core. Production builds use 32-bit floats; the
// gradient-verification target recompiles the numeric sources with
// YOLOE_REAL=double into a separate inline namespace so both can link together.
#ifndef YOLOE_REAL
#define YOLOE_REAL float
#define YOLOE_PRECISION_NS f32
#endif

#ifndef YOLOE_PRECISION_NS
#error "YOLOE_PRECISION_NS must accompany a YOLOE_REAL override"
#endif

namespace yoloe::inline YOLOE_PRECISION_NS {
using real = YOLOE_REAL;
}  // namespace yoloe::inline YOLOE_PRECISION_NS
