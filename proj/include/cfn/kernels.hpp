#pragma once

#include <string>

// Data-parallel inner-loop kernels with interchangeable backends.
//
// Every backend implements the same fully pinned arithmetic semantics, so
// scalar and SIMD variants produce bit-identical doubles and the test suite
// can assert exact equality between them:
//
//  - Row dot products (gemv/gemv_acc) accumulate into four interleaved
//    partial sums s[j % 4] and combine them as (s0 + s2) + (s1 + s3),
//    matching a 4-lane register reduction.
//  - All other kernels are element-independent, evaluated in index order
//    with one rounding per multiply and per add (no fma contraction; the
//    build sets -ffp-contract=off).
//
// Matrices are row-major with no padding.

namespace cfn::kern {

struct Ops {
    const char* name;

    // y = W x            (W: rows x cols, x: cols, y: rows)
    void (*gemv)(const double* W, const double* x, double* y, int rows, int cols);
    // y += W x
    void (*gemv_acc)(const double* W, const double* x, double* y, int rows, int cols);
    // y += W^T g          (g: rows, y: cols)
    void (*gemv_t_acc)(const double* W, const double* g, double* y, int rows, int cols);
    // A += g x^T          (rank-1 accumulate)
    void (*ger_acc)(double* A, const double* g, const double* x, int rows, int cols);
    // z = a.b + c.d       (elementwise)
    void (*hadamard2)(const double* a, const double* b, const double* c, const double* d,
                      double* z, int n);
    // y += x
    void (*add_acc)(const double* x, double* y, int n);
    // y *= alpha
    void (*scale)(double* y, double alpha, int n);
    // Bias-corrected Adam over one parameter block. bc1 = 1 - beta1^t,
    // bc2 = 1 - beta2^t for the step being applied.
    void (*adam_update)(double* p, double* m, double* v, const double* g, int n,
                        double lr, double beta1, double beta2, double eps,
                        double bc1, double bc2);
};

const Ops& scalar_ops();
const Ops* avx2_ops();  // nullptr when unsupported by the build or the CPU
const Ops* neon_ops();  // nullptr on non-ARM builds

// Runtime-selected backend. Defaults to the widest supported SIMD variant;
// the CFNID_KERNELS environment variable ("scalar", "avx2", "neon", "auto")
// or select_backend() overrides it.
const Ops& active();
bool select_backend(const std::string& name);

}  // namespace cfn::kern
