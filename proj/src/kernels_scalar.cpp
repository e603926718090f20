#include "cfn/kernels.hpp"

#include <cmath>

// Reference backend. The gemv kernels keep four interleaved partial sums so
// the reduction order is lane-for-lane identical to the SIMD backends.

namespace cfn::kern {
namespace {

inline double row_dot(const double* w, const double* x, int cols) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    int j = 0;
    for (; j + 4 <= cols; j += 4) {
        s0 += w[j] * x[j];
        s1 += w[j + 1] * x[j + 1];
        s2 += w[j + 2] * x[j + 2];
        s3 += w[j + 3] * x[j + 3];
    }
    if (j < cols) s0 += w[j] * x[j];
    if (j + 1 < cols) s1 += w[j + 1] * x[j + 1];
    if (j + 2 < cols) s2 += w[j + 2] * x[j + 2];
    return (s0 + s2) + (s1 + s3);
}

void gemv(const double* W, const double* x, double* y, int rows, int cols) {
    for (int r = 0; r < rows; ++r) y[r] = row_dot(W + static_cast<size_t>(r) * cols, x, cols);
}

void gemv_acc(const double* W, const double* x, double* y, int rows, int cols) {
    for (int r = 0; r < rows; ++r) y[r] += row_dot(W + static_cast<size_t>(r) * cols, x, cols);
}

void gemv_t_acc(const double* W, const double* g, double* y, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const double* w = W + static_cast<size_t>(r) * cols;
        const double gr = g[r];
        for (int j = 0; j < cols; ++j) y[j] += w[j] * gr;
    }
}

void ger_acc(double* A, const double* g, const double* x, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        double* a = A + static_cast<size_t>(r) * cols;
        const double gr = g[r];
        for (int j = 0; j < cols; ++j) a[j] += gr * x[j];
    }
}

void hadamard2(const double* a, const double* b, const double* c, const double* d,
               double* z, int n) {
    for (int i = 0; i < n; ++i) z[i] = a[i] * b[i] + c[i] * d[i];
}

void add_acc(const double* x, double* y, int n) {
    for (int i = 0; i < n; ++i) y[i] += x[i];
}

void scale(double* y, double alpha, int n) {
    for (int i = 0; i < n; ++i) y[i] *= alpha;
}

void adam_update(double* p, double* m, double* v, const double* g, int n,
                 double lr, double beta1, double beta2, double eps,
                 double bc1, double bc2) {
    for (int i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i]);
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + eps));
    }
}

}  // namespace

const Ops& scalar_ops() {
    static const Ops ops = {
        "scalar", gemv, gemv_acc, gemv_t_acc, ger_acc, hadamard2, add_acc, scale, adam_update,
    };
    return ops;
}

}  // namespace cfn::kern
