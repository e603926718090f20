#include "cfn/kernels.hpp"

// NEON backend for aarch64. Two 2-lane registers emulate the canonical
// 4-partial reduction, so results stay bit-identical to the scalar and AVX2
// backends. Tails run scalar on the extracted partials.

#if defined(__aarch64__) || defined(_M_ARM64)
#include <arm_neon.h>

#include <cmath>

namespace cfn::kern {
namespace {

inline double row_dot(const double* w, const double* x, int cols) {
    float64x2_t acc01 = vdupq_n_f64(0.0);  // lanes j%4 in {0,1}
    float64x2_t acc23 = vdupq_n_f64(0.0);  // lanes j%4 in {2,3}
    int j = 0;
    for (; j + 4 <= cols; j += 4) {
        acc01 = vaddq_f64(acc01, vmulq_f64(vld1q_f64(w + j), vld1q_f64(x + j)));
        acc23 = vaddq_f64(acc23, vmulq_f64(vld1q_f64(w + j + 2), vld1q_f64(x + j + 2)));
    }
    double s0 = vgetq_lane_f64(acc01, 0);
    double s1 = vgetq_lane_f64(acc01, 1);
    double s2 = vgetq_lane_f64(acc23, 0);
    double s3 = vgetq_lane_f64(acc23, 1);
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
        const float64x2_t gr = vdupq_n_f64(g[r]);
        int j = 0;
        for (; j + 2 <= cols; j += 2) {
            vst1q_f64(y + j, vaddq_f64(vld1q_f64(y + j), vmulq_f64(vld1q_f64(w + j), gr)));
        }
        if (j < cols) y[j] += w[j] * g[r];
    }
}

void ger_acc(double* A, const double* g, const double* x, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        double* a = A + static_cast<size_t>(r) * cols;
        const float64x2_t gr = vdupq_n_f64(g[r]);
        int j = 0;
        for (; j + 2 <= cols; j += 2) {
            vst1q_f64(a + j, vaddq_f64(vld1q_f64(a + j), vmulq_f64(gr, vld1q_f64(x + j))));
        }
        if (j < cols) a[j] += g[r] * x[j];
    }
}

void hadamard2(const double* a, const double* b, const double* c, const double* d,
               double* z, int n) {
    int i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t ab = vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
        const float64x2_t cd = vmulq_f64(vld1q_f64(c + i), vld1q_f64(d + i));
        vst1q_f64(z + i, vaddq_f64(ab, cd));
    }
    if (i < n) z[i] = a[i] * b[i] + c[i] * d[i];
}

void add_acc(const double* x, double* y, int n) {
    int i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vld1q_f64(x + i)));
    }
    if (i < n) y[i] += x[i];
}

void scale(double* y, double alpha, int n) {
    const float64x2_t av = vdupq_n_f64(alpha);
    int i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(y + i, vmulq_f64(vld1q_f64(y + i), av));
    }
    if (i < n) y[i] *= alpha;
}

void adam_update(double* p, double* m, double* v, const double* g, int n,
                 double lr, double beta1, double beta2, double eps,
                 double bc1, double bc2) {
    const float64x2_t b1 = vdupq_n_f64(beta1);
    const float64x2_t b2 = vdupq_n_f64(beta2);
    const float64x2_t ob1 = vdupq_n_f64(1.0 - beta1);
    const float64x2_t ob2 = vdupq_n_f64(1.0 - beta2);
    const float64x2_t vbc1 = vdupq_n_f64(bc1);
    const float64x2_t vbc2 = vdupq_n_f64(bc2);
    const float64x2_t vlr = vdupq_n_f64(lr);
    const float64x2_t veps = vdupq_n_f64(eps);
    int i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t gv = vld1q_f64(g + i);
        const float64x2_t mv = vaddq_f64(vmulq_f64(b1, vld1q_f64(m + i)), vmulq_f64(ob1, gv));
        const float64x2_t vv = vaddq_f64(vmulq_f64(b2, vld1q_f64(v + i)),
                                         vmulq_f64(ob2, vmulq_f64(gv, gv)));
        vst1q_f64(m + i, mv);
        vst1q_f64(v + i, vv);
        const float64x2_t mhat = vdivq_f64(mv, vbc1);
        const float64x2_t vhat = vdivq_f64(vv, vbc2);
        const float64x2_t step =
            vmulq_f64(vlr, vdivq_f64(mhat, vaddq_f64(vsqrtq_f64(vhat), veps)));
        vst1q_f64(p + i, vsubq_f64(vld1q_f64(p + i), step));
    }
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i]);
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + eps));
    }
}

}  // namespace

const Ops* neon_ops() {
    static const Ops ops = {
        "neon", gemv, gemv_acc, gemv_t_acc, ger_acc, hadamard2, add_acc, scale, adam_update,
    };
    return &ops;
}

}  // namespace cfn::kern

#else

namespace cfn::kern {
const Ops* neon_ops() { return nullptr; }
}  // namespace cfn::kern

#endif
