#include "cfn/kernels.hpp"

// AVX2 backend. Compiled with -mavx2 on x86-64 only; selection happens at
// runtime via cpuid. Mul and add stay separate instructions (no fma) so the
// rounding sequence matches the scalar reference exactly.

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>

namespace cfn::kern {
namespace {

// Load mask for a tail of k in {1,2,3} elements: lanes < k are live.
inline __m256i tail_mask(int k) {
    alignas(32) static const long long table[4][4] = {
        {0, 0, 0, 0},
        {-1, 0, 0, 0},
        {-1, -1, 0, 0},
        {-1, -1, -1, 0},
    };
    return _mm256_load_si256(reinterpret_cast<const __m256i*>(table[k]));
}

inline double reduce_lanes(__m256d acc) {
    // (s0 + s2) + (s1 + s3): pairwise fold matching the scalar reference.
    const __m128d lo = _mm256_castpd256_pd128(acc);
    const __m128d hi = _mm256_extractf128_pd(acc, 1);
    const __m128d s = _mm_add_pd(lo, hi);  // {s0+s2, s1+s3}
    return _mm_cvtsd_f64(s) + _mm_cvtsd_f64(_mm_unpackhi_pd(s, s));
}

inline double row_dot(const double* w, const double* x, int cols) {
    __m256d acc = _mm256_setzero_pd();
    int j = 0;
    for (; j + 4 <= cols; j += 4) {
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(w + j), _mm256_loadu_pd(x + j)));
    }
    if (j < cols) {
        const __m256i m = tail_mask(cols - j);
        const __m256d wv = _mm256_maskload_pd(w + j, m);
        const __m256d xv = _mm256_maskload_pd(x + j, m);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(wv, xv));
    }
    return reduce_lanes(acc);
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
        const __m256d gr = _mm256_set1_pd(g[r]);
        int j = 0;
        for (; j + 4 <= cols; j += 4) {
            const __m256d yv = _mm256_add_pd(_mm256_loadu_pd(y + j),
                                             _mm256_mul_pd(_mm256_loadu_pd(w + j), gr));
            _mm256_storeu_pd(y + j, yv);
        }
        if (j < cols) {
            const __m256i m = tail_mask(cols - j);
            const __m256d yv = _mm256_add_pd(_mm256_maskload_pd(y + j, m),
                                             _mm256_mul_pd(_mm256_maskload_pd(w + j, m), gr));
            _mm256_maskstore_pd(y + j, m, yv);
        }
    }
}

void ger_acc(double* A, const double* g, const double* x, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        double* a = A + static_cast<size_t>(r) * cols;
        const __m256d gr = _mm256_set1_pd(g[r]);
        int j = 0;
        for (; j + 4 <= cols; j += 4) {
            const __m256d av = _mm256_add_pd(_mm256_loadu_pd(a + j),
                                             _mm256_mul_pd(gr, _mm256_loadu_pd(x + j)));
            _mm256_storeu_pd(a + j, av);
        }
        if (j < cols) {
            const __m256i m = tail_mask(cols - j);
            const __m256d av = _mm256_add_pd(_mm256_maskload_pd(a + j, m),
                                             _mm256_mul_pd(gr, _mm256_maskload_pd(x + j, m)));
            _mm256_maskstore_pd(a + j, m, av);
        }
    }
}

void hadamard2(const double* a, const double* b, const double* c, const double* d,
               double* z, int n) {
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d ab = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        const __m256d cd = _mm256_mul_pd(_mm256_loadu_pd(c + i), _mm256_loadu_pd(d + i));
        _mm256_storeu_pd(z + i, _mm256_add_pd(ab, cd));
    }
    if (i < n) {
        const __m256i m = tail_mask(n - i);
        const __m256d ab = _mm256_mul_pd(_mm256_maskload_pd(a + i, m), _mm256_maskload_pd(b + i, m));
        const __m256d cd = _mm256_mul_pd(_mm256_maskload_pd(c + i, m), _mm256_maskload_pd(d + i, m));
        _mm256_maskstore_pd(z + i, m, _mm256_add_pd(ab, cd));
    }
}

void add_acc(const double* x, double* y, int n) {
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
    }
    if (i < n) {
        const __m256i m = tail_mask(n - i);
        const __m256d yv = _mm256_add_pd(_mm256_maskload_pd(y + i, m), _mm256_maskload_pd(x + i, m));
        _mm256_maskstore_pd(y + i, m, yv);
    }
}

void scale(double* y, double alpha, int n) {
    const __m256d av = _mm256_set1_pd(alpha);
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(y + i), av));
    }
    if (i < n) {
        const __m256i m = tail_mask(n - i);
        _mm256_maskstore_pd(y + i, m, _mm256_mul_pd(_mm256_maskload_pd(y + i, m), av));
    }
}

void adam_update(double* p, double* m, double* v, const double* g, int n,
                 double lr, double beta1, double beta2, double eps,
                 double bc1, double bc2) {
    const __m256d b1 = _mm256_set1_pd(beta1);
    const __m256d b2 = _mm256_set1_pd(beta2);
    const __m256d ob1 = _mm256_set1_pd(1.0 - beta1);
    const __m256d ob2 = _mm256_set1_pd(1.0 - beta2);
    const __m256d vbc1 = _mm256_set1_pd(bc1);
    const __m256d vbc2 = _mm256_set1_pd(bc2);
    const __m256d vlr = _mm256_set1_pd(lr);
    const __m256d veps = _mm256_set1_pd(eps);
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d gv = _mm256_loadu_pd(g + i);
        const __m256d mv = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)),
                                         _mm256_mul_pd(ob1, gv));
        const __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                         _mm256_mul_pd(ob2, _mm256_mul_pd(gv, gv)));
        _mm256_storeu_pd(m + i, mv);
        _mm256_storeu_pd(v + i, vv);
        const __m256d mhat = _mm256_div_pd(mv, vbc1);
        const __m256d vhat = _mm256_div_pd(vv, vbc2);
        const __m256d step =
            _mm256_mul_pd(vlr, _mm256_div_pd(mhat, _mm256_add_pd(_mm256_sqrt_pd(vhat), veps)));
        _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
    }
    if (i < n) {
        const __m256i msk = tail_mask(n - i);
        const __m256d gv = _mm256_maskload_pd(g + i, msk);
        const __m256d mv = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_maskload_pd(m + i, msk)),
                                         _mm256_mul_pd(ob1, gv));
        const __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_maskload_pd(v + i, msk)),
                                         _mm256_mul_pd(ob2, _mm256_mul_pd(gv, gv)));
        _mm256_maskstore_pd(m + i, msk, mv);
        _mm256_maskstore_pd(v + i, msk, vv);
        const __m256d mhat = _mm256_div_pd(mv, vbc1);
        const __m256d vhat = _mm256_div_pd(vv, vbc2);
        const __m256d step =
            _mm256_mul_pd(vlr, _mm256_div_pd(mhat, _mm256_add_pd(_mm256_sqrt_pd(vhat), veps)));
        _mm256_maskstore_pd(p + i, msk,
                            _mm256_sub_pd(_mm256_maskload_pd(p + i, msk), step));
    }
}

}  // namespace

const Ops* avx2_ops() {
    if (!__builtin_cpu_supports("avx2")) return nullptr;
    static const Ops ops = {
        "avx2", gemv, gemv_acc, gemv_t_acc, ger_acc, hadamard2, add_acc, scale, adam_update,
    };
    return &ops;
}

}  // namespace cfn::kern

#else

namespace cfn::kern {
const Ops* avx2_ops() { return nullptr; }
}  // namespace cfn::kern

#endif
