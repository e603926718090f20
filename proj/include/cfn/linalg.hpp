#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

// Small dense row-major matrices and vectors. Everything is double; the
// certificate margins are too tight for anything less.

namespace cfn {

using Vec = std::vector<double>;

struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;  // row-major, rows*cols

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

    double& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

    const double* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }
    double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }

    bool empty() const { return a.empty(); }

    bool operator==(const Mat& o) const {
        return rows == o.rows && cols == o.cols && a == o.a;
    }
};

// Maximum absolute row sum: the operator norm induced by the vector
// infinity norm.
inline double inf_norm(const Mat& m) {
    double best = 0.0;
    for (int r = 0; r < m.rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < m.cols; ++c) s += std::fabs(m(r, c));
        if (s > best) best = s;
    }
    return best;
}

inline double inf_norm(const Vec& v) {
    double best = 0.0;
    for (double x : v)
        if (std::fabs(x) > best) best = std::fabs(x);
    return best;
}

inline double inf_norm_diff(const Vec& a, const Vec& b) {
    assert(a.size() == b.size());
    double best = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = std::fabs(a[i] - b[i]);
        if (d > best) best = d;
    }
    return best;
}

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const Mat& m) { return all_finite(m.a); }

}  // namespace cfn
