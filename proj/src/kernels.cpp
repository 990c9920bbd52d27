// SPDX-License-Identifier: Apache-2.0
#include "driftforge/kernels.hpp"

#include <cmath>
#include <limits>

namespace driftforge::kernels {

namespace {
constexpr i64 kParallelCutoff = 4096;  // skip thread fan-out for tiny work
}

// ---------------------------------------------------------------------------
// serial references
// ---------------------------------------------------------------------------

namespace serial {

void gemm(const double* a, const double* b, double* c, i64 m, i64 k, i64 n) {
    for (i64 i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (i64 j = 0; j < n; ++j) crow[j] = 0.0;
        const double* arow = a + i * k;
        for (i64 p = 0; p < k; ++p) {
            const double aip = arow[p];
            const double* brow = b + p * n;
            for (i64 j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

void gemm_nt(const double* a, const double* b, double* c, i64 m, i64 k, i64 n) {
    for (i64 i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (i64 j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (i64 p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = acc;
        }
    }
}

void gemm_tn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n) {
    for (i64 i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (i64 j = 0; j < n; ++j) crow[j] = 0.0;
        for (i64 p = 0; p < k; ++p) {
            const double api = a[p * m + i];
            const double* brow = b + p * n;
            for (i64 j = 0; j < n; ++j) crow[j] += api * brow[j];
        }
    }
}

void bmm(const double* a, const double* b, double* c, i64 nb, i64 m, i64 k, i64 n) {
    for (i64 t = 0; t < nb; ++t) gemm(a + t * m * k, b + t * k * n, c + t * m * n, m, k, n);
}

void bmm_nt(const double* a, const double* b, double* c, i64 nb, i64 m, i64 k, i64 n) {
    for (i64 t = 0; t < nb; ++t) gemm_nt(a + t * m * k, b + t * n * k, c + t * m * n, m, k, n);
}

void bmm_tn(const double* a, const double* b, double* c, i64 nb, i64 m, i64 k, i64 n) {
    for (i64 t = 0; t < nb; ++t) gemm_tn(a + t * k * m, b + t * k * n, c + t * m * n, m, k, n);
}

void softmax_masked_rows(const double* x, const unsigned char* keep, double* y, i64 rows, i64 cols) {
    for (i64 r = 0; r < rows; ++r) {
        const double* xr = x + r * cols;
        const unsigned char* kr = keep + r * cols;
        double* yr = y + r * cols;
        double mx = -std::numeric_limits<double>::infinity();
        for (i64 j = 0; j < cols; ++j)
            if (kr[j] && xr[j] > mx) mx = xr[j];
        double denom = 0.0;
        for (i64 j = 0; j < cols; ++j) {
            yr[j] = kr[j] ? std::exp(xr[j] - mx) : 0.0;
            denom += yr[j];
        }
        const double inv = 1.0 / denom;
        for (i64 j = 0; j < cols; ++j) yr[j] *= inv;
    }
}

void layer_norm_rows(const double* x, const double* gain, const double* shift, double* y, double* xhat,
                     double* inv_std, i64 rows, i64 cols, double eps) {
    for (i64 r = 0; r < rows; ++r) {
        const double* xr = x + r * cols;
        double* yr = y + r * cols;
        double* hr = xhat + r * cols;
        double mean = 0.0;
        for (i64 j = 0; j < cols; ++j) mean += xr[j];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (i64 j = 0; j < cols; ++j) {
            const double d = xr[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (i64 j = 0; j < cols; ++j) {
            hr[j] = (xr[j] - mean) * is;
            yr[j] = gain[j] * hr[j] + shift[j];
        }
    }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP kernels
// ---------------------------------------------------------------------------

void gemm(const double* a, const double* b, double* c, i64 m, i64 k, i64 n) {
#pragma omp parallel for schedule(static) if (m * k * n > kParallelCutoff)
    for (i64 i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (i64 j = 0; j < n; ++j) crow[j] = 0.0;
        const double* arow = a + i * k;
        for (i64 p = 0; p < k; ++p) {
            const double aip = arow[p];
            const double* brow = b + p * n;
            for (i64 j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

void gemm_nt(const double* a, const double* b, double* c, i64 m, i64 k, i64 n) {
#pragma omp parallel for schedule(static) if (m * k * n > kParallelCutoff)
    for (i64 i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (i64 j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (i64 p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = acc;
        }
    }
}

void gemm_tn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n) {
#pragma omp parallel for schedule(static) if (m * k * n > kParallelCutoff)
    for (i64 i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (i64 j = 0; j < n; ++j) crow[j] = 0.0;
        for (i64 p = 0; p < k; ++p) {
            const double api = a[p * m + i];
            const double* brow = b + p * n;
            for (i64 j = 0; j < n; ++j) crow[j] += api * brow[j];
        }
    }
}

void bmm(const double* a, const double* b, double* c, i64 nb, i64 m, i64 k, i64 n) {
#pragma omp parallel for schedule(static) if (nb * m * k * n > kParallelCutoff)
    for (i64 t = 0; t < nb; ++t) serial::gemm(a + t * m * k, b + t * k * n, c + t * m * n, m, k, n);
}

void bmm_nt(const double* a, const double* b, double* c, i64 nb, i64 m, i64 k, i64 n) {
#pragma omp parallel for schedule(static) if (nb * m * k * n > kParallelCutoff)
    for (i64 t = 0; t < nb; ++t) serial::gemm_nt(a + t * m * k, b + t * n * k, c + t * m * n, m, k, n);
}

void bmm_tn(const double* a, const double* b, double* c, i64 nb, i64 m, i64 k, i64 n) {
#pragma omp parallel for schedule(static) if (nb * m * k * n > kParallelCutoff)
    for (i64 t = 0; t < nb; ++t) serial::gemm_tn(a + t * k * m, b + t * k * n, c + t * m * n, m, k, n);
}

void softmax_masked_rows(const double* x, const unsigned char* keep, double* y, i64 rows, i64 cols) {
#pragma omp parallel for schedule(static) if (rows * cols > kParallelCutoff)
    for (i64 r = 0; r < rows; ++r) {
        serial::softmax_masked_rows(x + r * cols, keep + r * cols, y + r * cols, 1, cols);
    }
}

void softmax_masked_rows_backward(const double* p, const double* dy, double* dx, i64 rows, i64 cols) {
#pragma omp parallel for schedule(static) if (rows * cols > kParallelCutoff)
    for (i64 r = 0; r < rows; ++r) {
        const double* pr = p + r * cols;
        const double* dr = dy + r * cols;
        double* xr = dx + r * cols;
        double dot = 0.0;
        for (i64 j = 0; j < cols; ++j) dot += dr[j] * pr[j];
        for (i64 j = 0; j < cols; ++j) xr[j] = pr[j] * (dr[j] - dot);
    }
}

void layer_norm_rows(const double* x, const double* gain, const double* shift, double* y, double* xhat,
                     double* inv_std, i64 rows, i64 cols, double eps) {
#pragma omp parallel for schedule(static) if (rows * cols > kParallelCutoff)
    for (i64 r = 0; r < rows; ++r) {
        serial::layer_norm_rows(x + r * cols, gain, shift, y + r * cols, xhat + r * cols, inv_std + r, 1, cols, eps);
    }
}

void layer_norm_rows_backward(const double* xhat, const double* inv_std, const double* gain, const double* dy,
                              double* dx, double* dgain, double* dshift, i64 rows, i64 cols) {
    // dgain/dshift are column reductions over rows; accumulate serially so
    // the result does not depend on the thread count.
    for (i64 j = 0; j < cols; ++j) {
        dgain[j] = 0.0;
        dshift[j] = 0.0;
    }
    for (i64 r = 0; r < rows; ++r) {
        const double* hr = xhat + r * cols;
        const double* dr = dy + r * cols;
        for (i64 j = 0; j < cols; ++j) {
            dgain[j] += dr[j] * hr[j];
            dshift[j] += dr[j];
        }
    }
#pragma omp parallel for schedule(static) if (rows * cols > kParallelCutoff)
    for (i64 r = 0; r < rows; ++r) {
        const double* hr = xhat + r * cols;
        const double* dr = dy + r * cols;
        double* xr = dx + r * cols;
        const double is = inv_std[r];
        double mean_dg = 0.0;
        double mean_dgh = 0.0;
        for (i64 j = 0; j < cols; ++j) {
            const double g = dr[j] * gain[j];
            mean_dg += g;
            mean_dgh += g * hr[j];
        }
        mean_dg /= static_cast<double>(cols);
        mean_dgh /= static_cast<double>(cols);
        for (i64 j = 0; j < cols; ++j) {
            const double g = dr[j] * gain[j];
            xr[j] = is * (g - mean_dg - hr[j] * mean_dgh);
        }
    }
}

void add(const double* a, const double* b, double* c, i64 n) {
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (i64 i = 0; i < n; ++i) c[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* c, i64 n) {
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (i64 i = 0; i < n; ++i) c[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* c, i64 n) {
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (i64 i = 0; i < n; ++i) c[i] = a[i] * b[i];
}

void scale(const double* a, double s, double* c, i64 n) {
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (i64 i = 0; i < n; ++i) c[i] = a[i] * s;
}

void axpy(double alpha, const double* x, double* y, i64 n) {
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (i64 i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void relu(const double* x, double* y, i64 n) {
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (i64 i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x, const double* dy, double* dx, i64 n) {
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (i64 i = 0; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

double sum(const double* x, i64 n) {
    double acc = 0.0;
    for (i64 i = 0; i < n; ++i) acc += x[i];
    return acc;
}

}  // namespace driftforge::kernels
