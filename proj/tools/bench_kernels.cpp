// SPDX-License-Identifier: Apache-2.0
// Compares the OpenMP kernels against their serial references and reports
// throughput side by side.
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <vector>

#include "driftforge/kernels.hpp"
#include "driftforge/rng.hpp"

using namespace driftforge;
namespace ker = driftforge::kernels;

namespace {

double time_of(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto start = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() /
           static_cast<double>(reps);
}

std::vector<double> random_vec(i64 n, Rng& rng) {
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = rng.normal();
    return v;
}

void report(const char* name, double flops, double t_serial, double t_omp, bool equal) {
    std::printf("%-22s serial %8.2f ms (%6.2f GF/s)   omp %8.2f ms (%6.2f GF/s)   speedup %.2fx   bitwise %s\n",
                name, 1e3 * t_serial, flops / t_serial * 1e-9, 1e3 * t_omp, flops / t_omp * 1e-9,
                t_serial / t_omp, equal ? "equal" : "DIFFERENT");
}

}  // namespace

int main(int argc, char** argv) {
    const bool quick = argc > 1 && std::strcmp(argv[1], "--quick") == 0;
    const i64 n = quick ? 128 : 512;
    const int reps = quick ? 2 : 5;
    std::printf("threads: %d, size: %lld\n", omp_get_max_threads(), static_cast<long long>(n));

    Rng rng(1);
    auto a = random_vec(n * n, rng);
    auto b = random_vec(n * n, rng);
    std::vector<double> c1(static_cast<size_t>(n * n)), c2(static_cast<size_t>(n * n));

    {
        const double flops = 2.0 * static_cast<double>(n) * n * n;
        const double ts = time_of([&] { ker::serial::gemm(a.data(), b.data(), c1.data(), n, n, n); }, reps);
        const double tp = time_of([&] { ker::gemm(a.data(), b.data(), c2.data(), n, n, n); }, reps);
        report("gemm", flops, ts, tp, c1 == c2);
    }
    {
        const double flops = 2.0 * static_cast<double>(n) * n * n;
        const double ts = time_of([&] { ker::serial::gemm_nt(a.data(), b.data(), c1.data(), n, n, n); }, reps);
        const double tp = time_of([&] { ker::gemm_nt(a.data(), b.data(), c2.data(), n, n, n); }, reps);
        report("gemm_nt", flops, ts, tp, c1 == c2);
    }
    {
        const i64 nb = quick ? 8 : 32;
        const i64 w = 64;
        auto ba = random_vec(nb * w * n, rng);
        auto bb = random_vec(nb * n * w, rng);
        std::vector<double> bc1(static_cast<size_t>(nb * w * w)), bc2(static_cast<size_t>(nb * w * w));
        const double flops = 2.0 * static_cast<double>(nb) * w * w * n;
        const double ts = time_of([&] { ker::serial::bmm_nt(ba.data(), bb.data(), bc1.data(), nb, w, n, w); }, reps);
        const double tp = time_of([&] { ker::bmm_nt(ba.data(), bb.data(), bc2.data(), nb, w, n, w); }, reps);
        report("bmm_nt (attention)", flops, ts, tp, bc1 == bc2);
    }
    {
        const i64 rows = n * 4, cols = n;
        auto x = random_vec(rows * cols, rng);
        std::vector<unsigned char> keep(static_cast<size_t>(rows * cols), 1);
        std::vector<double> y1(static_cast<size_t>(rows * cols)), y2(static_cast<size_t>(rows * cols));
        const double flops = 3.0 * static_cast<double>(rows) * cols;
        const double ts =
            time_of([&] { ker::serial::softmax_masked_rows(x.data(), keep.data(), y1.data(), rows, cols); }, reps);
        const double tp =
            time_of([&] { ker::softmax_masked_rows(x.data(), keep.data(), y2.data(), rows, cols); }, reps);
        report("softmax_masked_rows", flops, ts, tp, y1 == y2);
    }
    {
        const i64 rows = n * 4, cols = n;
        auto x = random_vec(rows * cols, rng);
        auto gain = random_vec(cols, rng);
        auto shift = random_vec(cols, rng);
        std::vector<double> y1(static_cast<size_t>(rows * cols)), y2(static_cast<size_t>(rows * cols));
        std::vector<double> h1(static_cast<size_t>(rows * cols)), h2(static_cast<size_t>(rows * cols));
        std::vector<double> s1(static_cast<size_t>(rows)), s2(static_cast<size_t>(rows));
        const double flops = 6.0 * static_cast<double>(rows) * cols;
        const double ts = time_of(
            [&] {
                ker::serial::layer_norm_rows(x.data(), gain.data(), shift.data(), y1.data(), h1.data(), s1.data(),
                                             rows, cols, 1e-12);
            },
            reps);
        const double tp = time_of(
            [&] {
                ker::layer_norm_rows(x.data(), gain.data(), shift.data(), y2.data(), h2.data(), s2.data(), rows,
                                     cols, 1e-12);
            },
            reps);
        report("layer_norm_rows", flops, ts, tp, y1 == y2 && h1 == h2);
    }
    return 0;
}
