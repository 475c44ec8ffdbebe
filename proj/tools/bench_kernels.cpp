// Times the serial reference implementations of the energy/gradient
// kernels against the blocked OpenMP versions and prints a small table.
// The blocked kernels must agree with the references to rounding error;
// any disagreement is reported and fails the run.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "taseg/kernels.hpp"

using namespace taseg;
using fifa::Exec;

namespace {

double seconds_of(const std::function<void()>& fn, int reps) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
}

struct Case {
    std::size_t frames;
    std::size_t segments;
};

}  // namespace

int main(int argc, char** argv) {
    int reps = 3;
    std::vector<Case> cases{{20'000, 5}, {200'000, 10}, {1'000'000, 20}};
    if (argc > 2) {
        cases = {{static_cast<std::size_t>(std::stoull(argv[1])),
                  static_cast<std::size_t>(std::stoull(argv[2]))}};
    }
    if (argc > 3) reps = std::stoi(argv[3]);

#ifdef _OPENMP
    const int threads = omp_get_max_threads();
#else
    const int threads = 1;
#endif
    std::printf("threads: %d, reps per timing: %d (best kept)\n", threads, reps);
    std::printf("%10s %4s %14s %14s %14s %8s %14s %14s %8s\n", "frames", "segs", "raw-ref(ms)",
                "raw-omp(ms)", "speedup", "", "norm-ref(ms)", "norm-omp(ms)", "speedup");

    std::mt19937 rng(12345);
    bool all_ok = true;
    for (const Case& c : cases) {
        std::uniform_real_distribution<double> nats(0.0, 6.0);
        Matrix nll(c.segments, c.frames);
        for (auto& x : nll.v) x = nats(rng);
        std::vector<double> lengths(c.segments);
        std::uniform_real_distribution<double> jitter(0.6, 1.4);
        for (auto& len : lengths) {
            len = jitter(rng) * static_cast<double>(c.frames) / static_cast<double>(c.segments);
        }
        const double sharpness = 1.75;

        fifa::ObsEnergyGrad ref, par, nref, npar;
        const double t_ref = seconds_of(
            [&] { ref = fifa::observation_energy_grad_reference(nll, lengths, sharpness); }, reps);
        const double t_par = seconds_of(
            [&] {
                par = fifa::observation_energy_grad_kernel(nll, lengths, sharpness,
                                                           Exec::parallel);
            },
            reps);
        const double t_nref = seconds_of(
            [&] {
                nref = fifa::observation_energy_grad_normalized_reference(nll, lengths, sharpness);
            },
            reps);
        const double t_npar = seconds_of(
            [&] {
                npar = fifa::observation_energy_grad_normalized_kernel(nll, lengths, sharpness,
                                                                       Exec::parallel);
            },
            reps);

        const auto close = [](double a, double b) {
            return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
        };
        bool ok = close(ref.energy, par.energy) && close(nref.energy, npar.energy);
        for (std::size_t n = 0; n < c.segments && ok; ++n) {
            ok = close(ref.d_start[n], par.d_start[n]) && close(ref.d_end[n], par.d_end[n]) &&
                 close(nref.d_start[n], npar.d_start[n]) && close(nref.d_end[n], npar.d_end[n]);
        }
        all_ok = all_ok && ok;

        std::printf("%10zu %4zu %14.3f %14.3f %13.2fx %8s %14.3f %14.3f %7.2fx%s\n", c.frames,
                    c.segments, t_ref * 1e3, t_par * 1e3, t_ref / t_par, "", t_nref * 1e3,
                    t_npar * 1e3, t_nref / t_npar, ok ? "" : "  MISMATCH");
    }
    if (!all_ok) {
        std::printf("kernel outputs disagree with the references\n");
        return 1;
    }
    return 0;
}
