#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "faircdc/rng.hpp"
#include "faircdc/stats.hpp"

namespace {

using Clock = std::chrono::steady_clock;

// Best of reps wall-clock milliseconds; the result sink keeps the calls live.
template <typename F>
double time_ms(std::size_t reps, double* sink, F&& f) {
  double best = 1e300;
  for (std::size_t r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    *sink = f();
    const auto t1 = Clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

faircdc::Matrix normal_matrix(std::size_t n, std::size_t d, faircdc::Rng& rng) {
  faircdc::Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) m(i, j) = rng.normal();
  return m;
}

faircdc::Matrix onehot_matrix(std::size_t n, faircdc::Rng& rng) {
  faircdc::Matrix m(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const int b = rng.bernoulli(0.5);
    m(i, 0) = static_cast<double>(b);
    m(i, 1) = static_cast<double>(1 - b);
  }
  return m;
}

double rel_gap(double a, double b) {
  return std::fabs(a - b) / std::max(std::fabs(b), 1e-12);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Timing of the parallel matrix routes against the serial references"};
  std::vector<std::size_t> grid{256, 512, 1024, 2048};
  std::size_t reps = 3;
  std::size_t cdc_direct_max = 128;
  std::uint64_t seed = 42;
  app.add_option("--n-grid", grid, "Sample sizes to time")
      ->delimiter(',')
      ->capture_default_str();
  app.add_option("--reps", reps, "Repetitions per timing, best is kept")->capture_default_str();
  app.add_option("--cdc-direct-max", cdc_direct_max,
                 "Largest n for the per-point cdc reference, which scales as n^4")
      ->capture_default_str();
  app.add_option("--seed", seed, "Seed for the synthetic draws")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  int threads = 1;
#ifdef _OPENMP
  threads = omp_get_max_threads();
#endif
  std::printf("threads: %d, reps: %zu\n\n", threads, reps);
  std::printf("%8s  %-14s  %12s  %12s  %8s  %10s\n", "n", "statistic", "serial ms",
              "parallel ms", "speedup", "rel gap");

  for (std::size_t n : grid) {
    faircdc::Rng rng(faircdc::mix_seed(seed, n));
    const faircdc::Matrix y = normal_matrix(n, 2, rng);
    const faircdc::Matrix z = normal_matrix(n, 2, rng);
    const faircdc::Matrix u = onehot_matrix(n, rng);

    double par = 0.0, ser = 0.0, sform = 0.0;
    const double t_par = time_ms(reps, &par, [&] { return faircdc::dcov(y, z).value; });
    const double t_ser = time_ms(reps, &ser, [&] { return faircdc::dcov_direct(y, z).value; });
    const double t_sform = time_ms(reps, &sform, [&] { return faircdc::dcov_sform(y, z).value; });
    std::printf("%8zu  %-14s  %12.3f  %12.3f  %8.2f  %10.2e\n", n, "dcov", t_ser, t_par,
                t_ser / t_par, rel_gap(par, ser));
    std::printf("%8zu  %-14s  %12.3f  %12.3f  %8.2f  %10.2e\n", n, "dcov s-form", t_sform, t_par,
                t_sform / t_par, rel_gap(par, sform));

    const double h = faircdc::silverman_bandwidth(n, u.cols());
    double cpar = 0.0;
    const double t_cpar =
        time_ms(reps, &cpar, [&] { return faircdc::cdc_stat(y, z, u, h).value; });
    if (n <= cdc_direct_max) {
      double cser = 0.0;
      const double t_cser =
          time_ms(reps, &cser, [&] { return faircdc::cdc_stat_direct(y, z, u, h).value; });
      std::printf("%8zu  %-14s  %12.3f  %12.3f  %8.2f  %10.2e\n", n, "cdcov", t_cser, t_cpar,
                  t_cser / t_cpar, rel_gap(cpar, cser));
    } else {
      std::printf("%8zu  %-14s  %12s  %12.3f  %8s  %10s\n", n, "cdcov", "-", t_cpar, "-", "-");
    }
  }
  return 0;
}
