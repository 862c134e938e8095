#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "faircdc/dataio.hpp"
#include "faircdc/fairtrain.hpp"

namespace faircdc {

// Monte-Carlo record for one sample size of a convergence study. Summary
// quantiles use sorted deviations with linear interpolation between order
// statistics.
struct ConvergenceTrial {
  std::size_t n = 0;
  std::size_t trials = 0;
  std::vector<double> stats;       // raw statistic, one entry per trial
  std::vector<double> deviations;  // |statistic - target| per trial
  double target = 0.0;
  double mean = 0.0;               // mean deviation
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  double epsilon = 0.0;
  double exceed_rate = 0.0;  // fraction of deviations above epsilon
  double bandwidth = 0.0;    // kernel bandwidth h(n); 0 for dcov studies
  double stat_mean = 0.0;    // mean raw statistic
};

// Distance covariance study. Independent mode draws iid standard normal
// pairs, population value 0. Dependent mode draws y only and sets z = y; the
// target is then the statistic of a single n = 8192 sample drawn with seed
// mix_seed(seed, 0xFF). Trial t at sample size n uses seed
// mix_seed(seed, n * 0x10000 + t) and consumes the y values first, then z.
// The n grid must be strictly increasing with every entry >= 2.
std::vector<ConvergenceTrial> convergence_study_dc(bool dependent,
                                                   const std::vector<std::size_t>& n_grid,
                                                   std::size_t trials, double epsilon,
                                                   std::uint64_t seed);

// Conditional variant. Each sample draws group bits b ~ Bernoulli(1/2) first,
// then y = (2b - 1) + noise, then z = (1 - 2b) + independent noise; u is the
// two-column one-hot encoding of b, so y and z are conditionally independent
// given u and the population value is 0. Dependent mode sets z = y and takes
// its target from the n = 8192 reference draw. Bandwidth is the
// rule-of-thumb value for n points of a 2-dimensional conditioner. The n
// grid must be strictly increasing with every entry >= 3.
std::vector<ConvergenceTrial> convergence_study_cdc(bool dependent,
                                                    const std::vector<std::size_t>& n_grid,
                                                    std::size_t trials, double epsilon,
                                                    std::uint64_t seed);

// One trained model evaluated on its held-out test split.
struct TradeoffPoint {
  double lambda_init = 0.0;
  PenaltyKind kind = PenaltyKind::None;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double delta_dp = 0.0;
  double delta_eo = 0.0;
};

// Mean and sample standard deviation over seeds for one (kind, lambda) cell.
struct TradeoffCell {
  double lambda_init = 0.0;
  PenaltyKind kind = PenaltyKind::None;
  std::size_t seeds = 0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;
  double delta_dp_mean = 0.0;
  double delta_dp_std = 0.0;
  double delta_eo_mean = 0.0;
  double delta_eo_std = 0.0;
};

// Fits one model per (kind, lambda, seed), looping kinds outermost and seeds
// innermost. Each run splits the dataset 70/15/15 with its seed, trains with
// the base config overridden by the cell's kind, lambda and seed, and
// evaluates on the test split. lambda = 0 also forces beta = 0 so the
// baseline cell stays a plain unpenalized run.
std::vector<TradeoffPoint> tradeoff_sweep(const Dataset& data,
                                          const std::vector<double>& lambda_grid,
                                          const std::vector<PenaltyKind>& kinds,
                                          const std::vector<std::uint64_t>& seeds,
                                          const TrainConfig& base, int positive_class = 1);

// Groups points by (kind, lambda) in first-appearance order. Standard
// deviations use the n - 1 divisor and are 0 for single-seed cells.
std::vector<TradeoffCell> aggregate_tradeoff(const std::vector<TradeoffPoint>& points);

// One CSV row per trial: n,trial,statistic,deviation.
std::string convergence_trials_csv(const std::vector<ConvergenceTrial>& rows);

// JSON array with one summary object per sample size.
std::string convergence_summary_json(const std::vector<ConvergenceTrial>& rows);

// One CSV row per point: lambda_init,kind,seed,accuracy,delta_dp,delta_eo.
std::string tradeoff_points_csv(const std::vector<TradeoffPoint>& points);

// One CSV row per cell with mean and std columns.
std::string tradeoff_cells_csv(const std::vector<TradeoffCell>& cells);

// JSON array with one object per cell.
std::string tradeoff_summary_json(const std::vector<TradeoffCell>& cells);

// Output file stems embedding the master seed and a hash of the study
// parameters, e.g. "converge_dcov_indep_seed42_<16 hex digits>".
std::string convergence_stem(const std::string& stat, bool dependent,
                             const std::vector<std::size_t>& n_grid, std::size_t trials,
                             double epsilon, std::uint64_t seed);
std::string tradeoff_stem(const std::vector<double>& lambda_grid,
                          const std::vector<PenaltyKind>& kinds,
                          const std::vector<std::uint64_t>& seeds, std::uint64_t seed);

}  // namespace faircdc
