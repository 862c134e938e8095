#include "faircdc/experiments.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "faircdc/rng.hpp"
#include "faircdc/stats.hpp"

namespace faircdc {

namespace {

constexpr std::size_t kReferenceN = 8192;
constexpr std::uint64_t kReferenceSalt = 0xFF;

std::uint64_t trial_salt(std::size_t n, std::size_t trial) {
  return static_cast<std::uint64_t>(n) * 0x10000ULL + static_cast<std::uint64_t>(trial);
}

void check_study_args(const std::vector<std::size_t>& n_grid, std::size_t min_n,
                      std::size_t trials, double epsilon) {
  if (n_grid.empty()) throw std::invalid_argument("convergence study: empty n grid");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] < min_n)
      throw std::invalid_argument("convergence study: n grid entry " + std::to_string(n_grid[i]) +
                                  " is below the minimum " + std::to_string(min_n));
    if (i > 0 && n_grid[i] <= n_grid[i - 1])
      throw std::invalid_argument("convergence study: n grid must be strictly increasing");
  }
  if (trials == 0) throw std::invalid_argument("convergence study: trials must be positive");
  if (!(epsilon > 0.0)) throw std::invalid_argument("convergence study: epsilon must be positive");
}

Matrix normal_column(std::size_t n, Rng& rng) {
  Matrix m(n, 1);
  for (std::size_t i = 0; i < n; ++i) m(i, 0) = rng.normal();
  return m;
}

struct DcDraw {
  Matrix y, z;
};

DcDraw draw_dc(std::size_t n, bool dependent, Rng& rng) {
  DcDraw s;
  s.y = normal_column(n, rng);
  s.z = dependent ? s.y : normal_column(n, rng);
  return s;
}

struct CdcDraw {
  Matrix u, y, z;
};

CdcDraw draw_cdc(std::size_t n, bool dependent, Rng& rng) {
  CdcDraw s;
  s.u = Matrix(n, 2);
  std::vector<int> b(n);
  for (std::size_t i = 0; i < n; ++i) {
    b[i] = rng.bernoulli(0.5);
    s.u(i, static_cast<std::size_t>(b[i])) = 1.0;
  }
  s.y = Matrix(n, 1);
  for (std::size_t i = 0; i < n; ++i) s.y(i, 0) = (2.0 * b[i] - 1.0) + rng.normal();
  if (dependent) {
    s.z = s.y;
  } else {
    s.z = Matrix(n, 1);
    for (std::size_t i = 0; i < n; ++i) s.z(i, 0) = (1.0 - 2.0 * b[i]) + rng.normal();
  }
  return s;
}

double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Fills deviations and every summary field from stats, target and epsilon.
void summarize(ConvergenceTrial& row) {
  const std::size_t k = row.stats.size();
  row.deviations.resize(k);
  double stat_sum = 0.0, dev_sum = 0.0;
  std::size_t above = 0;
  for (std::size_t t = 0; t < k; ++t) {
    row.deviations[t] = std::fabs(row.stats[t] - row.target);
    stat_sum += row.stats[t];
    dev_sum += row.deviations[t];
    if (row.deviations[t] > row.epsilon) ++above;
  }
  row.stat_mean = stat_sum / static_cast<double>(k);
  row.mean = dev_sum / static_cast<double>(k);
  std::vector<double> sorted = row.deviations;
  std::sort(sorted.begin(), sorted.end());
  row.median = quantile_sorted(sorted, 0.5);
  row.q25 = quantile_sorted(sorted, 0.25);
  row.q75 = quantile_sorted(sorted, 0.75);
  row.exceed_rate = static_cast<double>(above) / static_cast<double>(k);
}

// Shortest round-trip decimal form, shared by the CSV writers and stems.
std::string fmt(double v) { return nlohmann::json(v).dump(); }

std::string hex16(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace

std::vector<ConvergenceTrial> convergence_study_dc(bool dependent,
                                                   const std::vector<std::size_t>& n_grid,
                                                   std::size_t trials, double epsilon,
                                                   std::uint64_t seed) {
  check_study_args(n_grid, 2, trials, epsilon);
  double target = 0.0;
  if (dependent) {
    Rng rng(mix_seed(seed, kReferenceSalt));
    const DcDraw ref = draw_dc(kReferenceN, true, rng);
    target = dcov(ref.y, ref.z).value;
  }
  std::vector<ConvergenceTrial> out;
  out.reserve(n_grid.size());
  for (std::size_t n : n_grid) {
    ConvergenceTrial row;
    row.n = n;
    row.trials = trials;
    row.target = target;
    row.epsilon = epsilon;
    row.stats.reserve(trials);
    for (std::size_t t = 0; t < trials; ++t) {
      Rng rng(mix_seed(seed, trial_salt(n, t)));
      const DcDraw s = draw_dc(n, dependent, rng);
      row.stats.push_back(dcov(s.y, s.z).value);
    }
    summarize(row);
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<ConvergenceTrial> convergence_study_cdc(bool dependent,
                                                    const std::vector<std::size_t>& n_grid,
                                                    std::size_t trials, double epsilon,
                                                    std::uint64_t seed) {
  check_study_args(n_grid, 3, trials, epsilon);
  double target = 0.0;
  if (dependent) {
    Rng rng(mix_seed(seed, kReferenceSalt));
    const CdcDraw ref = draw_cdc(kReferenceN, true, rng);
    target = cdc_stat(ref.y, ref.z, ref.u, silverman_bandwidth(kReferenceN, 2)).value;
  }
  std::vector<ConvergenceTrial> out;
  out.reserve(n_grid.size());
  for (std::size_t n : n_grid) {
    ConvergenceTrial row;
    row.n = n;
    row.trials = trials;
    row.target = target;
    row.epsilon = epsilon;
    row.bandwidth = silverman_bandwidth(n, 2);
    row.stats.reserve(trials);
    for (std::size_t t = 0; t < trials; ++t) {
      Rng rng(mix_seed(seed, trial_salt(n, t)));
      const CdcDraw s = draw_cdc(n, dependent, rng);
      row.stats.push_back(cdc_stat(s.y, s.z, s.u, row.bandwidth).value);
    }
    summarize(row);
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<TradeoffPoint> tradeoff_sweep(const Dataset& data,
                                          const std::vector<double>& lambda_grid,
                                          const std::vector<PenaltyKind>& kinds,
                                          const std::vector<std::uint64_t>& seeds,
                                          const TrainConfig& base, int positive_class) {
  if (lambda_grid.empty()) throw std::invalid_argument("tradeoff: empty lambda grid");
  if (kinds.empty()) throw std::invalid_argument("tradeoff: empty penalty kind list");
  if (seeds.empty()) throw std::invalid_argument("tradeoff: empty seed list");
  for (double lambda : lambda_grid)
    if (lambda < 0.0)
      throw std::invalid_argument("tradeoff: lambda must be nonnegative, got " +
                                  std::to_string(lambda));
  std::vector<TradeoffPoint> points;
  points.reserve(kinds.size() * lambda_grid.size() * seeds.size());
  for (PenaltyKind kind : kinds) {
    for (double lambda : lambda_grid) {
      for (std::uint64_t seed : seeds) {
        TrainConfig cfg = base;
        cfg.penalty.kind = kind;
        cfg.lambda_init = lambda;
        cfg.beta = lambda == 0.0 ? 0.0 : base.beta;
        cfg.seed = seed;
        const DataSplits s = split(data, kDefaultFractions, seed);
        const TrainResult r = fit(s.train, s.val, cfg, positive_class);
        const FairnessReport rep = evaluate(r.model, s.test, positive_class);
        TradeoffPoint p;
        p.lambda_init = lambda;
        p.kind = kind;
        p.seed = seed;
        p.accuracy = rep.accuracy;
        p.delta_dp = rep.delta_dp;
        p.delta_eo = rep.delta_eo;
        points.push_back(p);
      }
    }
  }
  return points;
}

namespace {

void mean_std(const std::vector<const TradeoffPoint*>& pts, double TradeoffPoint::*field,
              double& mean, double& sd) {
  const double k = static_cast<double>(pts.size());
  double sum = 0.0;
  for (const TradeoffPoint* p : pts) sum += p->*field;
  mean = sum / k;
  if (pts.size() < 2) {
    sd = 0.0;
    return;
  }
  double ss = 0.0;
  for (const TradeoffPoint* p : pts) {
    const double d = p->*field - mean;
    ss += d * d;
  }
  sd = std::sqrt(ss / (k - 1.0));
}

}  // namespace

std::vector<TradeoffCell> aggregate_tradeoff(const std::vector<TradeoffPoint>& points) {
  std::vector<TradeoffCell> cells;
  std::vector<std::vector<const TradeoffPoint*>> members;
  for (const TradeoffPoint& p : points) {
    std::size_t idx = cells.size();
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].kind == p.kind && cells[i].lambda_init == p.lambda_init) {
        idx = i;
        break;
      }
    }
    if (idx == cells.size()) {
      TradeoffCell c;
      c.lambda_init = p.lambda_init;
      c.kind = p.kind;
      cells.push_back(c);
      members.emplace_back();
    }
    members[idx].push_back(&p);
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    cells[i].seeds = members[i].size();
    mean_std(members[i], &TradeoffPoint::accuracy, cells[i].accuracy_mean, cells[i].accuracy_std);
    mean_std(members[i], &TradeoffPoint::delta_dp, cells[i].delta_dp_mean, cells[i].delta_dp_std);
    mean_std(members[i], &TradeoffPoint::delta_eo, cells[i].delta_eo_mean, cells[i].delta_eo_std);
  }
  return cells;
}

std::string convergence_trials_csv(const std::vector<ConvergenceTrial>& rows) {
  std::string out = "n,trial,statistic,deviation\n";
  for (const ConvergenceTrial& row : rows)
    for (std::size_t t = 0; t < row.stats.size(); ++t)
      out += std::to_string(row.n) + "," + std::to_string(t) + "," + fmt(row.stats[t]) + "," +
             fmt(row.deviations[t]) + "\n";
  return out;
}

std::string convergence_summary_json(const std::vector<ConvergenceTrial>& rows) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const ConvergenceTrial& row : rows) {
    nlohmann::ordered_json o;
    o["n"] = row.n;
    o["trials"] = row.trials;
    o["target"] = row.target;
    o["mean"] = row.mean;
    o["median"] = row.median;
    o["q25"] = row.q25;
    o["q75"] = row.q75;
    o["epsilon"] = row.epsilon;
    o["exceed_rate"] = row.exceed_rate;
    o["bandwidth"] = row.bandwidth;
    o["stat_mean"] = row.stat_mean;
    arr.push_back(std::move(o));
  }
  return arr.dump(2) + "\n";
}

std::string tradeoff_points_csv(const std::vector<TradeoffPoint>& points) {
  std::string out = "lambda_init,kind,seed,accuracy,delta_dp,delta_eo\n";
  for (const TradeoffPoint& p : points)
    out += fmt(p.lambda_init) + "," + to_string(p.kind) + "," + std::to_string(p.seed) + "," +
           fmt(p.accuracy) + "," + fmt(p.delta_dp) + "," + fmt(p.delta_eo) + "\n";
  return out;
}

std::string tradeoff_cells_csv(const std::vector<TradeoffCell>& cells) {
  std::string out =
      "lambda_init,kind,seeds,accuracy_mean,accuracy_std,delta_dp_mean,delta_dp_std,"
      "delta_eo_mean,delta_eo_std\n";
  for (const TradeoffCell& c : cells)
    out += fmt(c.lambda_init) + "," + to_string(c.kind) + "," + std::to_string(c.seeds) + "," +
           fmt(c.accuracy_mean) + "," + fmt(c.accuracy_std) + "," + fmt(c.delta_dp_mean) + "," +
           fmt(c.delta_dp_std) + "," + fmt(c.delta_eo_mean) + "," + fmt(c.delta_eo_std) + "\n";
  return out;
}

std::string tradeoff_summary_json(const std::vector<TradeoffCell>& cells) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const TradeoffCell& c : cells) {
    nlohmann::ordered_json o;
    o["lambda_init"] = c.lambda_init;
    o["kind"] = to_string(c.kind);
    o["seeds"] = c.seeds;
    o["accuracy_mean"] = c.accuracy_mean;
    o["accuracy_std"] = c.accuracy_std;
    o["delta_dp_mean"] = c.delta_dp_mean;
    o["delta_dp_std"] = c.delta_dp_std;
    o["delta_eo_mean"] = c.delta_eo_mean;
    o["delta_eo_std"] = c.delta_eo_std;
    arr.push_back(std::move(o));
  }
  return arr.dump(2) + "\n";
}

std::string convergence_stem(const std::string& stat, bool dependent,
                             const std::vector<std::size_t>& n_grid, std::size_t trials,
                             double epsilon, std::uint64_t seed) {
  std::string desc = stat + (dependent ? "|dep|n=" : "|indep|n=");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (i > 0) desc += ",";
    desc += std::to_string(n_grid[i]);
  }
  desc += "|trials=" + std::to_string(trials) + "|eps=" + fmt(epsilon);
  return "converge_" + stat + (dependent ? "_dep_seed" : "_indep_seed") + std::to_string(seed) +
         "_" + hex16(fnv1a(desc));
}

std::string tradeoff_stem(const std::vector<double>& lambda_grid,
                          const std::vector<PenaltyKind>& kinds,
                          const std::vector<std::uint64_t>& seeds, std::uint64_t seed) {
  std::string desc = "lambda=";
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
    if (i > 0) desc += ",";
    desc += fmt(lambda_grid[i]);
  }
  desc += "|kinds=";
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (i > 0) desc += ",";
    desc += to_string(kinds[i]);
  }
  desc += "|seeds=";
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i > 0) desc += ",";
    desc += std::to_string(seeds[i]);
  }
  return "tradeoff_seed" + std::to_string(seed) + "_" + hex16(fnv1a(desc));
}

}  // namespace faircdc
