#include "faircdc/fairness_metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace faircdc {

namespace {

void check_lengths(const GroupedPredictions& g) {
  if (g.predicted.size() != g.actual.size() || g.predicted.size() != g.group.size())
    throw std::invalid_argument("grouped predictions: predicted/actual/group lengths differ");
  if (g.predicted.empty()) throw std::invalid_argument("grouped predictions: empty");
  for (int grp : g.group)
    if (grp < 0) throw std::invalid_argument("grouped predictions: negative group id");
}

std::size_t group_count(const GroupedPredictions& g) {
  int mx = 0;
  for (int grp : g.group) mx = std::max(mx, grp);
  return static_cast<std::size_t>(mx) + 1;
}

// Mean absolute pairwise difference of per-group values.
double mean_pairwise_gap(const std::vector<double>& v) {
  const std::size_t s = v.size();
  if (s < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = i + 1; j < s; ++j) total += std::abs(v[i] - v[j]);
  return total / (0.5 * static_cast<double>(s) * static_cast<double>(s - 1));
}

}  // namespace

double accuracy(const GroupedPredictions& g) {
  check_lengths(g);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < g.predicted.size(); ++i) correct += g.predicted[i] == g.actual[i];
  return static_cast<double>(correct) / static_cast<double>(g.predicted.size());
}

double delta_dp(const GroupedPredictions& g, int positive_class) {
  check_lengths(g);
  const std::size_t s = group_count(g);
  std::vector<double> pos(s, 0.0), count(s, 0.0);
  for (std::size_t i = 0; i < g.predicted.size(); ++i) {
    const auto grp = static_cast<std::size_t>(g.group[i]);
    count[grp] += 1.0;
    pos[grp] += g.predicted[i] == positive_class ? 1.0 : 0.0;
  }
  std::vector<double> rate(s);
  for (std::size_t grp = 0; grp < s; ++grp) {
    if (count[grp] == 0.0)
      throw std::invalid_argument("delta_dp: group " + std::to_string(grp) + " has no samples");
    rate[grp] = pos[grp] / count[grp];
  }
  return mean_pairwise_gap(rate);
}

double delta_eo(const GroupedPredictions& g, EoAveraging mode) {
  check_lengths(g);
  const std::size_t s = group_count(g);
  int max_label = 0;
  for (int y : g.actual) {
    if (y < 0) throw std::invalid_argument("delta_eo: negative label");
    max_label = std::max(max_label, y);
  }
  for (int y : g.predicted) max_label = std::max(max_label, y);
  const std::size_t c = static_cast<std::size_t>(max_label) + 1;
  if (mode == EoAveraging::Binary && c > 2)
    throw std::invalid_argument("delta_eo: binary mode needs labels in {0,1}, saw " +
                                std::to_string(c) + " classes");
  const std::size_t nclasses = mode == EoAveraging::Binary ? 2 : c;

  // hit(grp, y) = count(pred == y, actual == y), tot(grp, y) = count(actual == y).
  std::vector<double> hit(s * nclasses, 0.0), tot(s * nclasses, 0.0);
  for (std::size_t i = 0; i < g.predicted.size(); ++i) {
    const auto grp = static_cast<std::size_t>(g.group[i]);
    const auto y = static_cast<std::size_t>(g.actual[i]);
    tot[grp * nclasses + y] += 1.0;
    if (g.predicted[i] == g.actual[i]) hit[grp * nclasses + y] += 1.0;
  }

  double total = 0.0;
  for (std::size_t y = 0; y < nclasses; ++y) {
    std::vector<double> rate(s);
    for (std::size_t grp = 0; grp < s; ++grp) {
      if (tot[grp * nclasses + y] == 0.0) {
        if (mode == EoAveraging::Binary)
          throw std::invalid_argument("delta_eo: group " + std::to_string(grp) +
                                      " has no samples with label " + std::to_string(y));
        rate[grp] = 0.0;
        continue;
      }
      rate[grp] = hit[grp * nclasses + y] / tot[grp * nclasses + y];
    }
    total += mean_pairwise_gap(rate);
  }
  return total / static_cast<double>(nclasses);
}

std::string FairnessReport::to_json() const {
  nlohmann::json j;
  j["accuracy"] = accuracy;
  j["delta_dp"] = delta_dp;
  j["delta_eo"] = delta_eo;
  j["n"] = n;
  j["n_groups"] = n_groups;
  j["eo_mode"] = eo_mode;
  j["group_positive_rate"] = group_positive_rate;
  return j.dump(2);
}

FairnessReport fairness_report(const GroupedPredictions& g, int positive_class,
                               EoAveraging mode) {
  check_lengths(g);
  FairnessReport r;
  r.accuracy = accuracy(g);
  r.delta_dp = delta_dp(g, positive_class);
  r.delta_eo = delta_eo(g, mode);
  r.n = g.predicted.size();
  r.n_groups = group_count(g);
  r.eo_mode = mode == EoAveraging::Binary ? "binary" : "all_classes";

  std::vector<double> pos(r.n_groups, 0.0), count(r.n_groups, 0.0);
  for (std::size_t i = 0; i < g.predicted.size(); ++i) {
    const auto grp = static_cast<std::size_t>(g.group[i]);
    count[grp] += 1.0;
    pos[grp] += g.predicted[i] == positive_class ? 1.0 : 0.0;
  }
  r.group_positive_rate.resize(r.n_groups);
  for (std::size_t grp = 0; grp < r.n_groups; ++grp)
    r.group_positive_rate[grp] = pos[grp] / count[grp];
  return r;
}

}  // namespace faircdc
