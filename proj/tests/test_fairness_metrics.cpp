#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <stdexcept>
#include <vector>

#include "faircdc/fairness_metrics.hpp"

using namespace faircdc;

namespace {

// Builds predictions realizing given per-group positive rates out of 10
// samples per group.
GroupedPredictions with_rates(const std::vector<double>& rates) {
  GroupedPredictions g;
  for (std::size_t grp = 0; grp < rates.size(); ++grp) {
    const int pos = static_cast<int>(rates[grp] * 10.0 + 0.5);
    for (int i = 0; i < 10; ++i) {
      g.predicted.push_back(i < pos ? 1 : 0);
      g.actual.push_back(i % 2);
      g.group.push_back(static_cast<int>(grp));
    }
  }
  return g;
}

}  // namespace

TEST_CASE("accuracy") {
  GroupedPredictions g;
  g.predicted = {1, 0, 1, 1};
  g.actual = {1, 0, 0, 1};
  g.group = {0, 0, 1, 1};
  CHECK(accuracy(g) == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("demographic parity gap over three groups") {
  GroupedPredictions g = with_rates({0.9, 0.5, 0.1});
  // Pairwise gaps 0.4, 0.8, 0.4 averaged over 3 pairs.
  CHECK(delta_dp(g) == doctest::Approx(0.5333333333333333).epsilon(1e-12));
}

TEST_CASE("demographic parity gap is zero for identical rates") {
  GroupedPredictions g = with_rates({0.6, 0.6, 0.6, 0.6});
  CHECK(delta_dp(g) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("demographic parity is invariant to group relabeling") {
  GroupedPredictions g = with_rates({0.9, 0.2});
  GroupedPredictions swapped = g;
  for (int& grp : swapped.group) grp = 1 - grp;
  CHECK(delta_dp(g) == doctest::Approx(delta_dp(swapped)).epsilon(1e-15));
}

TEST_CASE("delta_dp errors on an empty referenced group") {
  GroupedPredictions g;
  g.predicted = {1, 0};
  g.actual = {1, 0};
  g.group = {0, 2};  // group 1 has no samples
  CHECK_THROWS_WITH_AS(delta_dp(g), doctest::Contains("group 1"), std::invalid_argument);
}

TEST_CASE("equalized odds gap on the two-group worked example") {
  // Group 0: recall(y=1) = 0.8, specificity(y=0) = 0.9.
  // Group 1: recall(y=1) = 0.6, specificity(y=0) = 0.7.
  GroupedPredictions g;
  auto add = [&](int grp, int actual, int pred, int copies) {
    for (int i = 0; i < copies; ++i) {
      g.group.push_back(grp);
      g.actual.push_back(actual);
      g.predicted.push_back(pred);
    }
  };
  add(0, 1, 1, 8);
  add(0, 1, 0, 2);
  add(0, 0, 0, 9);
  add(0, 0, 1, 1);
  add(1, 1, 1, 6);
  add(1, 1, 0, 4);
  add(1, 0, 0, 7);
  add(1, 0, 1, 3);
  CHECK(delta_eo(g) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("equalized odds gap vanishes for a perfect classifier") {
  GroupedPredictions g;
  g.predicted = {0, 1, 0, 1, 1, 0};
  g.actual = g.predicted;
  g.group = {0, 0, 1, 1, 0, 1};
  CHECK(delta_eo(g) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(accuracy(g) == 1.0);
}

TEST_CASE("binary equalized odds requires both labels in every group") {
  GroupedPredictions g;
  g.predicted = {1, 0, 1, 1};
  g.actual = {1, 0, 1, 1};  // group 1 has no actual = 0
  g.group = {0, 0, 1, 1};
  CHECK_THROWS_WITH_AS(delta_eo(g), doctest::Contains("group 1"), std::invalid_argument);
}

TEST_CASE("binary equalized odds rejects more than two label values") {
  GroupedPredictions g;
  g.predicted = {0, 1, 2, 0, 1, 2};
  g.actual = {0, 1, 2, 0, 1, 2};
  g.group = {0, 0, 0, 1, 1, 1};
  CHECK_THROWS_AS(delta_eo(g, EoAveraging::Binary), std::invalid_argument);
  CHECK(delta_eo(g, EoAveraging::AllClasses) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("report bundles the metrics") {
  GroupedPredictions g = with_rates({0.9, 0.5, 0.1});
  FairnessReport r = fairness_report(g);
  CHECK(r.delta_dp == doctest::Approx(0.5333333333333333).epsilon(1e-12));
  CHECK(r.n == 30);
  CHECK(r.n_groups == 3);
  CHECK(r.group_positive_rate.size() == 3);
  CHECK(r.group_positive_rate[0] == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(r.eo_mode == "binary");
  CHECK(r.to_json().find("delta_dp") != std::string::npos);
}

TEST_CASE("mismatched vector lengths are rejected") {
  GroupedPredictions g;
  g.predicted = {1, 0};
  g.actual = {1};
  g.group = {0, 0};
  CHECK_THROWS_AS(accuracy(g), std::invalid_argument);
}
