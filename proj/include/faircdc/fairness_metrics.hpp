#pragma once

#include <string>
#include <vector>

namespace faircdc {

// Hard predictions with ground truth and a sensitive group per sample. Group
// ids must cover 0..n_groups-1; labels are class indices.
struct GroupedPredictions {
  std::vector<int> predicted;
  std::vector<int> actual;
  std::vector<int> group;
};

double accuracy(const GroupedPredictions& g);

// Demographic parity gap: the mean absolute difference of the positive
// prediction rate over all group pairs,
//   (1 / C(S,2)) sum_{i<j} | P(pred = pos | g = i) - P(pred = pos | g = j) |.
// Throws if any group in 0..S-1 is empty, naming the group.
double delta_dp(const GroupedPredictions& g, int positive_class = 1);

// Equalized odds gap. Binary mode follows the two-class definition
//   (1 / (2 C(S,2))) sum_{y in {0,1}} sum_{i<j} | P(pred = y | g = i, actual = y)
//                                               - P(pred = y | g = j, actual = y) |
// and requires every group to contain both label values. AllClasses averages
// the same per-label gaps over all C classes instead; it is an extension
// beyond the two-class definition and is reported as such.
enum class EoAveraging { Binary, AllClasses };

double delta_eo(const GroupedPredictions& g, EoAveraging mode = EoAveraging::Binary);

struct FairnessReport {
  double accuracy = 0.0;
  double delta_dp = 0.0;
  double delta_eo = 0.0;
  std::size_t n = 0;
  std::size_t n_groups = 0;
  std::string eo_mode;
  std::vector<double> group_positive_rate;
  std::string to_json() const;
};

FairnessReport fairness_report(const GroupedPredictions& g, int positive_class = 1,
                               EoAveraging mode = EoAveraging::Binary);

}  // namespace faircdc
