#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "faircdc/dataio.hpp"
#include "faircdc/fairness_metrics.hpp"
#include "faircdc/nn.hpp"
#include "faircdc/stats_grad.hpp"

namespace faircdc {

// Fairness penalty attached to the cross-entropy objective. Dc penalizes the
// distance covariance between the softmax outputs and the sensitive one-hot
// coding, targeting demographic parity. Cdc penalizes the conditional
// statistic given the label one-hot coding, targeting equalized odds.
enum class PenaltyKind { None, Dc, Cdc };

PenaltyKind penalty_kind_from_string(const std::string& s);
std::string to_string(PenaltyKind kind);

struct PenaltySpec {
  PenaltyKind kind = PenaltyKind::None;
  // Kernel bandwidth for the conditional statistic; 0 applies the Silverman
  // rule to each batch with r = label one-hot width.
  double fixed_bandwidth = 0.0;
};

// Lagrangian dual variable with the running epoch accumulators. The penalty
// statistics are nonnegative, so with beta >= 0 the lambda sequence never
// decreases.
struct DualState {
  double lambda = 0.0;
  double beta = 0.0;
  double epoch_penalty_sum = 0.0;
  std::size_t batch_count = 0;
};

// One dual ascent step from the batch-averaged penalty,
//   lambda <- lambda + beta * (epoch_penalty_sum / batch_count),
// with the accumulators reset. Throws if no batches were accumulated.
DualState dual_update(const DualState& dual);

struct TrainConfig {
  std::vector<std::size_t> hidden = {128, 128, 128};
  std::size_t epochs = 40;
  std::size_t batch = 1024;
  double lr = 0.1;
  double momentum = 0.9;
  double lr_decay = 10.0;
  std::vector<std::size_t> lr_milestones = {15, 30};
  PenaltySpec penalty;
  double lambda_init = 0.0;
  double beta = 0.0;
  // Optional ceiling on lambda; infinity leaves the dual variable unclamped.
  double lambda_max = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
};

// Penalty value and gradient with respect to the softmax outputs for one
// batch: dc uses dcov_grad(probs, z), cdc uses cdc_grad(probs, z, labels, h)
// with h from the bandwidth policy, none returns zeros.
GradientResult penalty_value_and_grad(const PenaltySpec& spec, const Matrix& probs,
                                      const Matrix& z, const Matrix& labels);

struct EpochStats {
  double train_loss = 0.0;    // sample-mean cross-entropy over the epoch
  double penalty_mean = 0.0;  // batch-mean penalty value over the epoch
};

// One epoch of minibatch SGD on cross-entropy plus lambda times the batch
// penalty. Rows are visited in an epoch-specific shuffled order; the last
// batch may be short. The penalty value is evaluated on every batch with at
// least two rows (the dual update needs it) and accumulated into the dual
// state, shorter batches contribute zero; its gradient enters the parameter
// update only when lambda is nonzero, so a zero-lambda penalized run
// reproduces the unpenalized trajectory bit for bit. Lambda itself is not
// touched here.
EpochStats train_epoch(Mlp& model, const Dataset& train, DualState& dual,
                       const TrainConfig& cfg, std::size_t epoch);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double penalty_mean = 0.0;
  double lambda = 0.0;  // value in effect during the epoch
  double val_accuracy = 0.0;
  double val_ddp = 0.0;
  double val_deo = 0.0;
};

struct TrainResult {
  Mlp model;
  std::vector<EpochRecord> history;
};

// Full training run: model init from the seed, epochs of train_epoch with the
// lr schedule (lr divided by lr_decay at each milestone), one dual step per
// epoch after the validation pass. Validation ddp uses positive_class;
// validation deo uses the all-classes averaging, which equals the two-class
// definition whenever every group contains every label.
TrainResult fit(const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                int positive_class = 1);

GroupedPredictions predictions(const Mlp& m, const Dataset& d);

// Accuracy and both fairness gaps of the argmax predictions on a split. Two
// class problems use the binary equalized odds averaging.
FairnessReport evaluate(const Mlp& m, const Dataset& d, int positive_class = 1);

// One JSON object per epoch, keys in the order
// epoch, train_loss, penalty_mean, lambda, val_accuracy, val_ddp, val_deo.
std::string history_jsonl(const std::vector<EpochRecord>& history);

}  // namespace faircdc
