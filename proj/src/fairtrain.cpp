#include "faircdc/fairtrain.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "faircdc/stats.hpp"

namespace faircdc {

PenaltyKind penalty_kind_from_string(const std::string& s) {
  if (s == "none") return PenaltyKind::None;
  if (s == "dc") return PenaltyKind::Dc;
  if (s == "cdc") return PenaltyKind::Cdc;
  throw std::invalid_argument("unknown penalty kind \"" + s + "\"");
}

std::string to_string(PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::None: return "none";
    case PenaltyKind::Dc: return "dc";
    case PenaltyKind::Cdc: return "cdc";
  }
  return "none";
}

DualState dual_update(const DualState& dual) {
  if (dual.batch_count == 0)
    throw std::invalid_argument("dual_update: no batches accumulated");
  DualState next = dual;
  next.lambda = dual.lambda +
                dual.beta * (dual.epoch_penalty_sum / static_cast<double>(dual.batch_count));
  next.epoch_penalty_sum = 0.0;
  next.batch_count = 0;
  return next;
}

GradientResult penalty_value_and_grad(const PenaltySpec& spec, const Matrix& probs,
                                      const Matrix& z, const Matrix& labels) {
  if (spec.kind == PenaltyKind::None)
    return GradientResult{Matrix(probs.rows(), probs.cols()), 0.0};
  check_same_rows(probs, z, "probs", "z");
  if (spec.kind == PenaltyKind::Dc) return dcov_grad(probs, z);
  if (labels.rows() != probs.rows() || labels.cols() == 0)
    throw std::invalid_argument("cdc penalty needs a conditioning label row per sample");
  const double h = spec.fixed_bandwidth > 0.0
                       ? spec.fixed_bandwidth
                       : silverman_bandwidth(probs.rows(), labels.cols());
  return cdc_grad(probs, z, labels, h);
}

namespace {

void gather_batch(const Dataset& d, const std::vector<std::size_t>& order, std::size_t start,
                  std::size_t bn, Matrix& x, std::vector<int>& labels, Matrix& z, Matrix& u) {
  x = Matrix(bn, d.x.cols());
  z = Matrix(bn, d.n_groups);
  u = Matrix(bn, d.n_classes);
  labels.resize(bn);
  for (std::size_t i = 0; i < bn; ++i) {
    const std::size_t r = order[start + i];
    for (std::size_t j = 0; j < d.x.cols(); ++j) x(i, j) = d.x(r, j);
    for (std::size_t j = 0; j < d.n_groups; ++j) z(i, j) = d.group_onehot(r, j);
    for (std::size_t j = 0; j < d.n_classes; ++j) u(i, j) = d.label_onehot(r, j);
    labels[i] = d.labels[r];
  }
}

double effective_lr(const TrainConfig& cfg, std::size_t epoch) {
  double lr = cfg.lr;
  for (std::size_t m : cfg.lr_milestones)
    if (epoch >= m) lr /= cfg.lr_decay;
  return lr;
}

}  // namespace

EpochStats train_epoch(Mlp& model, const Dataset& train, DualState& dual,
                       const TrainConfig& cfg, std::size_t epoch) {
  const std::size_t n = train.n();
  if (n == 0) throw std::invalid_argument("train_epoch: empty dataset");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(mix_seed(cfg.seed, 0x5E9 + epoch));
  shuffle_rng.shuffle(order);

  const double lr = effective_lr(cfg, epoch);
  double loss_sum = 0.0;
  double penalty_sum = 0.0;
  std::size_t batches = 0;

  Matrix bx, bz, bu;
  std::vector<int> blabels;
  for (std::size_t start = 0; start < n; start += cfg.batch) {
    const std::size_t bn = std::min(cfg.batch, n - start);
    gather_batch(train, order, start, bn, bx, blabels, bz, bu);

    const ForwardTrace trace = forward(model, bx);
    CeResult ce = softmax_cross_entropy(trace.probs, blabels);
    Matrix grad_logits = std::move(ce.grad_logits);

    double pval = 0.0;
    if (cfg.penalty.kind != PenaltyKind::None && bn >= 2) {
      const GradientResult pr = penalty_value_and_grad(cfg.penalty, trace.probs, bz, bu);
      pval = pr.value;
      if (dual.lambda != 0.0) {
        const Matrix add = softmax_grad_to_logits(trace.probs, pr.grad);
        for (std::size_t i = 0; i < grad_logits.size(); ++i)
          grad_logits.data()[i] += dual.lambda * add.data()[i];
      }
    }
    penalty_sum += pval;
    ++batches;
    dual.epoch_penalty_sum += pval;
    ++dual.batch_count;
    loss_sum += ce.loss * static_cast<double>(bn);

    const Gradients grads = backward(model, trace, grad_logits);
    sgd_momentum_step(model, grads, lr, cfg.momentum);
  }

  return EpochStats{loss_sum / static_cast<double>(n),
                    penalty_sum / static_cast<double>(batches)};
}

namespace {

void validate(const Dataset& train, const TrainConfig& cfg) {
  if (train.n() == 0) throw std::invalid_argument("fit: empty training split");
  if (cfg.batch < 2) throw std::invalid_argument("fit: batch size must be at least 2");
  if (cfg.lambda_init < 0.0) throw std::invalid_argument("fit: lambda_init must be nonnegative");
  if (cfg.beta < 0.0) throw std::invalid_argument("fit: beta must be nonnegative");
  if (cfg.lr <= 0.0) throw std::invalid_argument("fit: lr must be positive");
  if (cfg.lr_decay <= 0.0) throw std::invalid_argument("fit: lr_decay must be positive");
  if (train.n_classes < 2) throw std::invalid_argument("fit: need at least two classes");
}

}  // namespace

TrainResult fit(const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                int positive_class) {
  validate(train, cfg);

  Rng init_rng(mix_seed(cfg.seed, 0x11D));
  TrainResult out;
  out.model = Mlp::init(train.x.cols(), cfg.hidden, train.n_classes, init_rng);

  DualState dual{cfg.lambda_init, cfg.beta, 0.0, 0};
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const EpochStats st = train_epoch(out.model, train, dual, cfg, epoch);

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = st.train_loss;
    rec.penalty_mean = st.penalty_mean;
    rec.lambda = dual.lambda;
    if (val.n() > 0) {
      const GroupedPredictions g = predictions(out.model, val);
      rec.val_accuracy = accuracy(g);
      rec.val_ddp = delta_dp(g, positive_class);
      rec.val_deo = delta_eo(g, EoAveraging::AllClasses);
    }
    out.history.push_back(rec);

    dual = dual_update(dual);
    if (dual.lambda > cfg.lambda_max) dual.lambda = cfg.lambda_max;
  }
  return out;
}

GroupedPredictions predictions(const Mlp& m, const Dataset& d) {
  GroupedPredictions g;
  g.predicted = predict(m, d.x);
  g.actual = d.labels;
  g.group = d.groups;
  return g;
}

FairnessReport evaluate(const Mlp& m, const Dataset& d, int positive_class) {
  if (d.n() == 0) throw std::invalid_argument("evaluate: empty split");
  const EoAveraging mode =
      d.n_classes == 2 ? EoAveraging::Binary : EoAveraging::AllClasses;
  return fairness_report(predictions(m, d), positive_class, mode);
}

std::string history_jsonl(const std::vector<EpochRecord>& history) {
  std::string out;
  for (const EpochRecord& r : history) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["train_loss"] = r.train_loss;
    j["penalty_mean"] = r.penalty_mean;
    j["lambda"] = r.lambda;
    j["val_accuracy"] = r.val_accuracy;
    j["val_ddp"] = r.val_ddp;
    j["val_deo"] = r.val_deo;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace faircdc
