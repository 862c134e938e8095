#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "faircdc/matrix.hpp"
#include "faircdc/rng.hpp"

namespace faircdc {

struct DenseLayer {
  Matrix w;               // out x in
  std::vector<double> b;  // out
  Matrix vw;              // momentum buffers
  std::vector<double> vb;
};

// Fully connected network with relu hidden activations and a softmax head.
struct Mlp {
  std::vector<DenseLayer> layers;

  // Xavier-uniform weights (limit sqrt(6 / (fan_in + fan_out))), zero biases.
  // Weights are drawn row by row so a given seed always produces the same
  // parameters.
  static Mlp init(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                  std::size_t n_classes, Rng& rng);

  std::size_t input_dim() const;
  std::size_t n_classes() const;
};

struct ForwardTrace {
  std::vector<Matrix> inputs;  // inputs[i] feeds layers[i]; inputs[0] is the batch
  Matrix logits;
  Matrix probs;
};

// Row-stable softmax (max subtraction per row).
Matrix softmax(const Matrix& logits);

ForwardTrace forward(const Mlp& m, const Matrix& x);

struct Gradients {
  std::vector<Matrix> dw;
  std::vector<std::vector<double>> db;
};

// Exact reverse pass from a gradient with respect to the logits.
Gradients backward(const Mlp& m, const ForwardTrace& t, const Matrix& grad_logits);

// Maps a gradient with respect to the softmax outputs into logit space,
// rowwise g_logit = p .* g - p (p . g). Composite losses attach penalty
// gradients here.
Matrix softmax_grad_to_logits(const Matrix& probs, const Matrix& grad_probs);

struct CeResult {
  double loss = 0.0;
  Matrix grad_logits;  // (probs - onehot) / n
};

// Mean cross-entropy of softmax outputs against integer labels. The log is
// clamped at the smallest positive double so the loss stays finite for
// saturated rows.
CeResult softmax_cross_entropy(const Matrix& probs, const std::vector<int>& labels);

// Classic momentum: v <- momentum * v + g; theta <- theta - lr * v.
void sgd_momentum_step(Mlp& m, const Gradients& g, double lr, double momentum);

// Argmax class per row; ties resolve to the lowest index.
std::vector<int> predict(const Mlp& m, const Matrix& x);

// Versioned JSON container with layer shapes and parameters. Momentum
// buffers are not part of the checkpoint.
void save_checkpoint(const Mlp& m, const std::string& path);
Mlp load_checkpoint(const std::string& path);

}  // namespace faircdc
