#include "faircdc/nn.hpp"

#include <json.hpp>

#include <cfloat>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace faircdc {

Mlp Mlp::init(std::size_t input_dim, const std::vector<std::size_t>& hidden,
              std::size_t n_classes, Rng& rng) {
  if (input_dim == 0) throw std::invalid_argument("Mlp::init: input_dim must be positive");
  if (n_classes < 2) throw std::invalid_argument("Mlp::init: need at least two classes");
  std::vector<std::size_t> dims;
  dims.push_back(input_dim);
  for (std::size_t h : hidden) {
    if (h == 0) throw std::invalid_argument("Mlp::init: hidden width must be positive");
    dims.push_back(h);
  }
  dims.push_back(n_classes);

  Mlp m;
  m.layers.resize(dims.size() - 1);
  for (std::size_t li = 0; li + 1 < dims.size(); ++li) {
    const std::size_t fan_in = dims[li], fan_out = dims[li + 1];
    DenseLayer& layer = m.layers[li];
    layer.w = Matrix(fan_out, fan_in);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t o = 0; o < fan_out; ++o)
      for (std::size_t i = 0; i < fan_in; ++i) layer.w(o, i) = rng.uniform(-limit, limit);
    layer.b.assign(fan_out, 0.0);
    layer.vw = Matrix(fan_out, fan_in, 0.0);
    layer.vb.assign(fan_out, 0.0);
  }
  return m;
}

std::size_t Mlp::input_dim() const {
  return layers.empty() ? 0 : layers.front().w.cols();
}

std::size_t Mlp::n_classes() const {
  return layers.empty() ? 0 : layers.back().w.rows();
}

Matrix softmax(const Matrix& logits) {
  const std::size_t n = logits.rows(), c = logits.cols();
  Matrix p(n, c);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const double* zi = logits.row(i);
    double* pi = p.row(i);
    double mx = zi[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, zi[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      pi[j] = std::exp(zi[j] - mx);
      sum += pi[j];
    }
    for (std::size_t j = 0; j < c; ++j) pi[j] /= sum;
  }
  return p;
}

namespace {

// z = x * w^T + b for one dense layer.
Matrix dense(const Matrix& x, const DenseLayer& layer) {
  const std::size_t n = x.rows(), out = layer.w.rows(), d = layer.w.cols();
  Matrix z(n, out);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x.row(i);
    double* zi = z.row(i);
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = layer.w.row(o);
      double acc = layer.b[o];
      for (std::size_t k = 0; k < d; ++k) acc += xi[k] * wo[k];
      zi[o] = acc;
    }
  }
  return z;
}

}  // namespace

ForwardTrace forward(const Mlp& m, const Matrix& x) {
  if (m.layers.empty()) throw std::invalid_argument("forward: model has no layers");
  if (x.cols() != m.input_dim())
    throw std::invalid_argument("forward: input has " + std::to_string(x.cols()) +
                                " features, model expects " + std::to_string(m.input_dim()));
  ForwardTrace t;
  t.inputs.reserve(m.layers.size());
  t.inputs.push_back(x);
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    Matrix z = dense(t.inputs.back(), m.layers[li]);
    if (li + 1 < m.layers.size()) {
      for (std::size_t a = 0; a < z.size(); ++a) z.data()[a] = std::max(z.data()[a], 0.0);
      t.inputs.push_back(std::move(z));
    } else {
      t.logits = std::move(z);
    }
  }
  t.probs = softmax(t.logits);
  return t;
}

Gradients backward(const Mlp& m, const ForwardTrace& t, const Matrix& grad_logits) {
  const std::size_t nlayers = m.layers.size();
  if (t.inputs.size() != nlayers)
    throw std::invalid_argument("backward: trace does not match the model");
  if (grad_logits.rows() != t.inputs[0].rows() || grad_logits.cols() != m.n_classes())
    throw std::invalid_argument("backward: logit gradient shape mismatch");

  Gradients g;
  g.dw.resize(nlayers);
  g.db.resize(nlayers);
  Matrix delta = grad_logits;
  for (std::size_t li = nlayers; li-- > 0;) {
    const Matrix& in = t.inputs[li];
    const std::size_t n = in.rows(), out = m.layers[li].w.rows(), d = m.layers[li].w.cols();

    g.dw[li] = Matrix(out, d, 0.0);
    g.db[li].assign(out, 0.0);
#pragma omp parallel for schedule(static)
    for (std::size_t o = 0; o < out; ++o) {
      double* dwo = g.dw[li].row(o);
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double c = delta(i, o);
        acc += c;
        const double* xi = in.row(i);
        for (std::size_t k = 0; k < d; ++k) dwo[k] += c * xi[k];
      }
      g.db[li][o] = acc;
    }

    if (li > 0) {
      Matrix dx(n, d, 0.0);
#pragma omp parallel for schedule(static)
      for (std::size_t i = 0; i < n; ++i) {
        double* dxi = dx.row(i);
        const double* di = delta.row(i);
        for (std::size_t o = 0; o < out; ++o) {
          const double c = di[o];
          const double* wo = m.layers[li].w.row(o);
          for (std::size_t k = 0; k < d; ++k) dxi[k] += c * wo[k];
        }
        // relu mask from the stored activation
        const double* xi = in.row(i);
        for (std::size_t k = 0; k < d; ++k)
          if (xi[k] <= 0.0) dxi[k] = 0.0;
      }
      delta = std::move(dx);
    }
  }
  return g;
}

Matrix softmax_grad_to_logits(const Matrix& probs, const Matrix& grad_probs) {
  if (probs.rows() != grad_probs.rows() || probs.cols() != grad_probs.cols())
    throw std::invalid_argument("softmax_grad_to_logits: shape mismatch");
  const std::size_t n = probs.rows(), c = probs.cols();
  Matrix out(n, c);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const double* pi = probs.row(i);
    const double* gi = grad_probs.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < c; ++j) dot += pi[j] * gi[j];
    double* oi = out.row(i);
    for (std::size_t j = 0; j < c; ++j) oi[j] = pi[j] * (gi[j] - dot);
  }
  return out;
}

CeResult softmax_cross_entropy(const Matrix& probs, const std::vector<int>& labels) {
  const std::size_t n = probs.rows(), c = probs.cols();
  if (labels.size() != n)
    throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(n) + " rows");
  CeResult result;
  result.grad_logits = Matrix(n, c);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(y) +
                                  " out of range at row " + std::to_string(i));
    loss -= std::log(std::max(probs(i, static_cast<std::size_t>(y)), DBL_MIN));
    for (std::size_t j = 0; j < c; ++j)
      result.grad_logits(i, j) =
          (probs(i, j) - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) / static_cast<double>(n);
  }
  result.loss = loss / static_cast<double>(n);
  return result;
}

void sgd_momentum_step(Mlp& m, const Gradients& g, double lr, double momentum) {
  if (g.dw.size() != m.layers.size() || g.db.size() != m.layers.size())
    throw std::invalid_argument("sgd_momentum_step: gradient does not match the model");
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    DenseLayer& layer = m.layers[li];
    if (layer.vw.rows() == 0) layer.vw = Matrix(layer.w.rows(), layer.w.cols(), 0.0);
    if (layer.vb.size() != layer.b.size()) layer.vb.assign(layer.b.size(), 0.0);
    for (std::size_t a = 0; a < layer.w.size(); ++a) {
      layer.vw.data()[a] = momentum * layer.vw.data()[a] + g.dw[li].data()[a];
      layer.w.data()[a] -= lr * layer.vw.data()[a];
    }
    for (std::size_t o = 0; o < layer.b.size(); ++o) {
      layer.vb[o] = momentum * layer.vb[o] + g.db[li][o];
      layer.b[o] -= lr * layer.vb[o];
    }
  }
}

std::vector<int> predict(const Mlp& m, const Matrix& x) {
  ForwardTrace t = forward(m, x);
  std::vector<int> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double* zi = t.logits.row(i);
    int best = 0;
    for (std::size_t j = 1; j < t.logits.cols(); ++j)
      if (zi[j] > zi[best]) best = static_cast<int>(j);
    out[i] = best;
  }
  return out;
}

void save_checkpoint(const Mlp& m, const std::string& path) {
  nlohmann::json j;
  j["format"] = "faircdc-mlp";
  j["version"] = 1;
  j["layers"] = nlohmann::json::array();
  for (const DenseLayer& layer : m.layers) {
    nlohmann::json l;
    l["in"] = layer.w.cols();
    l["out"] = layer.w.rows();
    l["w"] = std::vector<double>(layer.w.data(), layer.w.data() + layer.w.size());
    l["b"] = layer.b;
    j["layers"].push_back(std::move(l));
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_checkpoint: cannot write " + path);
  f << j.dump(1) << "\n";
}

Mlp load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(f);
  if (j.value("format", "") != std::string("faircdc-mlp"))
    throw std::runtime_error("load_checkpoint: " + path + " is not a model checkpoint");
  if (j.value("version", 0) != 1)
    throw std::runtime_error("load_checkpoint: unsupported checkpoint version in " + path);

  Mlp m;
  for (const auto& l : j.at("layers")) {
    DenseLayer layer;
    const std::size_t in = l.at("in").get<std::size_t>();
    const std::size_t out = l.at("out").get<std::size_t>();
    const std::vector<double> w = l.at("w").get<std::vector<double>>();
    layer.b = l.at("b").get<std::vector<double>>();
    if (w.size() != in * out || layer.b.size() != out)
      throw std::runtime_error("load_checkpoint: inconsistent layer shape in " + path);
    layer.w = Matrix(out, in);
    std::copy(w.begin(), w.end(), layer.w.data());
    layer.vw = Matrix(out, in, 0.0);
    layer.vb.assign(out, 0.0);
    m.layers.push_back(std::move(layer));
  }
  if (m.layers.empty()) throw std::runtime_error("load_checkpoint: no layers in " + path);
  return m;
}

}  // namespace faircdc
