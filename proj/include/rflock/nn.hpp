#ifndef RFLOCK_NN_HPP
#define RFLOCK_NN_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "rflock/rng.hpp"
#include "rflock/types.hpp"

// Small dense networks with hand-written reverse passes. Batches are stored
// column-wise: an input of width `in` and batch B is an (in × B) matrix.

namespace rflock::nn {

template <typename Scalar>
struct Param {
  using Matrix = typename eigen_types<Scalar>::Matrix;
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix m;  // Adam first moment
  Matrix v;  // Adam second moment

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)),
        value(Matrix::Zero(rows, cols)),
        grad(Matrix::Zero(rows, cols)),
        m(Matrix::Zero(rows, cols)),
        v(Matrix::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

template <typename Scalar>
using ParamList = std::vector<Param<Scalar>*>;

/// U(−1/√fan_in, 1/√fan_in).
template <typename Scalar>
void init_uniform_fan_in(Param<Scalar>& p, Eigen::Index fan_in, CounterRng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(fan_in, 1)));
  for (Eigen::Index k = 0; k < p.value.size(); ++k)
    p.value.data()[k] = Scalar((2.0 * uniform01(rng) - 1.0) * bound);
}

template <typename Scalar>
std::size_t param_count(const ParamList<Scalar>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += static_cast<std::size_t>(p->size());
  return n;
}

template <typename Scalar>
typename eigen_types<Scalar>::Vector flatten_values(const ParamList<Scalar>& params) {
  typename eigen_types<Scalar>::Vector out(static_cast<Eigen::Index>(param_count(params)));
  Eigen::Index o = 0;
  for (const auto* p : params) {
    out.segment(o, p->size()) = p->value.reshaped();
    o += p->size();
  }
  return out;
}

template <typename Scalar>
typename eigen_types<Scalar>::Vector flatten_grads(const ParamList<Scalar>& params) {
  typename eigen_types<Scalar>::Vector out(static_cast<Eigen::Index>(param_count(params)));
  Eigen::Index o = 0;
  for (const auto* p : params) {
    out.segment(o, p->size()) = p->grad.reshaped();
    o += p->size();
  }
  return out;
}

template <typename Scalar>
void assign_values(const ParamList<Scalar>& params,
                   const typename eigen_types<Scalar>::Vector& flat) {
  Eigen::Index o = 0;
  for (auto* p : params) {
    p->value.reshaped() = flat.segment(o, p->size());
    o += p->size();
  }
}

template <typename Scalar>
void zero_grads(const ParamList<Scalar>& params) {
  for (auto* p : params) p->zero_grad();
}

template <typename Scalar>
bool grads_finite(const ParamList<Scalar>& params) {
  for (const auto* p : params)
    if (!p->grad.allFinite()) return false;
  return true;
}

/// y = W x + b.
template <typename Scalar>
class Dense {
 public:
  using Matrix = typename eigen_types<Scalar>::Matrix;

  Dense() = default;
  Dense(const std::string& name, Eigen::Index in, Eigen::Index out)
      : weight_(name + ".W", out, in), bias_(name + ".b", out, 1) {}

  void init(CounterRng& rng) {
    init_uniform_fan_in(weight_, in_dim(), rng);
    init_uniform_fan_in(bias_, in_dim(), rng);
  }

  Eigen::Index in_dim() const { return weight_.value.cols(); }
  Eigen::Index out_dim() const { return weight_.value.rows(); }

  Matrix forward(const Matrix& x) const {
    Matrix y = weight_.value * x;
    y.colwise() += bias_.value.col(0);
    return y;
  }

  /// Accumulates parameter gradients and returns ∂/∂x.
  Matrix backward(const Matrix& x, const Matrix& dy) {
    weight_.grad.noalias() += dy * x.transpose();
    bias_.grad.col(0) += dy.rowwise().sum();
    return weight_.value.transpose() * dy;
  }

  void collect(ParamList<Scalar>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  Param<Scalar>& weight() { return weight_; }
  Param<Scalar>& bias() { return bias_; }
  const Param<Scalar>& weight() const { return weight_; }
  const Param<Scalar>& bias() const { return bias_; }

 private:
  Param<Scalar> weight_;
  Param<Scalar> bias_;
};

/// ReLU on hidden layers; the last layer is linear unless relu_output.
template <typename Scalar>
class Mlp {
 public:
  using Matrix = typename eigen_types<Scalar>::Matrix;

  struct Cache {
    std::vector<Matrix> inputs;  // input of each layer
    std::vector<Matrix> pre;     // pre-activation of each layer
  };

  Mlp() = default;
  Mlp(const std::string& name, Eigen::Index in, const std::vector<int>& widths,
      bool relu_output)
      : relu_output_(relu_output) {
    Eigen::Index prev = in;
    for (std::size_t l = 0; l < widths.size(); ++l) {
      layers_.emplace_back(name + "." + std::to_string(l), prev, widths[l]);
      prev = widths[l];
    }
  }

  void init(CounterRng& rng) {
    for (auto& l : layers_) l.init(rng);
  }

  bool empty() const { return layers_.empty(); }
  Eigen::Index in_dim() const { return layers_.front().in_dim(); }
  Eigen::Index out_dim() const { return layers_.back().out_dim(); }
  std::vector<Dense<Scalar>>& layers() { return layers_; }

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const {
    Matrix h = x;
    if (cache) {
      cache->inputs.clear();
      cache->pre.clear();
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix z = layers_[l].forward(h);
      if (cache) {
        cache->inputs.push_back(std::move(h));
        cache->pre.push_back(z);
      }
      h = activates(l) ? Matrix(z.cwiseMax(Scalar(0))) : z;
    }
    return h;
  }

  Matrix backward(const Cache& cache, const Matrix& dy) {
    Matrix g = dy;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      if (activates(l))
        g = (cache.pre[l].array() > Scalar(0)).select(g, Scalar(0));
      g = layers_[l].backward(cache.inputs[l], g);
    }
    return g;
  }

  void collect(ParamList<Scalar>& out) {
    for (auto& l : layers_) l.collect(out);
  }

 private:
  bool activates(std::size_t l) const { return l + 1 < layers_.size() || relu_output_; }

  std::vector<Dense<Scalar>> layers_;
  bool relu_output_ = false;
};

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return x >= Scalar(0) ? Scalar(1) / (Scalar(1) + std::exp(-x))
                        : std::exp(x) / (Scalar(1) + std::exp(x));
}

/// Single-layer LSTM (gate order i, f, g, o) returning the final hidden
/// state. Inputs are data, so the reverse pass only produces parameter
/// gradients.
template <typename Scalar>
class Lstm {
 public:
  using Matrix = typename eigen_types<Scalar>::Matrix;

  struct Cache {
    std::vector<Matrix> x, h, c;            // h[0], c[0] are the zero state
    std::vector<Matrix> i, f, g, o;
  };

  Lstm() = default;
  Lstm(const std::string& name, Eigen::Index in, Eigen::Index hidden)
      : wx_(name + ".Wx", 4 * hidden, in),
        wh_(name + ".Wh", 4 * hidden, hidden),
        b_(name + ".b", 4 * hidden, 1) {}

  void init(CounterRng& rng) {
    init_uniform_fan_in(wx_, hidden(), rng);
    init_uniform_fan_in(wh_, hidden(), rng);
    init_uniform_fan_in(b_, hidden(), rng);
  }

  Eigen::Index hidden() const { return wh_.value.cols(); }
  Eigen::Index in_dim() const { return wx_.value.cols(); }

  Matrix forward(const std::vector<Matrix>& xs, Cache* cache = nullptr) const {
    const Eigen::Index hd = hidden();
    const Eigen::Index batch = xs.empty() ? 1 : xs.front().cols();
    Matrix h = Matrix::Zero(hd, batch);
    Matrix c = Matrix::Zero(hd, batch);
    if (cache) {
      *cache = Cache{};
      cache->h.push_back(h);
      cache->c.push_back(c);
    }
    for (const auto& x : xs) {
      Matrix z = wx_.value * x + wh_.value * h;
      z.colwise() += b_.value.col(0);
      Matrix ig = z.topRows(hd).unaryExpr([](Scalar v) { return sigmoid(v); });
      Matrix fg = z.middleRows(hd, hd).unaryExpr([](Scalar v) { return sigmoid(v); });
      Matrix gg = z.middleRows(2 * hd, hd).array().tanh();
      Matrix og = z.bottomRows(hd).unaryExpr([](Scalar v) { return sigmoid(v); });
      c = fg.cwiseProduct(c) + ig.cwiseProduct(gg);
      h = og.cwiseProduct(Matrix(c.array().tanh()));
      if (cache) {
        cache->x.push_back(x);
        cache->i.push_back(std::move(ig));
        cache->f.push_back(std::move(fg));
        cache->g.push_back(std::move(gg));
        cache->o.push_back(std::move(og));
        cache->h.push_back(h);
        cache->c.push_back(c);
      }
    }
    return h;
  }

  void backward(const Cache& cache, const Matrix& dh_final) {
    const Eigen::Index hd = hidden();
    Matrix dh = dh_final;
    Matrix dc = Matrix::Zero(hd, dh.cols());
    for (std::size_t t = cache.x.size(); t-- > 0;) {
      const Matrix tanh_c = cache.c[t + 1].array().tanh();
      const Matrix& ig = cache.i[t];
      const Matrix& fg = cache.f[t];
      const Matrix& gg = cache.g[t];
      const Matrix& og = cache.o[t];
      Matrix d_o = dh.cwiseProduct(tanh_c);
      dc += dh.cwiseProduct(og).cwiseProduct(
          Matrix((Scalar(1) - tanh_c.array().square()).matrix()));
      Matrix dz(4 * hd, dh.cols());
      dz.topRows(hd) = (dc.cwiseProduct(gg).array() * ig.array() * (Scalar(1) - ig.array())).matrix();
      dz.middleRows(hd, hd) =
          (dc.cwiseProduct(cache.c[t]).array() * fg.array() * (Scalar(1) - fg.array())).matrix();
      dz.middleRows(2 * hd, hd) =
          (dc.cwiseProduct(ig).array() * (Scalar(1) - gg.array().square())).matrix();
      dz.bottomRows(hd) = (d_o.array() * og.array() * (Scalar(1) - og.array())).matrix();

      wx_.grad.noalias() += dz * cache.x[t].transpose();
      wh_.grad.noalias() += dz * cache.h[t].transpose();
      b_.grad.col(0) += dz.rowwise().sum();
      dh = wh_.value.transpose() * dz;
      dc = dc.cwiseProduct(fg);
    }
  }

  void collect(ParamList<Scalar>& out) {
    out.push_back(&wx_);
    out.push_back(&wh_);
    out.push_back(&b_);
  }

 private:
  Param<Scalar> wx_;
  Param<Scalar> wh_;
  Param<Scalar> b_;
};

/// Adaptive moment estimation over a fixed parameter list. Minimizes: the
/// caller stores ∂loss/∂θ in each Param::grad.
template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  Adam(ParamList<Scalar> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto* p : params_) {
      p->m = Scalar(beta1_) * p->m + Scalar(1.0 - beta1_) * p->grad;
      p->v = Scalar(beta2_) * p->v + Scalar(1.0 - beta2_) * p->grad.cwiseProduct(p->grad);
      p->value.array() -= Scalar(lr_) * (p->m.array() / Scalar(c1)) /
                          ((p->v.array() / Scalar(c2)).sqrt() + Scalar(eps_));
    }
  }

  long steps() const { return t_; }
  void set_steps(long t) { t_ = t; }
  double learning_rate() const { return lr_; }

 private:
  ParamList<Scalar> params_;
  double lr_ = 1e-3;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
};

}  // namespace rflock::nn

#endif  // RFLOCK_NN_HPP
