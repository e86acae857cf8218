#pragma once

// Differentiable building blocks. Each op caches what its backward pass
// needs; tensors are packed row-per-token, and attention runs per segment
// (one segment per sentence) so batches need no padding.

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "mtrerank/nnmodel/params.hpp"
#include "mtrerank/rng.hpp"

namespace mtrerank::nnmodel {

struct Segment {
  Eigen::Index offset = 0;
  Eigen::Index length = 0;
};

template <class T>
void add_row_bias(Matrix<T>& m, const Matrix<T>& bias) {
  m.rowwise() += bias.row(0);
}

template <class T>
void accumulate_bias_grad(Matrix<T>& g, const Matrix<T>& dy) {
  g.row(0) += dy.colwise().sum();
}

/// Row-wise softmax in place; -inf entries become exact zeros.
template <class Derived>
void softmax_rows(Eigen::MatrixBase<Derived>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const auto mx = row.maxCoeff();
    row = (row.array() - mx).exp().matrix();
    row /= row.sum();
  }
}

template <class T>
class LayerNormOp {
 public:
  static constexpr double kEps = 1e-5;

  Matrix<T> forward(const NormParams<T>& p, const Matrix<T>& x) {
    const auto n = x.rows(), d = x.cols();
    xhat_.resize(n, d);
    rstd_.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const T mean = x.row(r).mean();
      auto centered = (x.row(r).array() - mean).matrix();
      const T var = centered.squaredNorm() / static_cast<T>(d);
      rstd_[r] = T(1) / std::sqrt(var + static_cast<T>(kEps));
      xhat_.row(r) = centered * rstd_[r];
    }
    Matrix<T> y = (xhat_.array().rowwise() * p.gain.row(0).array()).matrix();
    add_row_bias(y, p.bias);
    return y;
  }

  Matrix<T> backward(const NormParams<T>& p, const Matrix<T>& dy, NormParams<T>& g) const {
    const auto n = dy.rows(), d = dy.cols();
    g.gain.row(0) += dy.cwiseProduct(xhat_).colwise().sum();
    accumulate_bias_grad(g.bias, dy);
    Matrix<T> dxhat = (dy.array().rowwise() * p.gain.row(0).array()).matrix();
    Matrix<T> dx(n, d);
    const T inv_d = T(1) / static_cast<T>(d);
    for (Eigen::Index r = 0; r < n; ++r) {
      const T sum_dxhat = dxhat.row(r).sum();
      const T dot = dxhat.row(r).dot(xhat_.row(r));
      dx.row(r) = (rstd_[r] * inv_d) *
                  (static_cast<T>(d) * dxhat.row(r).array() - sum_dxhat - xhat_.row(r).array() * dot).matrix();
    }
    return dx;
  }

 private:
  Matrix<T> xhat_;
  std::vector<T> rstd_;
};

template <class T>
Matrix<T> layer_norm(const NormParams<T>& p, const Matrix<T>& x) {
  return LayerNormOp<T>().forward(p, x);
}

template <class T>
class FeedForwardOp {
 public:
  Matrix<T> forward(const FeedForwardParams<T>& p, const Matrix<T>& x) {
    input_ = x;
    pre_ = x * p.w1;
    add_row_bias(pre_, p.b1);
    act_ = pre_.cwiseMax(T(0));
    Matrix<T> y = act_ * p.w2;
    add_row_bias(y, p.b2);
    return y;
  }

  Matrix<T> backward(const FeedForwardParams<T>& p, const Matrix<T>& dy, FeedForwardParams<T>& g) const {
    g.w2.noalias() += act_.transpose() * dy;
    accumulate_bias_grad(g.b2, dy);
    Matrix<T> dpre = dy * p.w2.transpose();
    dpre = (pre_.array() > T(0)).select(dpre, T(0));
    g.w1.noalias() += input_.transpose() * dpre;
    accumulate_bias_grad(g.b1, dpre);
    return dpre * p.w1.transpose();
  }

 private:
  Matrix<T> input_, pre_, act_;
};

/// Inverted dropout. A disabled op (rate 0 or inference) is the identity.
template <class T>
class DropoutOp {
 public:
  Matrix<T> forward(const Matrix<T>& x, double rate, Rng* rng) {
    if (rng == nullptr || rate <= 0.0) {
      mask_.resize(0, 0);
      return x;
    }
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    mask_.resize(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < mask_.size(); ++i) mask_.data()[i] = rng->uniform() < rate ? T(0) : keep_scale;
    return x.cwiseProduct(mask_);
  }

  Matrix<T> backward(const Matrix<T>& dy) const {
    if (mask_.size() == 0) return dy;
    return dy.cwiseProduct(mask_);
  }

 private:
  Matrix<T> mask_;
};

/// Multi-head scaled dot-product attention over packed segments. Query
/// segment i attends only to key segment i; with `causal`, query position
/// j sees key positions <= j.
template <class T>
class AttentionOp {
 public:
  Matrix<T> forward(const AttentionParams<T>& p, const Matrix<T>& xq, const Matrix<T>& xkv,
                    const std::vector<Segment>& q_segs, const std::vector<Segment>& k_segs, int heads,
                    bool causal) {
    xq_ = xq;
    xkv_ = xkv;
    q_segs_ = q_segs;
    k_segs_ = k_segs;
    heads_ = heads;
    q_ = xq * p.wq;
    add_row_bias(q_, p.bq);
    k_ = xkv * p.wk;
    add_row_bias(k_, p.bk);
    v_ = xkv * p.wv;
    add_row_bias(v_, p.bv);

    const Eigen::Index d = q_.cols();
    const Eigen::Index dh = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    ctx_ = Matrix<T>::Zero(q_.rows(), d);
    probs_.assign(q_segs.size() * heads, Matrix<T>());
    for (std::size_t s = 0; s < q_segs.size(); ++s) {
      const Segment& qs = q_segs[s];
      const Segment& ks = k_segs[s];
      for (int h = 0; h < heads; ++h) {
        auto Q = q_.block(qs.offset, h * dh, qs.length, dh);
        auto K = k_.block(ks.offset, h * dh, ks.length, dh);
        auto V = v_.block(ks.offset, h * dh, ks.length, dh);
        Matrix<T> A = (Q * K.transpose()) * scale;
        if (causal) {
          for (Eigen::Index i = 0; i < A.rows(); ++i) {
            for (Eigen::Index j = i + 1; j < A.cols(); ++j) A(i, j) = -std::numeric_limits<T>::infinity();
          }
        }
        softmax_rows(A);
        ctx_.block(qs.offset, h * dh, qs.length, dh).noalias() = A * V;
        probs_[s * heads + h] = std::move(A);
      }
    }
    Matrix<T> out = ctx_ * p.wo;
    add_row_bias(out, p.bo);
    return out;
  }

  /// Returns (d xq, d xkv). For self-attention the caller adds the two.
  std::pair<Matrix<T>, Matrix<T>> backward(const AttentionParams<T>& p, const Matrix<T>& dout,
                                           AttentionParams<T>& g) const {
    g.wo.noalias() += ctx_.transpose() * dout;
    accumulate_bias_grad(g.bo, dout);
    const Matrix<T> dctx = dout * p.wo.transpose();

    const Eigen::Index d = q_.cols();
    const Eigen::Index dh = d / heads_;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    Matrix<T> dq = Matrix<T>::Zero(q_.rows(), d);
    Matrix<T> dk = Matrix<T>::Zero(k_.rows(), d);
    Matrix<T> dv = Matrix<T>::Zero(v_.rows(), d);
    for (std::size_t s = 0; s < q_segs_.size(); ++s) {
      const Segment& qs = q_segs_[s];
      const Segment& ks = k_segs_[s];
      for (int h = 0; h < heads_; ++h) {
        const Matrix<T>& A = probs_[s * heads_ + h];
        auto Q = q_.block(qs.offset, h * dh, qs.length, dh);
        auto K = k_.block(ks.offset, h * dh, ks.length, dh);
        auto V = v_.block(ks.offset, h * dh, ks.length, dh);
        auto dC = dctx.block(qs.offset, h * dh, qs.length, dh);
        dv.block(ks.offset, h * dh, ks.length, dh).noalias() += A.transpose() * dC;
        Matrix<T> dA = dC * V.transpose();
        const auto row_dot = (dA.cwiseProduct(A)).rowwise().sum();
        Matrix<T> dS = A.cwiseProduct((dA.colwise() - row_dot).eval());
        dq.block(qs.offset, h * dh, qs.length, dh).noalias() += (dS * K) * scale;
        dk.block(ks.offset, h * dh, ks.length, dh).noalias() += (dS.transpose() * Q) * scale;
      }
    }
    g.wq.noalias() += xq_.transpose() * dq;
    accumulate_bias_grad(g.bq, dq);
    g.wk.noalias() += xkv_.transpose() * dk;
    accumulate_bias_grad(g.bk, dk);
    g.wv.noalias() += xkv_.transpose() * dv;
    accumulate_bias_grad(g.bv, dv);
    Matrix<T> dxq = dq * p.wq.transpose();
    Matrix<T> dxkv = dk * p.wk.transpose();
    dxkv.noalias() += dv * p.wv.transpose();
    return {std::move(dxq), std::move(dxkv)};
  }

 private:
  Matrix<T> xq_, xkv_, q_, k_, v_, ctx_;
  std::vector<Matrix<T>> probs_;
  std::vector<Segment> q_segs_, k_segs_;
  int heads_ = 1;
};

}  // namespace mtrerank::nnmodel
