#pragma once

// Minimal reverse-mode differentiation over dense Eigen matrices, plus two
// interchangeable "ops" backends so that model code is written once:
//
//   PlainOps  - values only, T = Eigen::MatrixXd
//   TapeOps   - records onto a Tape, T = ad::Var
//
// Column vectors are n x 1 matrices and scalars are 1 x 1 matrices.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "evp/errors.hpp"

namespace evp {

using Mat = Eigen::MatrixXd;

class ParamSet;

namespace ad {

class Tape;

class Var {
 public:
  Var() = default;

  const Mat& value() const;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Mat& grad_out)>;

  Var leaf(Mat value) { return push(std::move(value), true, {}); }
  Var constant(Mat value) { return push(std::move(value), false, {}); }

  /// Adds a node. `backward` is dropped when no input requires a gradient.
  Var push(Mat value, bool requires_grad, Backward backward);

  bool requires_grad(const Var& v) const { return nodes_[static_cast<std::size_t>(v.id())].requires_grad; }
  const Mat& value(const Var& v) const { return nodes_[static_cast<std::size_t>(v.id())].value; }

  /// Gradient accumulated by backward(); zero-shaped when untouched.
  Mat grad(const Var& v) const;

  void accumulate(const Var& v, const Mat& g);

  /// Reverse sweep from a 1 x 1 output.
  void backward(const Var& out);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

Var matmul(const Var& a, const Var& b);
/// a^T b
Var tmatmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var cmul(const Var& a, const Var& b);
/// M + b 1^T for a column b.
Var add_bias(const Var& m, const Var& b);
/// Each column of m multiplied elementwise by column v.
Var mul_cols(const Var& m, const Var& v);
/// Scalar (1 x 1) times matrix.
Var smul(const Var& s, const Var& x);
Var scale(const Var& x, double c);
Var add_const(const Var& x, double c);
Var vcat(std::span<const Var> parts);
Var hcat(std::span<const Var> cols);
Var rows(const Var& x, Eigen::Index start, Eigen::Index n);
Var element(const Var& x, Eigen::Index i);
Var softmax(const Var& x);
Var logsumexp(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var tanh(const Var& x);
Var sum(const Var& x);
Var dot(const Var& a, const Var& b);
Var cosine(const Var& a, const Var& b, double eps);
/// [cos(w_i d_j), sin(w_i d_j)] / sqrt(2 m), laid out as 2m x n.
Var time_encode(const Var& omega, std::span<const double> deltas);

}  // namespace ad

/// Value of the time-encoding map; shared by both backends.
Mat time_encode_value(const Mat& omega, std::span<const double> deltas);

struct PlainOps {
  using T = Mat;

  const Mat& param(const ParamSet& ps, std::size_t i) const;
  Mat constant(Mat m) const { return m; }
  const Mat& value(const Mat& m) const { return m; }

  Mat matmul(const Mat& a, const Mat& b) const { return a * b; }
  Mat tmatmul(const Mat& a, const Mat& b) const { return a.transpose() * b; }
  Mat add(const Mat& a, const Mat& b) const { return a + b; }
  Mat sub(const Mat& a, const Mat& b) const { return a - b; }
  Mat cmul(const Mat& a, const Mat& b) const { return a.cwiseProduct(b); }
  Mat add_bias(const Mat& m, const Mat& b) const { return m.colwise() + b.col(0); }
  Mat mul_cols(const Mat& m, const Mat& v) const { return m.array().colwise() * v.col(0).array(); }
  Mat smul(const Mat& s, const Mat& x) const { return s(0, 0) * x; }
  Mat scale(const Mat& x, double c) const { return c * x; }
  Mat add_const(const Mat& x, double c) const { return x.array() + c; }
  Mat vcat(std::span<const Mat> parts) const;
  Mat hcat(std::span<const Mat> cols) const;
  Mat rows(const Mat& x, Eigen::Index start, Eigen::Index n) const { return x.middleRows(start, n); }
  Mat element(const Mat& x, Eigen::Index i) const { return Mat::Constant(1, 1, x(i, 0)); }
  Mat softmax(const Mat& x) const;
  Mat logsumexp(const Mat& x) const;
  Mat exp(const Mat& x) const { return x.unaryExpr([](double v) { return std::exp(v); }); }
  Mat log(const Mat& x) const { return x.array().log(); }
  Mat tanh(const Mat& x) const { return x.array().tanh(); }
  Mat sum(const Mat& x) const { return Mat::Constant(1, 1, x.sum()); }
  Mat dot(const Mat& a, const Mat& b) const { return Mat::Constant(1, 1, a.cwiseProduct(b).sum()); }
  Mat cosine(const Mat& a, const Mat& b, double eps) const;
  Mat time_encode(const Mat& omega, std::span<const double> deltas) const {
    return time_encode_value(omega, deltas);
  }
};

/// Records on a tape. Parameters become leaves on first use; only those
/// marked trainable in their ParamSet require gradients.
class TapeOps {
 public:
  using T = ad::Var;

  explicit TapeOps(ad::Tape& tape) : tape_(tape) {}

  ad::Var param(const ParamSet& ps, std::size_t i);
  ad::Var constant(Mat m) { return tape_.constant(std::move(m)); }
  const Mat& value(const ad::Var& v) const { return v.value(); }

  /// Gradients for every tensor of `ps` after tape.backward(); zeros for
  /// tensors that were not used.
  std::vector<Mat> gradients(const ParamSet& ps) const;

  ad::Tape& tape() { return tape_; }

  ad::Var matmul(const ad::Var& a, const ad::Var& b) { return ad::matmul(a, b); }
  ad::Var tmatmul(const ad::Var& a, const ad::Var& b) { return ad::tmatmul(a, b); }
  ad::Var add(const ad::Var& a, const ad::Var& b) { return ad::add(a, b); }
  ad::Var sub(const ad::Var& a, const ad::Var& b) { return ad::sub(a, b); }
  ad::Var cmul(const ad::Var& a, const ad::Var& b) { return ad::cmul(a, b); }
  ad::Var add_bias(const ad::Var& m, const ad::Var& b) { return ad::add_bias(m, b); }
  ad::Var mul_cols(const ad::Var& m, const ad::Var& v) { return ad::mul_cols(m, v); }
  ad::Var smul(const ad::Var& s, const ad::Var& x) { return ad::smul(s, x); }
  ad::Var scale(const ad::Var& x, double c) { return ad::scale(x, c); }
  ad::Var add_const(const ad::Var& x, double c) { return ad::add_const(x, c); }
  ad::Var vcat(std::span<const ad::Var> parts) { return ad::vcat(parts); }
  ad::Var hcat(std::span<const ad::Var> cols) { return ad::hcat(cols); }
  ad::Var rows(const ad::Var& x, Eigen::Index start, Eigen::Index n) { return ad::rows(x, start, n); }
  ad::Var element(const ad::Var& x, Eigen::Index i) { return ad::element(x, i); }
  ad::Var softmax(const ad::Var& x) { return ad::softmax(x); }
  ad::Var logsumexp(const ad::Var& x) { return ad::logsumexp(x); }
  ad::Var exp(const ad::Var& x) { return ad::exp(x); }
  ad::Var log(const ad::Var& x) { return ad::log(x); }
  ad::Var tanh(const ad::Var& x) { return ad::tanh(x); }
  ad::Var sum(const ad::Var& x) { return ad::sum(x); }
  ad::Var dot(const ad::Var& a, const ad::Var& b) { return ad::dot(a, b); }
  ad::Var cosine(const ad::Var& a, const ad::Var& b, double eps) { return ad::cosine(a, b, eps); }
  ad::Var time_encode(const ad::Var& omega, std::span<const double> deltas) {
    return ad::time_encode(omega, deltas);
  }

 private:
  struct Key {
    const ParamSet* set;
    std::size_t index;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      return std::hash<const void*>()(k.set) ^ (k.index * 0x9E3779B97F4A7C15ULL);
    }
  };

  ad::Tape& tape_;
  std::unordered_map<Key, ad::Var, KeyHash> leaves_;
};

}  // namespace evp
