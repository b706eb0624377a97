#include "evp/autograd.hpp"

#include "evp/params.hpp"

#include <cmath>
#include <string>

namespace evp {
namespace ad {

const Mat& Var::value() const { return tape_->value(*this); }

Var Tape::push(Mat value, bool requires_grad, Backward backward) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Mat Tape::grad(const Var& v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(const Var& v, const Mat& g) {
  Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Var& out) {
  if (out.tape() != this) throw ContractError("backward on a variable from another tape");
  if (value(out).rows() != 1 || value(out).cols() != 1) {
    throw ShapeError("backward requires a scalar output");
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[static_cast<std::size_t>(out.id())].grad = Mat::Ones(1, 1);
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.size() == 0) continue;
    // The closure only touches ancestors, which sit at lower indices.
    const Mat g = n.grad;
    n.backward(*this, g);
  }
}

namespace {

Tape& same_tape(const Var& a, const Var& b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw ContractError("variables live on different tapes");
  return *a.tape();
}

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

bool any_grad(Tape& t, const Var& a) { return t.requires_grad(a); }
bool any_grad(Tape& t, const Var& a, const Var& b) { return t.requires_grad(a) || t.requires_grad(b); }

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  if (a.value().cols() != b.value().rows()) throw ShapeError("matmul: inner dimensions differ");
  return t.push(a.value() * b.value(), any_grad(t, a, b), [a, b](Tape& tp, const Mat& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * b.value().transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, a.value().transpose() * g);
  });
}

Var tmatmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  if (a.value().rows() != b.value().rows()) throw ShapeError("tmatmul: row counts differ");
  return t.push(a.value().transpose() * b.value(), any_grad(t, a, b), [a, b](Tape& tp, const Mat& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, b.value() * g.transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, a.value() * g);
  });
}

Var add(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  return t.push(a.value() + b.value(), any_grad(t, a, b), [a, b](Tape& tp, const Mat& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  return t.push(a.value() - b.value(), any_grad(t, a, b), [a, b](Tape& tp, const Mat& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, -g);
  });
}

Var cmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "cmul");
  return t.push(a.value().cwiseProduct(b.value()), any_grad(t, a, b), [a, b](Tape& tp, const Mat& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseProduct(b.value()));
    if (tp.requires_grad(b)) tp.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var add_bias(const Var& m, const Var& b) {
  Tape& t = same_tape(m, b);
  if (b.value().cols() != 1 || b.value().rows() != m.value().rows()) throw ShapeError("add_bias: bias shape");
  Mat out = m.value().colwise() + b.value().col(0);
  return t.push(std::move(out), any_grad(t, m, b), [m, b](Tape& tp, const Mat& g) {
    tp.accumulate(m, g);
    if (tp.requires_grad(b)) tp.accumulate(b, g.rowwise().sum());
  });
}

Var mul_cols(const Var& m, const Var& v) {
  Tape& t = same_tape(m, v);
  if (v.value().cols() != 1 || v.value().rows() != m.value().rows()) throw ShapeError("mul_cols: vector shape");
  Mat out = m.value().array().colwise() * v.value().col(0).array();
  return t.push(std::move(out), any_grad(t, m, v), [m, v](Tape& tp, const Mat& g) {
    if (tp.requires_grad(m)) tp.accumulate(m, Mat(g.array().colwise() * v.value().col(0).array()));
    if (tp.requires_grad(v)) tp.accumulate(v, g.cwiseProduct(m.value()).rowwise().sum());
  });
}

Var smul(const Var& s, const Var& x) {
  Tape& t = same_tape(s, x);
  if (s.value().size() != 1) throw ShapeError("smul: scale must be 1x1");
  return t.push(s.value()(0, 0) * x.value(), any_grad(t, s, x), [s, x](Tape& tp, const Mat& g) {
    if (tp.requires_grad(s)) tp.accumulate(s, Mat::Constant(1, 1, g.cwiseProduct(x.value()).sum()));
    if (tp.requires_grad(x)) tp.accumulate(x, s.value()(0, 0) * g);
  });
}

Var scale(const Var& x, double c) {
  Tape& t = *x.tape();
  return t.push(c * x.value(), any_grad(t, x), [x, c](Tape& tp, const Mat& g) { tp.accumulate(x, c * g); });
}

Var add_const(const Var& x, double c) {
  Tape& t = *x.tape();
  return t.push(x.value().array() + c, any_grad(t, x), [x](Tape& tp, const Mat& g) { tp.accumulate(x, g); });
}

Var vcat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("vcat: no inputs");
  Tape& t = *parts.front().tape();
  const Eigen::Index cols = parts.front().value().cols();
  Eigen::Index rows = 0;
  bool req = false;
  for (const Var& p : parts) {
    same_tape(parts.front(), p);
    if (p.value().cols() != cols) throw ShapeError("vcat: column counts differ");
    rows += p.value().rows();
    req = req || t.requires_grad(p);
  }
  Mat out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.value().rows()) = p.value();
    r += p.value().rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.push(std::move(out), req, [inputs](Tape& tp, const Mat& g) {
    Eigen::Index r0 = 0;
    for (const Var& p : inputs) {
      const Eigen::Index n = p.value().rows();
      if (tp.requires_grad(p)) tp.accumulate(p, g.middleRows(r0, n));
      r0 += n;
    }
  });
}

Var hcat(std::span<const Var> cols) {
  if (cols.empty()) throw ShapeError("hcat: no inputs");
  Tape& t = *cols.front().tape();
  const Eigen::Index rows = cols.front().value().rows();
  Eigen::Index n = 0;
  bool req = false;
  for (const Var& c : cols) {
    same_tape(cols.front(), c);
    if (c.value().rows() != rows) throw ShapeError("hcat: row counts differ");
    n += c.value().cols();
    req = req || t.requires_grad(c);
  }
  Mat out(rows, n);
  Eigen::Index c0 = 0;
  for (const Var& c : cols) {
    out.middleCols(c0, c.value().cols()) = c.value();
    c0 += c.value().cols();
  }
  std::vector<Var> inputs(cols.begin(), cols.end());
  return t.push(std::move(out), req, [inputs](Tape& tp, const Mat& g) {
    Eigen::Index k = 0;
    for (const Var& c : inputs) {
      const Eigen::Index w = c.value().cols();
      if (tp.requires_grad(c)) tp.accumulate(c, g.middleCols(k, w));
      k += w;
    }
  });
}

Var rows(const Var& x, Eigen::Index start, Eigen::Index n) {
  Tape& t = *x.tape();
  if (start < 0 || n < 0 || start + n > x.value().rows()) throw ShapeError("rows: range out of bounds");
  return t.push(x.value().middleRows(start, n), any_grad(t, x), [x, start, n](Tape& tp, const Mat& g) {
    Mat full = Mat::Zero(x.value().rows(), x.value().cols());
    full.middleRows(start, n) = g;
    tp.accumulate(x, full);
  });
}

Var element(const Var& x, Eigen::Index i) {
  Tape& t = *x.tape();
  if (i < 0 || i >= x.value().rows()) throw ShapeError("element: index out of bounds");
  return t.push(Mat::Constant(1, 1, x.value()(i, 0)), any_grad(t, x), [x, i](Tape& tp, const Mat& g) {
    Mat full = Mat::Zero(x.value().rows(), x.value().cols());
    full(i, 0) = g(0, 0);
    tp.accumulate(x, full);
  });
}

Var softmax(const Var& x) {
  Tape& t = *x.tape();
  if (x.value().cols() != 1) throw ShapeError("softmax expects a column");
  Mat y = PlainOps{}.softmax(x.value());
  const Mat yv = y;
  return t.push(std::move(y), any_grad(t, x), [x, yv](Tape& tp, const Mat& g) {
    const double s = (g.array() * yv.array()).sum();
    tp.accumulate(x, Mat(yv.array() * (g.array() - s)));
  });
}

Var logsumexp(const Var& x) {
  Tape& t = *x.tape();
  if (x.value().cols() != 1) throw ShapeError("logsumexp expects a column");
  return t.push(PlainOps{}.logsumexp(x.value()), any_grad(t, x), [x](Tape& tp, const Mat& g) {
    tp.accumulate(x, g(0, 0) * PlainOps{}.softmax(x.value()));
  });
}

Var exp(const Var& x) {
  Tape& t = *x.tape();
  Mat y = x.value().unaryExpr([](double v) { return std::exp(v); });
  const Mat yv = y;
  return t.push(std::move(y), any_grad(t, x), [x, yv](Tape& tp, const Mat& g) {
    tp.accumulate(x, g.cwiseProduct(yv));
  });
}

Var log(const Var& x) {
  Tape& t = *x.tape();
  return t.push(x.value().array().log(), any_grad(t, x), [x](Tape& tp, const Mat& g) {
    tp.accumulate(x, Mat(g.array() / x.value().array()));
  });
}

Var tanh(const Var& x) {
  Tape& t = *x.tape();
  Mat y = x.value().array().tanh();
  const Mat yv = y;
  return t.push(std::move(y), any_grad(t, x), [x, yv](Tape& tp, const Mat& g) {
    tp.accumulate(x, Mat(g.array() * (1.0 - yv.array().square())));
  });
}

Var sum(const Var& x) {
  Tape& t = *x.tape();
  return t.push(Mat::Constant(1, 1, x.value().sum()), any_grad(t, x), [x](Tape& tp, const Mat& g) {
    tp.accumulate(x, Mat::Constant(x.value().rows(), x.value().cols(), g(0, 0)));
  });
}

Var dot(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "dot");
  return t.push(Mat::Constant(1, 1, a.value().cwiseProduct(b.value()).sum()), any_grad(t, a, b),
                [a, b](Tape& tp, const Mat& g) {
                  if (tp.requires_grad(a)) tp.accumulate(a, g(0, 0) * b.value());
                  if (tp.requires_grad(b)) tp.accumulate(b, g(0, 0) * a.value());
                });
}

Var cosine(const Var& a, const Var& b, double eps) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "cosine");
  return t.push(PlainOps{}.cosine(a.value(), b.value(), eps), any_grad(t, a, b),
                [a, b, eps](Tape& tp, const Mat& g) {
                  const Mat& av = a.value();
                  const Mat& bv = b.value();
                  const double na = av.norm();
                  const double nb = bv.norm();
                  const double da = na + eps;
                  const double db = nb + eps;
                  const double p = av.cwiseProduct(bv).sum();
                  const double go = g(0, 0);
                  if (tp.requires_grad(a)) {
                    Mat ga = bv / (da * db);
                    if (na > 0.0) ga -= (p / (da * da * db * na)) * av;
                    tp.accumulate(a, go * ga);
                  }
                  if (tp.requires_grad(b)) {
                    Mat gb = av / (da * db);
                    if (nb > 0.0) gb -= (p / (da * db * db * nb)) * bv;
                    tp.accumulate(b, go * gb);
                  }
                });
}

Var time_encode(const Var& omega, std::span<const double> deltas) {
  Tape& t = *omega.tape();
  std::vector<double> d(deltas.begin(), deltas.end());
  return t.push(time_encode_value(omega.value(), deltas), any_grad(t, omega), [omega, d](Tape& tp, const Mat& g) {
    const Mat& w = omega.value();
    const Eigen::Index m = w.rows();
    const double inv = 1.0 / std::sqrt(static_cast<double>(2 * m));
    Mat gw = Mat::Zero(m, 1);
    for (Eigen::Index i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d.size(); ++j) {
        const auto col = static_cast<Eigen::Index>(j);
        const double arg = w(i, 0) * d[j];
        acc += (-g(2 * i, col) * std::sin(arg) + g(2 * i + 1, col) * std::cos(arg)) * d[j];
      }
      gw(i, 0) = acc * inv;
    }
    tp.accumulate(omega, gw);
  });
}

}  // namespace ad

Mat time_encode_value(const Mat& omega, std::span<const double> deltas) {
  const Eigen::Index m = omega.rows();
  const auto n = static_cast<Eigen::Index>(deltas.size());
  Mat out(2 * m, n);
  const double inv = 1.0 / std::sqrt(static_cast<double>(2 * m));
  for (Eigen::Index j = 0; j < n; ++j) {
    const double dt = deltas[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < m; ++i) {
      const double arg = omega(i, 0) * dt;
      out(2 * i, j) = std::cos(arg) * inv;
      out(2 * i + 1, j) = std::sin(arg) * inv;
    }
  }
  return out;
}

const Mat& PlainOps::param(const ParamSet& ps, std::size_t i) const { return ps.value(i); }

Mat PlainOps::vcat(std::span<const Mat> parts) const {
  if (parts.empty()) throw ShapeError("vcat: no inputs");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const Mat& p : parts) {
    if (p.cols() != cols) throw ShapeError("vcat: column counts differ");
    rows += p.rows();
  }
  Mat out(rows, cols);
  Eigen::Index r = 0;
  for (const Mat& p : parts) {
    out.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return out;
}

Mat PlainOps::hcat(std::span<const Mat> cols) const {
  if (cols.empty()) throw ShapeError("hcat: no inputs");
  const Eigen::Index rows = cols.front().rows();
  Eigen::Index n = 0;
  for (const Mat& c : cols) {
    if (c.rows() != rows) throw ShapeError("hcat: row counts differ");
    n += c.cols();
  }
  Mat out(rows, n);
  Eigen::Index k = 0;
  for (const Mat& c : cols) {
    out.middleCols(k, c.cols()) = c;
    k += c.cols();
  }
  return out;
}

Mat PlainOps::softmax(const Mat& x) const {
  if (x.size() == 0) return x;
  const double mx = x.maxCoeff();
  Mat e = (x.array() - mx).exp();
  return e / e.sum();
}

Mat PlainOps::logsumexp(const Mat& x) const {
  const double mx = x.maxCoeff();
  return Mat::Constant(1, 1, mx + std::log((x.array() - mx).exp().sum()));
}

Mat PlainOps::cosine(const Mat& a, const Mat& b, double eps) const {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("cosine: shape mismatch");
  const double p = a.cwiseProduct(b).sum();
  return Mat::Constant(1, 1, p / ((a.norm() + eps) * (b.norm() + eps)));
}

ad::Var TapeOps::param(const ParamSet& ps, std::size_t i) {
  const Key key{&ps, i};
  if (const auto it = leaves_.find(key); it != leaves_.end()) return it->second;
  const ad::Var v = tape_.push(ps.value(i), ps.trainable(i), nullptr);
  leaves_.emplace(key, v);
  return v;
}

std::vector<Mat> TapeOps::gradients(const ParamSet& ps) const {
  std::vector<Mat> out;
  out.reserve(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto it = leaves_.find(Key{&ps, i});
    if (it == leaves_.end()) {
      out.push_back(Mat::Zero(ps.value(i).rows(), ps.value(i).cols()));
    } else {
      out.push_back(tape_.grad(it->second));
    }
  }
  return out;
}

}  // namespace evp
