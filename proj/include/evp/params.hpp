#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <json.hpp>
#include <string>
#include <string_view>
#include <vector>

namespace evp {

using Mat = Eigen::MatrixXd;

/// Ordered collection of named dense tensors with per-tensor trainable flags.
class ParamSet {
 public:
  std::size_t add(std::string name, Mat value, bool trainable = true);

  std::size_t size() const { return values_.size(); }
  std::size_t index(std::string_view name) const;
  bool contains(std::string_view name) const;

  const std::string& name(std::size_t i) const { return names_.at(i); }
  const Mat& value(std::size_t i) const { return values_.at(i); }
  Mat& value(std::size_t i) { return values_.at(i); }
  bool trainable(std::size_t i) const { return trainable_.at(i); }
  void set_trainable(std::size_t i, bool on) { trainable_.at(i) = on; }
  void set_all_trainable(bool on);

  std::size_t num_scalars() const;

  /// FNV-1a over names, shapes and raw bytes; equal iff bit-identical.
  std::uint64_t checksum() const;

  nlohmann::json to_json() const;
  /// Replaces values of `*this` from json; names and shapes must match.
  void load_json(const nlohmann::json& j);

 private:
  std::vector<std::string> names_;
  std::vector<Mat> values_;
  std::vector<bool> trainable_;
};

/// Adam with bias correction; state is keyed by tensor position.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Updates every trainable tensor of `ps` using `grads` (same layout).
  void step(ParamSet& ps, const std::vector<Mat>& grads);

  std::size_t steps() const { return t_; }

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  std::size_t t_ = 0;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
};

}  // namespace evp
