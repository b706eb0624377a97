#include "evp/params.hpp"

#include "evp/errors.hpp"

#include <cmath>
#include <cstring>

namespace evp {

std::size_t ParamSet::add(std::string name, Mat value, bool trainable) {
  if (contains(name)) throw ConfigError("duplicate parameter " + name);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  trainable_.push_back(trainable);
  return values_.size() - 1;
}

std::size_t ParamSet::index(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw LookupError("no parameter named " + std::string(name));
}

bool ParamSet::contains(std::string_view name) const {
  for (const auto& n : names_) {
    if (n == name) return true;
  }
  return false;
}

void ParamSet::set_all_trainable(bool on) {
  for (std::size_t i = 0; i < trainable_.size(); ++i) trainable_[i] = on;
}

std::size_t ParamSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

std::uint64_t ParamSet::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto mix = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t i = 0; i < values_.size(); ++i) {
    mix(names_[i].data(), names_[i].size());
    const Eigen::Index shape[2] = {values_[i].rows(), values_[i].cols()};
    mix(shape, sizeof(shape));
    mix(values_[i].data(), static_cast<std::size_t>(values_[i].size()) * sizeof(double));
  }
  return h;
}

nlohmann::json ParamSet::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const Mat& m = values_[i];
    out.push_back({{"name", names_[i]},
                   {"rows", m.rows()},
                   {"cols", m.cols()},
                   {"data", std::vector<double>(m.data(), m.data() + m.size())}});
  }
  return out;
}

void ParamSet::load_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != values_.size()) {
    throw CheckpointError("tensor count mismatch");
  }
  for (const auto& entry : j) {
    const std::string name = entry.at("name").get<std::string>();
    if (!contains(name)) throw CheckpointError("unexpected tensor " + name);
    Mat& m = values_[index(name)];
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    const auto data = entry.at("data").get<std::vector<double>>();
    if (rows != m.rows() || cols != m.cols() || static_cast<Eigen::Index>(data.size()) != rows * cols) {
      throw CheckpointError("shape mismatch for tensor " + name);
    }
    std::memcpy(m.data(), data.data(), data.size() * sizeof(double));
  }
}

void Adam::step(ParamSet& ps, const std::vector<Mat>& grads) {
  if (grads.size() != ps.size()) throw ShapeError("gradient count does not match parameter count");
  if (m_.empty()) {
    for (std::size_t i = 0; i < ps.size(); ++i) {
      m_.push_back(Mat::Zero(ps.value(i).rows(), ps.value(i).cols()));
      v_.push_back(Mat::Zero(ps.value(i).rows(), ps.value(i).cols()));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!ps.trainable(i) || grads[i].size() == 0 || lr_ == 0.0) continue;
    const Mat& g = grads[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    const auto m_hat = m_[i].array() / c1;
    const auto v_hat = v_[i].array() / c2;
    ps.value(i).array() -= lr_ * m_hat / (v_hat.sqrt() + eps_);
  }
}

}  // namespace evp
