#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

namespace evp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class FrequencyScheme { geometric, random };

std::string to_string(FrequencyScheme s);
FrequencyScheme frequency_scheme_from_string(const std::string& s);

/// Cos/sin time encoder with d/2 frequencies.
struct TimeEncoderParams {
  Vec frequencies;
  bool learnable = false;

  std::size_t dim() const { return 2 * static_cast<std::size_t>(frequencies.size()); }
};

/// Geometric: w_i = span_scale / base^(2(i-1)/d). Random: log-uniform in
/// [span_scale / base, span_scale], sorted descending, drawn from `seed`.
/// Throws ConfigError for odd or zero d.
TimeEncoderParams init_frequencies(std::size_t d, FrequencyScheme scheme = FrequencyScheme::geometric,
                                   std::uint64_t seed = 0, double span_scale = 1.0,
                                   double base = 10000.0);

/// [cos(w_1 t), sin(w_1 t), ..., cos(w_m t), sin(w_m t)] / sqrt(d).
Vec encode(const TimeEncoderParams& p, double t);

/// One encoded column per entry of `ts`.
Mat encode_many(const TimeEncoderParams& p, std::span<const double> ts);

}  // namespace evp
