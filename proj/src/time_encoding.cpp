#include "evp/time_encoding.hpp"

#include "evp/autograd.hpp"
#include "evp/errors.hpp"
#include "evp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace evp {

std::string to_string(FrequencyScheme s) {
  return s == FrequencyScheme::geometric ? "geometric" : "random";
}

FrequencyScheme frequency_scheme_from_string(const std::string& s) {
  if (s == "geometric") return FrequencyScheme::geometric;
  if (s == "random") return FrequencyScheme::random;
  throw ConfigError("unknown frequency scheme '" + s + "'");
}

TimeEncoderParams init_frequencies(std::size_t d, FrequencyScheme scheme, std::uint64_t seed,
                                   double span_scale, double base) {
  if (d == 0 || d % 2 != 0) throw ConfigError("time encoding dimension must be even and positive, got " + std::to_string(d));
  if (!(span_scale > 0.0) || !(base > 1.0)) throw ConfigError("time encoding scale must be positive and base > 1");
  const std::size_t m = d / 2;
  TimeEncoderParams p;
  p.frequencies.resize(static_cast<Eigen::Index>(m));
  if (scheme == FrequencyScheme::geometric) {
    for (std::size_t i = 0; i < m; ++i) {
      const double exponent = 2.0 * static_cast<double>(i) / static_cast<double>(d);
      p.frequencies(static_cast<Eigen::Index>(i)) = span_scale / std::pow(base, exponent);
    }
  } else {
    Rng rng = make_rng(seed, "time-frequencies");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> w(m);
    for (double& x : w) x = span_scale * std::pow(base, -u(rng));
    std::sort(w.begin(), w.end(), std::greater<>());
    for (std::size_t i = 0; i < m; ++i) p.frequencies(static_cast<Eigen::Index>(i)) = w[i];
  }
  return p;
}

Vec encode(const TimeEncoderParams& p, double t) {
  const double ts[1] = {t};
  return time_encode_value(p.frequencies, ts).col(0);
}

Mat encode_many(const TimeEncoderParams& p, std::span<const double> ts) {
  return time_encode_value(p.frequencies, ts);
}

}  // namespace evp
