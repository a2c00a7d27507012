#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>

namespace dvislam {

/// Seeded random stream with platform-independent output.
///
/// The engine is std::mt19937_64, whose sequence is fixed by the standard; the
/// standard distributions are not, so uniform and normal draws are derived here
/// from raw engine output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream keyed by a seed and up to three counters, e.g.
  /// (robot, timestep, purpose).
  static Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  bool bernoulli(double p) { return uniform() < p; }
  double gaussian();
  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  /// Sample from N(0, cov) through a Cholesky factor of cov (cov may be PSD).
  Eigen::VectorXd gaussian_vector(const Eigen::MatrixXd& cov);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace dvislam
