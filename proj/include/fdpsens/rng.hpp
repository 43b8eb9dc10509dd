#ifndef FDPSENS_RNG_HPP
#define FDPSENS_RNG_HPP

#include <cstdint>
#include <random>
#include <vector>

namespace fdpsens {

// Derives independent child seeds from a base seed (splitmix64 chain).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

// Deterministic generator: mt19937_64 driving inverse-CDF normals, so the
// stream depends only on the seed.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform01();                 // (0, 1)
    double normal();                    // standard normal
    std::uint64_t integer(std::uint64_t n);  // uniform on [0, n)
    bool bernoulli(double p);

    // One draw from N(0, Sigma) via a precomputed lower Cholesky factor.
    std::vector<double> normal_vector(const std::vector<double>& chol_lower, std::size_t dim);

  private:
    std::mt19937_64 gen_;
};

// Lower Cholesky factor of a K x K covariance matrix (row-major).
// Throws std::invalid_argument when the matrix is not positive definite.
std::vector<double> cholesky_lower(const std::vector<double>& sigma, std::size_t dim);

}  // namespace fdpsens

#endif
