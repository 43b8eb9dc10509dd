#include "fdpsens/rng.hpp"

#include <cmath>
#include <stdexcept>

#include "fdpsens/stats.hpp"

namespace fdpsens {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
    for (int i = 0; i < 2; ++i) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ULL;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebULL;
        z ^= z >> 31;
    }
    return z;
}

double Rng::uniform01() {
    // 53-bit mantissa, strictly inside (0,1).
    const std::uint64_t bits = gen_() >> 11;
    return (static_cast<double>(bits) + 0.5) * (1.0 / 9007199254740992.0);
}

double Rng::normal() { return normal_quantile(uniform01()); }

std::uint64_t Rng::integer(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::integer: n must be positive");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / n * n;
    std::uint64_t x;
    do {
        x = gen_();
    } while (x >= limit);
    return x % n;
}

bool Rng::bernoulli(double p) { return uniform01() < p; }

std::vector<double> Rng::normal_vector(const std::vector<double>& chol_lower, std::size_t dim) {
    std::vector<double> z(dim), x(dim, 0.0);
    for (auto& v : z) v = normal();
    for (std::size_t i = 0; i < dim; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j <= i; ++j) acc += chol_lower[i * dim + j] * z[j];
        x[i] = acc;
    }
    return x;
}

std::vector<double> cholesky_lower(const std::vector<double>& sigma, std::size_t dim) {
    if (sigma.size() != dim * dim) {
        throw std::invalid_argument("cholesky_lower: matrix size mismatch");
    }
    std::vector<double> L(dim * dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double acc = sigma[i * dim + j];
            for (std::size_t m = 0; m < j; ++m) acc -= L[i * dim + m] * L[j * dim + m];
            if (i == j) {
                if (acc <= 0.0) {
                    throw std::invalid_argument(
                        "cholesky_lower: covariance matrix is not positive definite");
                }
                L[i * dim + i] = std::sqrt(acc);
            } else {
                L[i * dim + j] = acc / L[j * dim + j];
            }
        }
    }
    return L;
}

}  // namespace fdpsens
