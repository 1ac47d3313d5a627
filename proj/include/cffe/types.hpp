#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace cffe {

using Index = Eigen::Index;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;

template <class T>
using CRef = const Eigen::Ref<const T>;

/// Seeded random stream. Every stochastic operation takes one explicitly.
using Rng = std::mt19937_64;

/// Deterministic child stream for index `a` (and optional `b`) under `seed`.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b)};
    return Rng(seq);
}

/// 64-bit seed drawn from a derived stream; used to seed nested components.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0)
{
    Rng rng = derive_rng(seed, a, b);
    return rng();
}

} // namespace cffe

namespace cffe {

using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

} // namespace cffe
