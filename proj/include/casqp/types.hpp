#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace casqp {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatRef = Eigen::Ref<const MatrixX<Scalar>>;

template <typename Scalar>
using VecRef = Eigen::Ref<const VectorX<Scalar>>;

/// Thrown when a symmetric factorization cannot be completed, typically
/// because an iterate sits too close to the boundary of the positive orthant
/// or the problem data violates its definiteness assumptions.
class FactorizationFailure : public std::runtime_error {
public:
    explicit FactorizationFailure(const std::string& what, int subsystem = -1)
        : std::runtime_error(what), subsystem_(subsystem) {}

    /// 1-based sub-system index, or -1 when not attributable.
    int subsystem() const { return subsystem_; }

private:
    int subsystem_;
};

/// Thrown by the problem-file loader with a field-level diagnostic.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Counters for structural cost assertions in tests. Wall-clock timing is
/// too noisy to certify O(T) substitution or the 2N solve budget, so the
/// kernels count block-level operations instead.
struct OpCounts {
    long long bidiag_block_mults = 0;  ///< block multiply-adds in bidiagonal substitutions
    long long sigma_vector_solves = 0; ///< single-column solves against a factored block
    long long sigma_solve_columns = 0; ///< total right-hand-side columns solved

    void reset() { *this = OpCounts{}; }
};

inline OpCounts& op_counts() {
    thread_local OpCounts counts;
    return counts;
}

/// Deterministic 64-bit mixer (splitmix64). Used for all synthetic data so
/// that generated instances are bit-identical across platforms and runs.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform draw in [0, 1) with 53 significant bits.
    double next_unit() { return double(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform draw in [-1, 1).
    double next_sym() { return 2.0 * next_unit() - 1.0; }

    template <typename Scalar>
    MatrixX<Scalar> matrix(Index rows, Index cols, double scale = 1.0) {
        MatrixX<Scalar> out(rows, cols);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) out(i, j) = Scalar(scale * next_sym());
        return out;
    }

    template <typename Scalar>
    VectorX<Scalar> vector(Index size, double scale = 1.0) {
        VectorX<Scalar> out(size);
        for (Index i = 0; i < size; ++i) out(i) = Scalar(scale * next_sym());
        return out;
    }

private:
    std::uint64_t state_;
};

} // namespace casqp
