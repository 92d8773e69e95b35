#pragma once

#include "dms/core.hpp"

#include <cstdint>
#include <random>

namespace dms {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent stream seed for a (purpose, index) pair under a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t purpose, std::uint64_t index = 0) {
    return splitmix64(splitmix64(splitmix64(master) ^ purpose) + index);
}

class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    double next() { return dist_(engine_); }

    template <typename Scalar>
    Mat<Scalar> matrix(Index rows, Index cols) {
        Mat<Scalar> out(rows, cols);
        // Row-major fill so a prefix of rows does not depend on the column count.
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) out(i, j) = Scalar(next());
        return out;
    }

    template <typename Scalar>
    Vec<Scalar> vector(Index n) {
        Vec<Scalar> out(n);
        for (Index i = 0; i < n; ++i) out(i) = Scalar(next());
        return out;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace dms
