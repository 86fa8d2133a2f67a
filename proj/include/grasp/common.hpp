#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace grasp {

/// Row-major dense matrix; rows index sequence positions throughout the model.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatrixXi32 = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unreadable or unwritable files, truncated or mismatched artifacts.
class IoError : public Error {
public:
    using Error::Error;
};

/// Invalid user-supplied parameters or missing pipeline prerequisites.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite activations, gradients or losses.
class NumericError : public Error {
public:
    using Error::Error;
};

/// FNV-1a, 64-bit. Stable across platforms; used for config and artifact hashes.
constexpr std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value);

/// Worker count for internal parallel loops: GRASP_REC_THREADS if set, else hardware parallelism.
int thread_count();

}  // namespace grasp
