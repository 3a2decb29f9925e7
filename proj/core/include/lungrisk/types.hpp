#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace lungrisk {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

using Index3 = std::array<int, 3>;
using Real3 = std::array<double, 3>;

// Error categories map to CLI exit codes (config=2, data=3, numeric=4).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline long long product(const Index3& s) {
    return static_cast<long long>(s[0]) * s[1] * s[2];
}

inline std::string index3_str(const Index3& s) {
    return std::to_string(s[0]) + "x" + std::to_string(s[1]) + "x" + std::to_string(s[2]);
}

}  // namespace lungrisk
