// SPDX-License-Identifier: Apache-2.0
//
// Shared test helpers, including an independent re-implementation of the
// documented cosine-kernel arithmetic used as the bitwise oracle.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "weightscope/rng.hpp"

namespace testsupport {

// Reference dot following the documented recipe: row chunks of 256, eight
// fma lanes per chunk (lane = in-chunk index mod 8), pairwise lane fold,
// chunk sums added in order. Written against the contract in simcore.hpp,
// not copied from the kernel.
template <typename T>
double oracle_dot(const T* a, const T* b, Eigen::Index n) {
    double total = 0.0;
    Eigen::Index chunk_begin = 0;
    while (chunk_begin < n) {
        const Eigen::Index chunk_len = std::min<Eigen::Index>(256, n - chunk_begin);
        double lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
        for (Eigen::Index i = 0; i < chunk_len; ++i) {
            const int lane = static_cast<int>(i % 8);
            lanes[lane] = std::fma(static_cast<double>(a[chunk_begin + i]),
                                   static_cast<double>(b[chunk_begin + i]), lanes[lane]);
        }
        total += ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
                 ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
        chunk_begin += chunk_len;
    }
    return total;
}

// Full materialization of the clamped |cosine| matrix, plus row-wise maxima.
// This is the slow path the tiled kernel must reproduce bitwise.
template <typename Mat>
Eigen::MatrixXd oracle_abs_cos_matrix(const Mat& a, const Mat& b) {
    const Eigen::Index n = a.rows();
    std::vector<double> da(static_cast<std::size_t>(a.cols()));
    std::vector<double> db(static_cast<std::size_t>(b.cols()));
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        da[static_cast<std::size_t>(j)] = oracle_dot(a.data() + j * n, a.data() + j * n, n);
    for (Eigen::Index k = 0; k < b.cols(); ++k)
        db[static_cast<std::size_t>(k)] = oracle_dot(b.data() + k * n, b.data() + k * n, n);
    Eigen::MatrixXd c(a.cols(), b.cols());
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index k = 0; k < b.cols(); ++k) {
            const double raw = oracle_dot(a.data() + j * n, b.data() + k * n, n);
            double v = std::fabs(raw / std::sqrt(da[static_cast<std::size_t>(j)] *
                                                 db[static_cast<std::size_t>(k)]));
            if (v > 1.0) v = 1.0;
            c(j, k) = v;
        }
    return c;
}

template <typename Mat>
std::vector<double> oracle_row_max(const Mat& a, const Mat& b) {
    const Eigen::MatrixXd c = oracle_abs_cos_matrix(a, b);
    std::vector<double> out(static_cast<std::size_t>(c.rows()));
    for (Eigen::Index j = 0; j < c.rows(); ++j) out[static_cast<std::size_t>(j)] = c.row(j).maxCoeff();
    return out;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index n, Eigen::Index m, std::uint64_t seed) {
    weightscope::GaussianSource gauss(seed);
    Eigen::MatrixXd out(n, m);
    for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < n; ++i) out(i, j) = gauss.next();
    return out;
}

inline Eigen::MatrixXf random_matrix_f(Eigen::Index n, Eigen::Index m, std::uint64_t seed) {
    return random_matrix(n, m, seed).cast<float>();
}

// Gumbel(max) sampler via inverse CDF, for recovery tests.
inline std::vector<double> sample_gumbel(double location, double scale, std::size_t count,
                                         std::uint64_t seed) {
    weightscope::Xoshiro256StarStar rng(seed);
    std::vector<double> out(count);
    for (auto& v : out) {
        double u = rng.uniform();
        if (u <= 0.0) u = 0x1.0p-53;
        v = location - scale * std::log(-std::log(u));
    }
    return out;
}

// Unique scratch directory under the system temp dir, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& label) {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("weightscope_test_" + label + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testsupport
