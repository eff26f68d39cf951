#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "hypercl/hypercl.hpp"

namespace testing {

inline hypercl::Vector gaussian(std::size_t n, hypercl::Rng& rng, double s = 1.0) {
    return hypercl::random_gaussian(n, rng, s);
}

inline hypercl::Matrix gaussian(std::size_t r, std::size_t c, hypercl::Rng& rng, double s = 1.0) {
    hypercl::Matrix m(r, c);
    hypercl::fill_gaussian(m.values(), rng, s);
    return m;
}

inline double max_abs_diff(const hypercl::Vector& a, const hypercl::Vector& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

inline double max_abs_diff(const hypercl::Matrix& a, const hypercl::Matrix& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.values()[i] - b.values()[i]));
    return d;
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("hypercl-" + tag + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

}  // namespace testing
