#pragma once

#include "forge/frames.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace test_support {

inline forge::Frame random_frame(std::mt19937_64& rng, int w, int h, std::size_t index = 0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    forge::Frame f(w, h, 1, index);
    for (auto& v : f.pixels()) v = u(rng);
    return f;
}

inline forge::Frame constant_frame(int w, int h, double v) {
    forge::Frame f(w, h, 1);
    for (auto& p : f.pixels()) p = v;
    return f;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("forge_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

}  // namespace test_support
