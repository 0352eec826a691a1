#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>

namespace forge {

/// Incremental SHA-256 (backed by OpenSSL EVP).
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    Sha256& update(std::string_view bytes);
    Sha256& update(std::span<const unsigned char> bytes);
    template <typename T>
    Sha256& update_pod(const T& value) {
        return update(std::string_view(reinterpret_cast<const char*>(&value), sizeof value));
    }
    /// Lowercase hex digest; the object cannot be updated afterwards.
    std::string hex();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);
/// Digest over (relative path, file digest) pairs of every regular file
/// under `dir` in sorted order, skipping names that start with '_'.
std::string sha256_tree(const std::filesystem::path& dir);
/// Stable 64-bit FNV-1a, used to derive per-item seeds.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace forge
