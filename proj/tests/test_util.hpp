#pragma once

#include <filesystem>
#include <random>
#include <string>

namespace testutil {

inline std::string random_alnum(std::mt19937_64& rng, std::size_t len) {
    static const char chars[] = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";
    std::uniform_int_distribution<std::size_t> pick(0, sizeof(chars) - 2);
    std::string out;
    out.reserve(len);
    for (std::size_t i = 0; i < len; ++i) out.push_back(chars[pick(rng)]);
    return out;
}

/// Alphanumerics plus pass-through punctuation and spaces.
inline std::string random_text(std::mt19937_64& rng, std::size_t len) {
    static const char chars[] =
        "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz .,-_!?";
    std::uniform_int_distribution<std::size_t> pick(0, sizeof(chars) - 2);
    std::string out;
    out.reserve(len);
    for (std::size_t i = 0; i < len; ++i) out.push_back(chars[pick(rng)]);
    return out;
}

/// Unique scratch directory under the system temp dir; caller cleans up.
inline std::filesystem::path scratch_dir(const std::string& tag) {
    static std::mt19937_64 rng{std::random_device{}()};
    auto dir = std::filesystem::temp_directory_path() /
               ("agentgate-test-" + tag + "-" + std::to_string(rng()));
    std::filesystem::create_directories(dir);
    return dir;
}

struct ScratchDir {
    std::filesystem::path path;
    explicit ScratchDir(const std::string& tag) : path(scratch_dir(tag)) {}
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

} // namespace testutil
