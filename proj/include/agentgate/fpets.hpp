#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "agentgate/common.hpp"

namespace agentgate::fpets {

// Slicing-preserving substitution cipher over three ASCII character classes.
// Encrypting a slice of a message equals slicing the encrypted message, so a
// holder of the key can decrypt any fragment a model echoes back.
//
// This is a classical per-class rotation cipher: it preserves format and
// slicing but is trivially vulnerable to frequency analysis. It is a privacy
// shield against model memorization, not cryptographic protection against an
// adversary holding ciphertext.

class IndexOutOfRange : public Error {
public:
    using Error::Error;
};

enum class CharClass { digit, upper, lower, other };

inline CharClass char_class(char c) {
    if (c >= '0' && c <= '9') return CharClass::digit;
    if (c >= 'A' && c <= 'Z') return CharClass::upper;
    if (c >= 'a' && c <= 'z') return CharClass::lower;
    return CharClass::other;
}

inline int class_size(CharClass cls) {
    switch (cls) {
    case CharClass::digit: return 10;
    case CharClass::upper:
    case CharClass::lower: return 26;
    default: return 0;
    }
}

struct FpetsKey {
    int rot_digit = 0; // [0,10)
    int rot_upper = 0; // [0,26)
    int rot_lower = 0; // [0,26)

    /// Derives the per-class rotations from a 128-bit secret by positional
    /// chunk reduction (bytes 0..4 mod 10, 5..9 mod 26, 10..15 mod 26).
    /// The all-zero secret is the identity key by construction.
    static FpetsKey from_secret(const std::array<std::uint8_t, 16>& secret) {
        auto chunk = [&](std::size_t begin, std::size_t end) {
            std::uint64_t v = 0;
            for (std::size_t i = begin; i < end; ++i) v = (v << 8) | secret[i];
            return v;
        };
        FpetsKey key;
        key.rot_digit = static_cast<int>(chunk(0, 5) % 10);
        key.rot_upper = static_cast<int>(chunk(5, 10) % 26);
        key.rot_lower = static_cast<int>(chunk(10, 16) % 26);
        return key;
    }

    /// Accepts exactly 32 hex characters (the 128-bit secret).
    static FpetsKey from_secret_hex(std::string_view hex) {
        if (hex.size() != 32) throw Error("fpets secret must be 32 hex characters");
        auto bytes = from_hex(hex);
        std::array<std::uint8_t, 16> secret{};
        std::copy(bytes.begin(), bytes.end(), secret.begin());
        return from_secret(secret);
    }

    /// Fresh random key with every class rotation nonzero, so encryption of
    /// any in-class character never equals the plaintext character.
    static FpetsKey random_nonidentity() {
        auto secret = secure_random_128();
        FpetsKey key = from_secret(secret);
        if (key.rot_digit == 0) key.rot_digit = 1 + static_cast<int>(secret[0] % 9);
        if (key.rot_upper == 0) key.rot_upper = 1 + static_cast<int>(secret[1] % 25);
        if (key.rot_lower == 0) key.rot_lower = 1 + static_cast<int>(secret[2] % 25);
        return key;
    }

    bool is_identity() const { return rot_digit == 0 && rot_upper == 0 && rot_lower == 0; }

    int rotation(CharClass cls) const {
        switch (cls) {
        case CharClass::digit: return rot_digit;
        case CharClass::upper: return rot_upper;
        case CharClass::lower: return rot_lower;
        default: return 0;
        }
    }
};

namespace detail {

inline char rotate_char(char c, int amount) {
    switch (char_class(c)) {
    case CharClass::digit: return static_cast<char>('0' + (((c - '0') + amount) % 10 + 10) % 10);
    case CharClass::upper: return static_cast<char>('A' + (((c - 'A') + amount) % 26 + 26) % 26);
    case CharClass::lower: return static_cast<char>('a' + (((c - 'a') + amount) % 26 + 26) % 26);
    default: return c;
    }
}

} // namespace detail

/// Characters outside the three classes pass through unchanged.
inline std::string encrypt(const FpetsKey& key, std::string_view m) {
    std::string out;
    out.reserve(m.size());
    for (char c : m) out.push_back(detail::rotate_char(c, key.rotation(char_class(c))));
    return out;
}

inline std::string decrypt(const FpetsKey& key, std::string_view c) {
    std::string out;
    out.reserve(c.size());
    for (char ch : c) out.push_back(detail::rotate_char(ch, -key.rotation(char_class(ch))));
    return out;
}

/// Checks E(m[i..j)) == E(m)[i..j) by computing both sides. Always true for
/// this cipher; the call exists so the defining law stays testable.
inline bool slice_matches(const FpetsKey& key, std::string_view m, std::size_t i, std::size_t j) {
    if (i > j || j > m.size()) throw IndexOutOfRange("slice indices out of range");
    std::string lhs = encrypt(key, m.substr(i, j - i));
    std::string rhs = encrypt(key, m).substr(i, j - i);
    return lhs == rhs;
}

// --- tweaked mode (opt-in) ---------------------------------------------------
//
// Position-dependent variant: character k is rotated by base + offset + k.
// Slicing still holds when the caller passes the slice's absolute starting
// offset, i.e. encrypt_tweaked(key, m.substr(i, j-i), i) ==
// encrypt_tweaked(key, m, 0).substr(i, j-i). Not used by the shield.

inline std::string encrypt_tweaked(const FpetsKey& key, std::string_view m, std::size_t offset) {
    std::string out;
    out.reserve(m.size());
    for (std::size_t k = 0; k < m.size(); ++k) {
        CharClass cls = char_class(m[k]);
        int size = class_size(cls);
        int rot = size == 0 ? 0 : static_cast<int>((key.rotation(cls) + (offset + k)) % size);
        out.push_back(detail::rotate_char(m[k], rot));
    }
    return out;
}

inline std::string decrypt_tweaked(const FpetsKey& key, std::string_view c, std::size_t offset) {
    std::string out;
    out.reserve(c.size());
    for (std::size_t k = 0; k < c.size(); ++k) {
        CharClass cls = char_class(c[k]);
        int size = class_size(cls);
        int rot = size == 0 ? 0 : static_cast<int>((key.rotation(cls) + (offset + k)) % size);
        out.push_back(detail::rotate_char(c[k], -rot));
    }
    return out;
}

} // namespace agentgate::fpets
