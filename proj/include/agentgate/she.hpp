#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <gmpxx.h>

#include "agentgate/common.hpp"

namespace agentgate::she {

// Symmetric somewhat-homomorphic encryption over the integers.
// A ciphertext of m is c = m + t*r + p*q for a secret odd p; reducing mod p
// and centering recovers m + t*r, and mod t recovers m. Sums and products of
// ciphertexts decrypt to sums and products of plaintexts mod t while the
// accumulated noise |m + t*r| stays below p/2. Noise is tracked as a
// worst-case symbolic bound so decryption refuses deterministically instead
// of failing probabilistically. There is no bootstrapping: the supported
// circuit depth is bounded by the parameters.

class InvalidParams : public Error {
public:
    using Error::Error;
};

class PlaintextOutOfRange : public Error {
public:
    using Error::Error;
};

class NoiseBudgetExceeded : public Error {
public:
    using Error::Error;
};

class BadCiphertext : public Error {
public:
    using Error::Error;
};

struct SheParams {
    mpz_class t = mpz_class(1) << 16; // plaintext modulus
    unsigned eta = 512;               // secret bit length
    unsigned rho = 32;                // noise bit length
    unsigned gamma = 2048;            // fresh ciphertext bit bound
    unsigned mult_depth = 2;          // guaranteed multiplication depth

    /// Requires t * 2^(mult_depth*(rho + bits(t)) + 20) < 2^(eta - 2), which
    /// leaves room for mult_depth multiplications and 2^20 additions over
    /// fresh ciphertexts before the noise reaches p/2.
    void validate() const {
        if (t < 2) throw InvalidParams("plaintext modulus t must be >= 2");
        if (gamma < eta + 2) throw InvalidParams("gamma must exceed eta + 1");
        unsigned t_bits = static_cast<unsigned>(mpz_sizeinbase(t.get_mpz_t(), 2));
        if (eta < 3 || mult_depth * (rho + t_bits) + 20 >= eta) {
            throw InvalidParams("t*2^(mult_depth*(rho+bits(t))+20) < 2^(eta-2) violated");
        }
        mpz_class lhs = t << (mult_depth * (rho + t_bits) + 20);
        mpz_class rhs = mpz_class(1) << (eta - 2);
        if (lhs >= rhs) {
            throw InvalidParams("t*2^(mult_depth*(rho+bits(t))+20) < 2^(eta-2) violated");
        }
    }

    /// 8-hex-char digest of (t, eta, rho, gamma); serialized ciphertexts carry
    /// it so tokens can only be parsed back under matching parameters.
    std::string digest() const {
        std::string blob = t.get_str(16) + "/" + std::to_string(eta) + "/" +
                           std::to_string(rho) + "/" + std::to_string(gamma);
        std::uint64_t h = mix_hash64(0x73686531, blob);
        static const char hexd[] = "0123456789abcdef";
        std::string out(8, '0');
        for (int i = 0; i < 8; ++i) out[i] = hexd[(h >> (4 * i)) & 0xf];
        return out;
    }
};

/// Parameters sized for whole 13-19 digit numbers as single plaintexts
/// (t = 2^64), used by the privacy shield.
inline SheParams wide_plaintext_params() {
    SheParams p;
    p.t = mpz_class(1) << 64;
    return p;
}

struct SheKey {
    mpz_class p; // odd, exactly eta bits
};

struct SheCiphertext {
    mpz_class c;
    mpz_class noise_bound; // worst-case |centered residue|
};

namespace detail {

inline gmp_randclass& thread_rng() {
    thread_local gmp_randclass rng(gmp_randinit_mt);
    thread_local bool seeded = [] {
        auto bytes = secure_random_128();
        mpz_class seed;
        mpz_import(seed.get_mpz_t(), bytes.size(), 1, 1, 0, 0, bytes.data());
        rng.seed(seed);
        return true;
    }();
    (void)seeded;
    return rng;
}

} // namespace detail

/// Deterministic under a fixed seed.
inline SheKey keygen(const SheParams& params, std::uint64_t seed) {
    params.validate();
    gmp_randclass rng(gmp_randinit_mt);
    rng.seed(static_cast<unsigned long>(seed));
    mpz_class p = rng.get_z_bits(params.eta);
    p |= mpz_class(1) << (params.eta - 1); // exactly eta bits
    p |= 1;                                // odd
    return SheKey{p};
}

inline SheKey keygen(const SheParams& params) {
    params.validate();
    mpz_class p = detail::thread_rng().get_z_bits(params.eta);
    p |= mpz_class(1) << (params.eta - 1);
    p |= 1;
    return SheKey{p};
}

inline SheCiphertext encrypt(const SheKey& key, const SheParams& params, const mpz_class& m) {
    if (m < 0 || m >= params.t) throw PlaintextOutOfRange("plaintext must lie in [0, t)");
    auto& rng = detail::thread_rng();
    // r uniform in [-(2^rho - 1), 2^rho - 1]
    mpz_class r_span = (mpz_class(1) << (params.rho + 1)) - 1;
    mpz_class r = rng.get_z_range(r_span) - ((mpz_class(1) << params.rho) - 1);
    // q uniform in [1, 2^(gamma - eta - 1) - 1]; keeps fresh c under 2^gamma
    mpz_class q_span = (mpz_class(1) << (params.gamma - params.eta - 1)) - 1;
    mpz_class q = rng.get_z_range(q_span) + 1;
    SheCiphertext ct;
    ct.c = m + params.t * r + key.p * q;
    ct.noise_bound = params.t * (mpz_class(1) << params.rho) + params.t;
    return ct;
}

inline SheCiphertext encrypt(const SheKey& key, const SheParams& params, std::uint64_t m) {
    mpz_class v;
    mpz_import(v.get_mpz_t(), 1, 1, sizeof(m), 0, 0, &m);
    return encrypt(key, params, v);
}

/// Refuses with NoiseBudgetExceeded once the tracked bound reaches p/2.
inline mpz_class decrypt(const SheKey& key, const SheParams& params, const SheCiphertext& ct) {
    if (2 * ct.noise_bound >= key.p) {
        throw NoiseBudgetExceeded("ciphertext noise bound reached p/2; result would be unreliable");
    }
    mpz_class rem = ct.c % key.p;
    if (rem < 0) rem += key.p;
    if (2 * rem > key.p) rem -= key.p; // center into (-p/2, p/2]
    mpz_class m = rem % params.t;
    if (m < 0) m += params.t;
    return m;
}

inline SheCiphertext add(const SheCiphertext& a, const SheCiphertext& b) {
    return SheCiphertext{a.c + b.c, a.noise_bound + b.noise_bound};
}

inline SheCiphertext mul(const SheCiphertext& a, const SheCiphertext& b) {
    return SheCiphertext{a.c * b.c, a.noise_bound * b.noise_bound};
}

/// noise_bound / (p/2) clamped to [0, 1]; values < 1 mean decryptable.
inline double noise_margin(const SheCiphertext& ct, const SheKey& key) {
    mpz_class twice = 2 * ct.noise_bound;
    if (twice >= key.p) return 1.0;
    mpq_class ratio(twice, key.p);
    ratio.canonicalize();
    double d = ratio.get_d();
    if (d < 0.0) return 0.0;
    if (d > 1.0) return 1.0;
    return d;
}

// --- token serialization -----------------------------------------------------

inline constexpr std::string_view kTokenPrefix = "she1:";

inline std::string serialize(const SheCiphertext& ct, const SheParams& params) {
    return std::string(kTokenPrefix) + ct.c.get_str(16) + ":" +
           ct.noise_bound.get_str(16) + ":" + params.digest();
}

inline bool looks_like_token(std::string_view text) {
    if (!starts_with(text, kTokenPrefix)) return false;
    for (char c : text.substr(kTokenPrefix.size())) {
        if (!(hex_nibble(c) >= 0 || c == ':')) return false;
    }
    return true;
}

inline SheCiphertext parse(std::string_view token, const SheParams& params) {
    if (!starts_with(token, kTokenPrefix)) throw BadCiphertext("missing she1: prefix");
    std::string_view body = token.substr(kTokenPrefix.size());
    auto first = body.find(':');
    auto second = body.find(':', first == std::string_view::npos ? first : first + 1);
    if (first == std::string_view::npos || second == std::string_view::npos) {
        throw BadCiphertext("malformed she1 token");
    }
    std::string_view c_hex = body.substr(0, first);
    std::string_view n_hex = body.substr(first + 1, second - first - 1);
    std::string_view digest = body.substr(second + 1);
    if (digest != params.digest()) throw BadCiphertext("she1 token parameter digest mismatch");
    SheCiphertext ct;
    if (c_hex.empty() || n_hex.empty() ||
        mpz_set_str(ct.c.get_mpz_t(), std::string(c_hex).c_str(), 16) != 0 ||
        mpz_set_str(ct.noise_bound.get_mpz_t(), std::string(n_hex).c_str(), 16) != 0) {
        throw BadCiphertext("malformed she1 token");
    }
    return ct;
}

/// Scans text for the next well-formed token starting at or after `from`.
/// Returns npos when none remains.
inline std::size_t find_token(std::string_view text, std::size_t from, std::size_t* length_out) {
    while (from < text.size()) {
        auto at = text.find(kTokenPrefix, from);
        if (at == std::string_view::npos) return std::string_view::npos;
        std::size_t end = at + kTokenPrefix.size();
        while (end < text.size() && (hex_nibble(text[end]) >= 0 || text[end] == ':')) ++end;
        while (end > at && text[end - 1] == ':') --end; // trailing colon is punctuation
        std::string_view candidate = text.substr(at, end - at);
        if (candidate.size() > kTokenPrefix.size()) {
            *length_out = candidate.size();
            return at;
        }
        from = at + kTokenPrefix.size();
    }
    return std::string_view::npos;
}

} // namespace agentgate::she
