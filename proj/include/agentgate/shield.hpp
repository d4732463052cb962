#pragma once

#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "agentgate/common.hpp"
#include "agentgate/detect.hpp"
#include "agentgate/fpets.hpp"
#include "agentgate/she.hpp"

namespace agentgate::shield {

// Shields sensitive values on their way to the model and restores them on the
// way back. The ledger is session-scoped: it owns the session's cipher keys
// and the inverse mapping from tokens to originals, is never serialized into
// a model request, and dies with the session. Everything involving plaintext
// happens on this side of the model boundary.

class BlockedContent : public Error {
public:
    explicit BlockedContent(std::string detector_name)
        : Error("content blocked by detector '" + detector_name + "'"),
          detector(std::move(detector_name)) {}

    std::string detector;
};

enum class ShieldMode { whitewash, fpets, she, block };

inline std::string_view mode_name(ShieldMode m) {
    switch (m) {
    case ShieldMode::whitewash: return "whitewash";
    case ShieldMode::fpets: return "fpets";
    case ShieldMode::she: return "she";
    case ShieldMode::block: return "block";
    }
    return "whitewash";
}

inline ShieldMode mode_from_name(std::string_view name) {
    if (name == "whitewash") return ShieldMode::whitewash;
    if (name == "fpets") return ShieldMode::fpets;
    if (name == "she") return ShieldMode::she;
    if (name == "block") return ShieldMode::block;
    throw Error("unknown shield mode '" + std::string(name) + "'");
}

struct ShieldPolicy {
    ShieldMode mode = ShieldMode::fpets;
    std::unordered_map<std::string, ShieldMode> overrides; // per-detector
    std::vector<Detector> detectors = default_detectors();

    ShieldMode mode_for(const std::string& detector) const {
        auto it = overrides.find(detector);
        return it == overrides.end() ? mode : it->second;
    }
};

struct LedgerEntry {
    std::string id; // "t<N>", used in audit logs instead of plaintext
    std::string token;
    std::string detector;
    ShieldMode mode = ShieldMode::whitewash;
    std::optional<std::string> plaintext; // absent for key-reference entries
};

class ShieldLedger {
public:
    explicit ShieldLedger(std::uint64_t whitewash_seed = 0,
                          fpets::FpetsKey key = fpets::FpetsKey::random_nonidentity(),
                          she::SheParams params = she::wide_plaintext_params())
        : fpets_key_(key), she_params_(std::move(params)), rng_(whitewash_seed) {
        she_params_.validate();
        she_key_ = she::keygen(she_params_);
    }

    const fpets::FpetsKey& fpets_key() const { return fpets_key_; }
    const she::SheParams& she_params() const { return she_params_; }
    const she::SheKey& she_key() const { return she_key_; }

    const std::vector<LedgerEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    void set_audit_sink(std::ostream* sink) { audit_ = sink; }

    /// Registers (or reuses) a substitution token for `plaintext`.
    const LedgerEntry& add(std::string_view plaintext, const std::string& detector,
                           ShieldMode mode) {
        auto key = std::string(mode_name(mode)) + "|" + detector + "|" + std::string(plaintext);
        if (auto it = by_plaintext_.find(key); it != by_plaintext_.end()) {
            return entries_[it->second];
        }
        LedgerEntry entry;
        entry.detector = detector;
        entry.mode = mode;
        entry.plaintext = std::string(plaintext);
        switch (mode) {
        case ShieldMode::whitewash: entry.token = fresh_whitewash_token(plaintext); break;
        case ShieldMode::fpets: entry.token = fpets::encrypt(fpets_key_, plaintext); break;
        case ShieldMode::she: entry.token = encrypt_numeric(plaintext); break;
        case ShieldMode::block: throw BlockedContent(detector);
        }
        return insert(std::move(entry), key);
    }

    /// Key-reference entry: no plaintext retained; restore decrypts via the
    /// session key. Used for tool-produced homomorphic result tokens.
    const LedgerEntry& add_she_key_reference(const std::string& token,
                                             const std::string& detector = "she") {
        if (auto it = by_token_.find(token); it != by_token_.end()) return entries_[it->second];
        LedgerEntry entry;
        entry.detector = detector;
        entry.mode = ShieldMode::she;
        entry.token = token;
        return insert(std::move(entry), "");
    }

    const LedgerEntry* find_token(std::string_view token) const {
        auto it = by_token_.find(std::string(token));
        return it == by_token_.end() ? nullptr : &entries_[it->second];
    }

    std::string decrypt_she_token(std::string_view token) const {
        she::SheCiphertext ct = she::parse(token, she_params_);
        return she::decrypt(she_key_, she_params_, ct).get_str(10);
    }

    void audit_line(std::string_view line) const {
        if (audit_) (*audit_) << line << '\n';
    }

private:
    const LedgerEntry& insert(LedgerEntry entry, const std::string& plaintext_key) {
        entry.id = "t" + std::to_string(entries_.size());
        entries_.push_back(std::move(entry));
        std::size_t idx = entries_.size() - 1;
        by_token_[entries_[idx].token] = idx;
        if (!plaintext_key.empty()) by_plaintext_[plaintext_key] = idx;
        return entries_[idx];
    }

    /// Random value with the same length and per-position character class.
    std::string fresh_whitewash_token(std::string_view plaintext) {
        for (int attempt = 0; attempt < 64; ++attempt) {
            std::string token;
            token.reserve(plaintext.size());
            for (char c : plaintext) {
                switch (fpets::char_class(c)) {
                case fpets::CharClass::digit:
                    token.push_back(static_cast<char>('0' + draw(10)));
                    break;
                case fpets::CharClass::upper:
                    token.push_back(static_cast<char>('A' + draw(26)));
                    break;
                case fpets::CharClass::lower:
                    token.push_back(static_cast<char>('a' + draw(26)));
                    break;
                default: token.push_back(c);
                }
            }
            bool clashes = token == plaintext || by_token_.count(token) > 0;
            for (const auto& e : entries_) {
                if (e.plaintext && *e.plaintext == token) clashes = true;
            }
            if (!clashes) return token;
        }
        throw Error("could not draw a unique whitewash token");
    }

    std::string encrypt_numeric(std::string_view plaintext) {
        std::string digits;
        for (char c : plaintext) {
            if (c >= '0' && c <= '9') {
                digits.push_back(c);
            } else if (c != '-' && c != ' ') {
                throw Error("she shield mode requires an all-numeric match");
            }
        }
        if (digits.empty()) throw Error("she shield mode requires an all-numeric match");
        mpz_class value(digits, 10);
        if (value >= she_params_.t) throw Error("numeric match exceeds she plaintext modulus");
        return she::serialize(she::encrypt(she_key_, she_params_, value), she_params_);
    }

    int draw(int n) { return static_cast<int>(rng_() % static_cast<std::uint64_t>(n)); }

    fpets::FpetsKey fpets_key_;
    she::SheParams she_params_;
    she::SheKey she_key_;
    std::mt19937_64 rng_;
    std::vector<LedgerEntry> entries_;
    std::unordered_map<std::string, std::size_t> by_token_;
    std::unordered_map<std::string, std::size_t> by_plaintext_;
    std::ostream* audit_ = nullptr;
};

namespace detail {

/// Spans of `text` already occupied by ciphertext: occurrences of registered
/// tokens plus any well-formed she1: token. Format-preserving ciphertext is
/// indistinguishable from sensitive plaintext to the detectors, so these
/// spans are exempt from scrubbing (re-encrypting them would break restore).
inline std::vector<std::pair<std::size_t, std::size_t>> protected_spans(
    const ShieldLedger& ledger, std::string_view text) {
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (const auto& e : ledger.entries()) {
        if (e.token.empty()) continue;
        std::size_t from = 0;
        while (true) {
            auto at = text.find(e.token, from);
            if (at == std::string_view::npos) break;
            spans.emplace_back(at, at + e.token.size());
            from = at + e.token.size();
        }
    }
    std::size_t from = 0;
    while (true) {
        std::size_t len = 0;
        auto at = she::find_token(text, from, &len);
        if (at == std::string_view::npos) break;
        spans.emplace_back(at, at + len);
        from = at + len;
    }
    return spans;
}

inline bool overlaps_any(const std::vector<std::pair<std::size_t, std::size_t>>& spans,
                         std::size_t begin, std::size_t end) {
    for (const auto& [b, e] : spans) {
        if (begin < e && b < end) return true;
    }
    return false;
}

} // namespace detail

/// Replaces every detector match per the policy mode and records the inverse
/// mapping. Non-matching text is untouched. Block mode rejects the request.
inline std::string scrub(const ShieldPolicy& policy, ShieldLedger& ledger, std::string_view text) {
    auto spans = detail::protected_spans(ledger, text);
    auto all_matches = find_matches(policy.detectors, text);
    std::vector<DetectorMatch> matches;
    for (auto& m : all_matches) {
        if (!detail::overlaps_any(spans, m.begin, m.end)) matches.push_back(std::move(m));
    }
    for (const auto& m : matches) {
        if (policy.mode_for(policy.detectors[m.detector_index].name) == ShieldMode::block) {
            throw BlockedContent(policy.detectors[m.detector_index].name);
        }
    }
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    for (const auto& m : matches) {
        out.append(text.substr(pos, m.begin - pos));
        const std::string& detector = policy.detectors[m.detector_index].name;
        const LedgerEntry& entry = ledger.add(m.text, detector, policy.mode_for(detector));
        ledger.audit_line("scrub detector=" + detector + " mode=" +
                          std::string(mode_name(entry.mode)) + " token=" + entry.id);
        out.append(entry.token);
        pos = m.end;
    }
    out.append(text.substr(pos));
    return out;
}

namespace detail {

/// Longest fragment of `text` at `pos` (>= 3 chars) that occurs inside a
/// registered fpets token; such fragments decrypt positionlessly.
inline std::size_t longest_fpets_fragment(const ShieldLedger& ledger, std::string_view text,
                                          std::size_t pos, const LedgerEntry** entry_out) {
    std::size_t best = 0;
    for (const auto& e : ledger.entries()) {
        if (e.mode != ShieldMode::fpets) continue;
        std::size_t cap = std::min(e.token.size(), text.size() - pos);
        for (std::size_t len = cap; len >= 3 && len > best; --len) {
            if (e.token.find(text.substr(pos, len)) != std::string_view::npos) {
                best = len;
                *entry_out = &e;
                break;
            }
        }
    }
    return best;
}

} // namespace detail

/// Replaces ledger tokens (and fpets token fragments of length >= 3, and
/// decryptable she1: tokens) with the original plaintext. Unknown text passes
/// through untouched.
inline std::string restore(const ShieldLedger& ledger, std::string_view text) {
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        // full token match, longest first
        const LedgerEntry* full = nullptr;
        std::size_t full_len = 0;
        for (const auto& e : ledger.entries()) {
            if (e.token.size() > full_len && e.token.size() <= text.size() - pos &&
                text.compare(pos, e.token.size(), e.token) == 0) {
                full = &e;
                full_len = e.token.size();
            }
        }
        if (full != nullptr) {
            if (full->plaintext) {
                out.append(*full->plaintext);
            } else {
                out.append(ledger.decrypt_she_token(full->token));
            }
            ledger.audit_line("restore token=" + full->id + " kind=full");
            pos += full_len;
            continue;
        }
        // unregistered but well-formed homomorphic token
        if (starts_with(text.substr(pos), she::kTokenPrefix)) {
            std::size_t len = 0;
            std::size_t at = she::find_token(text, pos, &len);
            if (at == pos) {
                try {
                    out.append(ledger.decrypt_she_token(text.substr(pos, len)));
                    ledger.audit_line("restore token=<unregistered> kind=she");
                    pos += len;
                    continue;
                } catch (const Error&) {
                    // not ours; fall through and copy verbatim
                }
            }
        }
        // fpets token fragment
        const LedgerEntry* frag_entry = nullptr;
        std::size_t frag_len = detail::longest_fpets_fragment(ledger, text, pos, &frag_entry);
        if (frag_len >= 3) {
            out.append(fpets::decrypt(ledger.fpets_key(), text.substr(pos, frag_len)));
            ledger.audit_line("restore token=" + frag_entry->id + " kind=slice");
            pos += frag_len;
            continue;
        }
        out.push_back(text[pos]);
        ++pos;
    }
    return out;
}

struct LeakFinding {
    std::string detector;
    std::size_t offset = 0;
    std::size_t length = 0;
};

/// Every occurrence of any ledger plaintext inside a model-bound request.
/// An empty result is the pass condition.
inline std::vector<LeakFinding> audit_leak(const ShieldLedger& ledger, std::string_view request) {
    std::vector<LeakFinding> findings;
    for (const auto& e : ledger.entries()) {
        if (!e.plaintext || e.plaintext->empty()) continue;
        std::size_t from = 0;
        while (true) {
            auto at = request.find(*e.plaintext, from);
            if (at == std::string_view::npos) break;
            findings.push_back({e.detector, at, e.plaintext->size()});
            from = at + 1;
        }
    }
    std::sort(findings.begin(), findings.end(), [](const LeakFinding& a, const LeakFinding& b) {
        return a.offset < b.offset || (a.offset == b.offset && a.length < b.length);
    });
    return findings;
}

} // namespace agentgate::shield
