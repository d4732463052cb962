#pragma once

#include <filesystem>
#include <fstream>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "agentgate/common.hpp"

namespace agentgate::shield {

// Pattern detectors for sensitive data in prompt/tool text. Matches are
// maximal and non-overlapping; earlier start wins, then longer match, then
// rule order, so a fixed rule set scans deterministically.

enum class DetectorKind { ssn, luhn, pattern };

struct Detector {
    std::string name;
    DetectorKind kind = DetectorKind::pattern;
    std::string spec;    // regex source for pattern detectors
    std::regex compiled; // pattern detectors only

    static Detector ssn(std::string name = "ssn") {
        return Detector{std::move(name), DetectorKind::ssn, "", {}};
    }
    static Detector luhn(std::string name = "card") {
        return Detector{std::move(name), DetectorKind::luhn, "", {}};
    }
    static Detector pattern(std::string name, std::string regex_text) {
        Detector d{std::move(name), DetectorKind::pattern, regex_text, {}};
        d.compiled = std::regex(d.spec, std::regex::ECMAScript);
        return d;
    }
};

struct DetectorMatch {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t detector_index = 0;
    std::string text;
};

inline bool luhn_valid(std::string_view digits) {
    int sum = 0;
    bool doubled = false;
    for (std::size_t i = digits.size(); i-- > 0;) {
        int d = digits[i] - '0';
        if (doubled) {
            d *= 2;
            if (d > 9) d -= 9;
        }
        sum += d;
        doubled = !doubled;
    }
    return sum % 10 == 0;
}

namespace detail {

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

/// SSN shapes: ddd-dd-dddd, or a 9-digit run, neither embedded in a longer
/// digit run.
inline void find_ssn(std::string_view text, std::size_t detector_index,
                     std::vector<DetectorMatch>& out) {
    const std::size_t n = text.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (!is_digit(text[i])) continue;
        if (i > 0 && is_digit(text[i - 1])) continue;
        // dashed form, 11 chars
        if (i + 11 <= n && is_digit(text[i + 1]) && is_digit(text[i + 2]) && text[i + 3] == '-' &&
            is_digit(text[i + 4]) && is_digit(text[i + 5]) && text[i + 6] == '-' &&
            is_digit(text[i + 7]) && is_digit(text[i + 8]) && is_digit(text[i + 9]) &&
            is_digit(text[i + 10]) && (i + 11 == n || !is_digit(text[i + 11]))) {
            out.push_back({i, i + 11, detector_index, std::string(text.substr(i, 11))});
            continue;
        }
        // bare 9-digit run
        std::size_t e = i;
        while (e < n && is_digit(text[e])) ++e;
        if (e - i == 9) out.push_back({i, e, detector_index, std::string(text.substr(i, 9))});
    }
}

/// Maximal digit runs of 13-19 digits passing the Luhn checksum.
inline void find_luhn(std::string_view text, std::size_t detector_index,
                      std::vector<DetectorMatch>& out) {
    const std::size_t n = text.size();
    std::size_t i = 0;
    while (i < n) {
        if (!is_digit(text[i])) {
            ++i;
            continue;
        }
        std::size_t e = i;
        while (e < n && is_digit(text[e])) ++e;
        std::size_t len = e - i;
        if (len >= 13 && len <= 19 && luhn_valid(text.substr(i, len))) {
            out.push_back({i, e, detector_index, std::string(text.substr(i, len))});
        }
        i = e;
    }
}

inline void find_pattern(const Detector& d, std::string_view text, std::size_t detector_index,
                         std::vector<DetectorMatch>& out) {
    auto begin = std::cregex_iterator(text.data(), text.data() + text.size(), d.compiled);
    for (auto it = begin; it != std::cregex_iterator(); ++it) {
        std::size_t b = static_cast<std::size_t>(it->position(0));
        std::size_t len = static_cast<std::size_t>(it->length(0));
        if (len == 0) continue;
        out.push_back({b, b + len, detector_index, it->str(0)});
    }
}

} // namespace detail

/// All detector hits, reduced to non-overlapping maximal matches.
inline std::vector<DetectorMatch> find_matches(const std::vector<Detector>& detectors,
                                               std::string_view text) {
    std::vector<DetectorMatch> all;
    for (std::size_t d = 0; d < detectors.size(); ++d) {
        switch (detectors[d].kind) {
        case DetectorKind::ssn: detail::find_ssn(text, d, all); break;
        case DetectorKind::luhn: detail::find_luhn(text, d, all); break;
        case DetectorKind::pattern: detail::find_pattern(detectors[d], text, d, all); break;
        }
    }
    std::sort(all.begin(), all.end(), [](const DetectorMatch& a, const DetectorMatch& b) {
        if (a.begin != b.begin) return a.begin < b.begin;
        if (a.end != b.end) return a.end > b.end; // longer first
        return a.detector_index < b.detector_index;
    });
    std::vector<DetectorMatch> out;
    std::size_t covered = 0;
    for (auto& m : all) {
        if (m.begin < covered) continue;
        covered = m.end;
        out.push_back(std::move(m));
    }
    return out;
}

/// Rules file: one rule per line, `name <tab> kind(ssn|luhn|pattern) <tab> spec`.
/// '#' lines are comments; the spec column is ignored for builtin kinds.
inline std::vector<Detector> parse_rules(std::istream& in, const std::string& origin = "rules") {
    std::vector<Detector> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto tab1 = line.find('\t');
        auto tab2 = line.find('\t', tab1 == std::string::npos ? tab1 : tab1 + 1);
        if (tab1 == std::string::npos || tab2 == std::string::npos) {
            throw Error(origin + ":" + std::to_string(lineno) +
                        ": expected `name<TAB>kind<TAB>spec`");
        }
        std::string name = trim(line.substr(0, tab1));
        std::string kind = trim(line.substr(tab1 + 1, tab2 - tab1 - 1));
        std::string spec = trim(line.substr(tab2 + 1));
        try {
            if (kind == "ssn") {
                out.push_back(Detector::ssn(name));
            } else if (kind == "luhn") {
                out.push_back(Detector::luhn(name));
            } else if (kind == "pattern") {
                out.push_back(Detector::pattern(name, spec));
            } else {
                throw Error("unknown detector kind '" + kind + "'");
            }
        } catch (const std::regex_error& e) {
            throw Error(origin + ":" + std::to_string(lineno) + ": bad pattern: " + e.what());
        } catch (const Error& e) {
            throw Error(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline std::vector<Detector> load_rules_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open detector rules file: " + path.string());
    return parse_rules(in, path.string());
}

inline std::vector<Detector> default_detectors() {
    std::vector<Detector> out;
    out.push_back(Detector::ssn());
    out.push_back(Detector::luhn());
    return out;
}

} // namespace agentgate::shield
