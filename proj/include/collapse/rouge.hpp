#pragma once
// ROUGE-L recall over token sequences and the derived unlearning reward
// r(x) = 1 - ROUGE-L(x, ground truth).
//
// Tokenization convention (fixed so scores are reproducible): lowercase,
// split on whitespace (ASCII plus the common Unicode space code points),
// strip the surrounding punctuation characters . , ! ? ; : " '

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace collapse {

struct TokenSequence {
    std::vector<std::string> tokens;

    TokenSequence() = default;
    explicit TokenSequence(std::vector<std::string> t) : tokens(std::move(t)) {}

    std::size_t size() const { return tokens.size(); }
    bool empty() const { return tokens.empty(); }
    bool operator==(const TokenSequence& other) const { return tokens == other.tokens; }

    std::string joined() const {
        std::string out;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (i > 0) out += ' ';
            out += tokens[i];
        }
        return out;
    }
};

namespace detail {

// Decodes one UTF-8 code point starting at position i; advances i.
// Malformed bytes are passed through as single code points.
inline std::uint32_t utf8_next(std::string_view text, std::size_t& i) {
    const auto byte = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    std::uint32_t cp = byte;
    if (byte >= 0xF0) {
        len = 4;
        cp = byte & 0x07u;
    } else if (byte >= 0xE0) {
        len = 3;
        cp = byte & 0x0Fu;
    } else if (byte >= 0xC0) {
        len = 2;
        cp = byte & 0x1Fu;
    }
    if (i + len > text.size()) len = 1;
    for (std::size_t j = 1; j < len; ++j) {
        const auto cont = static_cast<unsigned char>(text[i + j]);
        if ((cont & 0xC0u) != 0x80u) {
            len = 1;
            cp = byte;
            break;
        }
        cp = (cp << 6) | (cont & 0x3Fu);
    }
    i += len;
    return cp;
}

inline bool is_space_codepoint(std::uint32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

inline bool is_strippable_punct(char c) {
    switch (c) {
        case '.': case ',': case '!': case '?': case ';': case ':':
        case '"': case '\'':
            return true;
        default:
            return false;
    }
}

}  // namespace detail

inline TokenSequence tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    std::size_t i = 0;
    auto flush = [&]() {
        std::size_t begin = 0;
        std::size_t end = current.size();
        while (begin < end && detail::is_strippable_punct(current[begin])) ++begin;
        while (end > begin && detail::is_strippable_punct(current[end - 1])) --end;
        if (end > begin) tokens.push_back(current.substr(begin, end - begin));
        current.clear();
    };
    while (i < text.size()) {
        const std::size_t start = i;
        const std::uint32_t cp = detail::utf8_next(text, i);
        if (detail::is_space_codepoint(cp)) {
            flush();
        } else {
            for (std::size_t j = start; j < i; ++j) {
                char c = text[j];
                if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
                current += c;
            }
        }
    }
    flush();
    return TokenSequence(std::move(tokens));
}

// Length of the longest common subsequence, O(|a| * |b|) dynamic program
// with a two-row table.
inline std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> curr(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            if (a.tokens[i - 1] == b.tokens[j - 1]) {
                curr[j] = prev[j - 1] + 1;
            } else {
                curr[j] = std::max(prev[j], curr[j - 1]);
            }
        }
        std::swap(prev, curr);
    }
    return prev[b.size()];
}

// Recall ROUGE-L: LCS(candidate, reference) / |reference|.
inline double rouge_l_recall(const TokenSequence& candidate, const TokenSequence& reference) {
    if (reference.empty()) {
        throw std::invalid_argument("rouge_l_recall: empty reference");
    }
    return static_cast<double>(lcs_length(candidate, reference)) /
           static_cast<double>(reference.size());
}

// Unlearning reward in [0, 1]; 0 for an exact match with the ground
// truth, 1 for a token-disjoint candidate.
inline double unlearn_reward(const TokenSequence& candidate, const TokenSequence& ground_truth) {
    return 1.0 - rouge_l_recall(candidate, ground_truth);
}

}  // namespace collapse
