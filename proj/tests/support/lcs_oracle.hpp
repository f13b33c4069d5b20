#pragma once
// Brute-force longest-common-subsequence oracles over small symbol
// sequences, independent of the dynamic program under test.
//
// lcs_by_subsets enumerates index subsets of `a` from largest to
// smallest and returns the size of the first subset that is a
// subsequence of `b`. enumerate_sequences + SubsequenceSet support
// exhaustive all-pairs sweeps: every distinct subsequence of a sequence
// is encoded as a base-4 integer so membership is a bitset lookup.

#include <algorithm>
#include <bitset>
#include <cstdint>
#include <vector>

namespace testsupport {

inline bool is_subsequence(const std::vector<int>& needle, const std::vector<int>& haystack) {
    std::size_t i = 0;
    for (std::size_t j = 0; j < haystack.size() && i < needle.size(); ++j) {
        if (haystack[j] == needle[i]) ++i;
    }
    return i == needle.size();
}

// Plain bitmask brute force; usable for |a| <= ~16.
inline std::size_t lcs_by_subsets(const std::vector<int>& a, const std::vector<int>& b) {
    const std::size_t la = a.size();
    const std::uint32_t mask_count = 1u << la;
    std::vector<std::vector<std::uint32_t>> by_size(la + 1);
    for (std::uint32_t mask = 0; mask < mask_count; ++mask) {
        by_size[static_cast<std::size_t>(__builtin_popcount(mask))].push_back(mask);
    }
    for (std::size_t size = std::min(la, b.size()); size > 0; --size) {
        for (const std::uint32_t mask : by_size[size]) {
            std::vector<int> candidate;
            candidate.reserve(size);
            for (std::size_t i = 0; i < la; ++i) {
                if (mask & (1u << i)) candidate.push_back(a[i]);
            }
            if (is_subsequence(candidate, b)) return size;
        }
    }
    return 0;
}

// All sequences over {0..alphabet-1} of length 0..max_len, shortest first.
inline std::vector<std::vector<int>> enumerate_sequences(int alphabet, std::size_t max_len) {
    std::vector<std::vector<int>> out;
    out.push_back({});
    std::size_t begin = 0;
    for (std::size_t len = 1; len <= max_len; ++len) {
        const std::size_t end = out.size();
        for (std::size_t i = begin; i < end; ++i) {
            for (int symbol = 0; symbol < alphabet; ++symbol) {
                auto seq = out[i];
                seq.push_back(symbol);
                out.push_back(std::move(seq));
            }
        }
        begin = end;
    }
    return out;
}

// Base-4 encoding of a sequence over a 3-symbol alphabet (symbol + 1 per
// digit); sequences up to length 8 fit below 4^8.
inline std::uint32_t encode_sequence(const std::vector<int>& seq) {
    std::uint32_t code = 0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        code = code * 4 + static_cast<std::uint32_t>(seq[i] + 1);
    }
    return code;
}

// Distinct subsequences of `seq`, encoded, sorted by length descending
// (stable within a length).
inline std::vector<std::pair<std::uint8_t, std::uint32_t>> distinct_subsequences(
    const std::vector<int>& seq) {
    std::vector<std::pair<std::uint8_t, std::uint32_t>> out;
    const std::uint32_t mask_count = 1u << seq.size();
    for (std::uint32_t mask = 0; mask < mask_count; ++mask) {
        std::vector<int> sub;
        for (std::size_t i = 0; i < seq.size(); ++i) {
            if (mask & (1u << i)) sub.push_back(seq[i]);
        }
        out.emplace_back(static_cast<std::uint8_t>(sub.size()), encode_sequence(sub));
    }
    std::sort(out.begin(), out.end(), [](const auto& lhs, const auto& rhs) {
        if (lhs.first != rhs.first) return lhs.first > rhs.first;
        return lhs.second < rhs.second;
    });
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// Membership bitset over encoded subsequences of one sequence.
struct SubsequenceSet {
    std::bitset<65536> present;

    explicit SubsequenceSet(const std::vector<std::pair<std::uint8_t, std::uint32_t>>& subs) {
        for (const auto& [len, code] : subs) present.set(code);
    }
};

// LCS length via exhaustive subsequence intersection: longest encoded
// subsequence of `a_subs` present in `b_set`.
inline std::size_t lcs_by_intersection(
    const std::vector<std::pair<std::uint8_t, std::uint32_t>>& a_subs,
    const SubsequenceSet& b_set) {
    for (const auto& [len, code] : a_subs) {
        if (b_set.present.test(code)) return len;
    }
    return 0;
}

}  // namespace testsupport
