#pragma once

// Hashing tokenizer for the toy encoder: lowercase, split on
// non-alphanumerics, hash each word into a fixed-size id space, truncate.

#include <cctype>
#include <cstdint>
#include <string_view>
#include <vector>

#include "drill/common.hpp"

namespace drill {

struct TokenizerConfig {
    std::size_t vocab_size = std::size_t(1) << 15;
    std::size_t max_tokens = 448;
};

class HashingTokenizer {
public:
    HashingTokenizer() = default;
    explicit HashingTokenizer(TokenizerConfig cfg) : cfg_(cfg) {}

    const TokenizerConfig& config() const { return cfg_; }

    // Never returns an empty sequence: blank input maps to token 0.
    std::vector<std::int32_t> tokenize(std::string_view text) const {
        std::vector<std::int32_t> out;
        std::size_t i = 0;
        const std::size_t n = text.size();
        while (i < n && out.size() < cfg_.max_tokens) {
            while (i < n && !std::isalnum(static_cast<unsigned char>(text[i]))) ++i;
            std::size_t start = i;
            std::uint64_t h = 0xcbf29ce484222325ull;
            while (i < n && std::isalnum(static_cast<unsigned char>(text[i]))) {
                unsigned char c = static_cast<unsigned char>(text[i]);
                c = static_cast<unsigned char>(std::tolower(c));
                h ^= c;
                h *= 0x100000001b3ull;
                ++i;
            }
            if (i > start) out.push_back(static_cast<std::int32_t>(h % cfg_.vocab_size));
        }
        if (out.empty()) out.push_back(0);
        return out;
    }

private:
    TokenizerConfig cfg_;
};

}  // namespace drill
