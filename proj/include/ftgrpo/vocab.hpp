#pragma once

// Token vocabulary shared by the synthetic corpus and the policy. Word-level:
// schema tags are single tokens (including the multi-word domain tags), clip
// feature cells are "b{band}_l{level}" tokens, rationale text is plain words.

#include <cctype>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ftgrpo/schema.hpp"

namespace ftgrpo {

using TokenId = std::int32_t;

inline constexpr const char* kBosToken = "<bos>";
inline constexpr const char* kEosToken = "<eos>";
inline constexpr const char* kQueryToken = "<query>";

class Vocabulary {
public:
    Vocabulary() = default;

    explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
        for (std::size_t i = 0; i < tokens_.size(); ++i) {
            const auto& t = tokens_[i];
            if (t.empty()) throw std::invalid_argument("Vocabulary: empty token");
            if (!index_.emplace(t, static_cast<TokenId>(i)).second)
                throw std::invalid_argument("Vocabulary: duplicate token '" + t + "'");
            for (char c : t) {
                if (std::isspace(static_cast<unsigned char>(c))) {
                    compound_.push_back(static_cast<TokenId>(i));
                    break;
                }
            }
        }
        if (tokens_.size() < 8) throw std::invalid_argument("Vocabulary: need at least 8 tokens");
        bos_ = require(kBosToken);
        eos_ = require(kEosToken);
        query_ = require(kQueryToken);
    }

    int size() const { return static_cast<int>(tokens_.size()); }
    TokenId bos() const { return bos_; }
    TokenId eos() const { return eos_; }
    TokenId query() const { return query_; }

    bool contains(std::string_view s) const { return index_.find(std::string(s)) != index_.end(); }

    std::optional<TokenId> find(std::string_view s) const {
        auto it = index_.find(std::string(s));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    TokenId require(std::string_view s) const {
        auto id = find(s);
        if (!id) throw std::invalid_argument("Vocabulary: unknown token '" + std::string(s) + "'");
        return *id;
    }

    const std::string& text(TokenId id) const {
        if (id < 0 || id >= size())
            throw std::out_of_range("Vocabulary: token id " + std::to_string(id) + " out of range");
        return tokens_[static_cast<std::size_t>(id)];
    }

    const std::vector<std::string>& tokens() const { return tokens_; }

    bool is_marker(TokenId id) const { return id == bos_ || id == eos_ || id == query_; }

    // Scanner: at each non-space position, longest matching compound literal
    // wins; otherwise the maximal run of non-space characters must be a known
    // token. Unknown symbols raise with the symbol and its character offset.
    std::vector<TokenId> tokenize(std::string_view text) const {
        std::vector<TokenId> out;
        std::size_t i = 0;
        while (i < text.size()) {
            if (std::isspace(static_cast<unsigned char>(text[i]))) {
                ++i;
                continue;
            }
            TokenId best = -1;
            std::size_t best_len = 0;
            for (TokenId cid : compound_) {
                const std::string& lit = tokens_[static_cast<std::size_t>(cid)];
                if (lit.size() > best_len && text.substr(i, lit.size()) == lit) {
                    best = cid;
                    best_len = lit.size();
                }
            }
            if (best >= 0) {
                out.push_back(best);
                i += best_len;
                continue;
            }
            std::size_t j = i;
            while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
            const std::string_view word = text.substr(i, j - i);
            const auto id = find(word);
            if (!id)
                throw std::invalid_argument("tokenize: unknown symbol '" + std::string(word) +
                                            "' at offset " + std::to_string(i));
            out.push_back(*id);
            i = j;
        }
        return out;
    }

    // Join with single spaces; sequence markers are dropped unless asked for.
    std::string detokenize(const std::vector<TokenId>& ids, bool keep_markers = false) const {
        std::string s;
        for (TokenId id : ids) {
            if (!keep_markers && is_marker(id)) continue;
            if (!s.empty()) s += ' ';
            s += text(id);
        }
        return s;
    }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
    std::vector<TokenId> compound_;
    TokenId bos_ = -1;
    TokenId eos_ = -1;
    TokenId query_ = -1;
};

// Words used by rationale templates and the annotation mocks.
inline const std::vector<std::string>& rationale_words() {
    static const std::vector<std::string> words = {
        "the",     "spectrum", "keeps",    "a",     "clean",     "profile", "across",
        "all",     "bands",    "band",     "shows", "strong",    "artifact", "ridge",
        "above",   "energy",   "stays",    "steady", "every",    "interval", "carries",
        "an",      "abrupt",   "burst",    "to",    "clip",      "came",     "from",
        "nightly", "batch",    "reviewer", "noted", "file",      "earlier",  "recording",
        "spans",   "few",      "seconds",  ".",
    };
    return words;
}

inline std::string feature_token(int band, int level) {
    return "b" + std::to_string(band) + "_l" + std::to_string(level);
}

// Canonical vocabulary covering the schema literals, rationale words, index
// digits up to max_index, and the band/level feature-cell tokens.
inline Vocabulary build_vocabulary(const TagSpec& tags, int bands, int levels, int max_index) {
    std::vector<std::string> toks = {kBosToken, kEosToken, kQueryToken};
    toks.push_back(tags.think_open);
    toks.push_back(tags.think_close);
    toks.push_back(tags.answer_open);
    toks.push_back(tags.answer_close);
    toks.push_back(tags.fd_tag);
    toks.push_back(tags.td_tag);
    toks.push_back("real");
    toks.push_back("fake");
    for (const auto& w : rationale_words()) toks.push_back(w);
    for (int i = 0; i <= max_index; ++i) toks.push_back(std::to_string(i));
    for (int b = 0; b < bands; ++b)
        for (int l = 0; l < levels; ++l) toks.push_back(feature_token(b, l));
    return Vocabulary(std::move(toks));
}

} // namespace ftgrpo
