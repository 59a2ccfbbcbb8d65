#pragma once

// Structured rationale grammar: a <think> block holding a <Frequency Domain>
// section and a <Time Domain> section, followed by an <answer> block with a
// real/fake verdict. parse_output is total: any input yields a parse result
// with diagnostic flags instead of errors.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ftgrpo {

enum class Label : std::uint8_t { Real, Fake };

enum class Answer : std::uint8_t { Real, Fake, Invalid };

enum class Domain : std::uint8_t { FD, TD };

inline const char* to_string(Label l) { return l == Label::Real ? "real" : "fake"; }

inline const char* to_string(Answer a) {
    switch (a) {
        case Answer::Real: return "real";
        case Answer::Fake: return "fake";
        default: return "invalid";
    }
}

inline Answer to_answer(Label l) { return l == Label::Real ? Answer::Real : Answer::Fake; }

struct TagSpec {
    std::string think_open = "<think>";
    std::string think_close = "</think>";
    std::string answer_open = "<answer>";
    std::string answer_close = "</answer>";
    std::string fd_tag = "<Frequency Domain>";
    std::string td_tag = "<Time Domain>";
    bool case_sensitive = true;

    void validate() const {
        const std::string* tags[] = {&think_open, &think_close, &answer_open,
                                     &answer_close, &fd_tag,    &td_tag};
        for (const auto* t : tags) {
            if (t->empty()) throw std::invalid_argument("TagSpec: empty tag literal");
        }
        for (std::size_t i = 0; i < 6; ++i) {
            for (std::size_t j = i + 1; j < 6; ++j) {
                if (*tags[i] == *tags[j])
                    throw std::invalid_argument("TagSpec: duplicate tag literal '" + *tags[i] + "'");
            }
        }
    }
};

// Parse diagnostics. MissingAnswer means "no usable answer was extracted",
// so it is set exactly when answer == Invalid.
enum ParseFlag : std::uint8_t {
    MissingThink = 1u << 0,
    MissingAnswer = 1u << 1,
    MultipleAnswer = 1u << 2,
    TagOrderViolation = 1u << 3,
    EmptySection = 1u << 4,
};

struct StructuredOutput {
    std::string raw_text;
    std::optional<std::string> think_body;
    std::optional<std::string> fd_section;
    std::optional<std::string> td_section;
    Answer answer = Answer::Invalid;
    std::uint8_t parse_flags = 0;

    // Structural facts used by check_format.
    int answer_block_count = 0;
    bool think_precedes_answer = false;

    bool has_flag(ParseFlag f) const { return (parse_flags & f) != 0; }
};

namespace detail {

inline char ascii_lower(char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

inline std::size_t find_tag(std::string_view hay, std::string_view needle, std::size_t from,
                            bool case_sensitive) {
    if (needle.empty() || from > hay.size()) return std::string_view::npos;
    if (case_sensitive) return hay.find(needle, from);
    if (needle.size() > hay.size()) return std::string_view::npos;
    for (std::size_t i = from; i + needle.size() <= hay.size(); ++i) {
        bool match = true;
        for (std::size_t j = 0; j < needle.size(); ++j) {
            if (ascii_lower(hay[i + j]) != ascii_lower(needle[j])) {
                match = false;
                break;
            }
        }
        if (match) return i;
    }
    return std::string_view::npos;
}

inline std::string_view trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline bool is_blank(std::string_view s) { return trim(s).empty(); }

} // namespace detail

// True when `text` contains at least one complete sentence: a chunk ending in
// '.', '!' or '?' with >= 3 whitespace-separated tokens, at least one of which
// carries an alphabetic character.
inline bool has_complete_sentence(std::string_view text) {
    std::size_t start = 0;
    for (std::size_t i = 0; i <= text.size(); ++i) {
        const bool at_end = (i == text.size());
        if (!at_end && text[i] != '.' && text[i] != '!' && text[i] != '?') continue;
        if (!at_end) {
            const std::string_view chunk = text.substr(start, i - start + 1);
            int tokens = 0;
            bool has_alpha = false;
            bool in_token = false;
            for (char c : chunk) {
                if (std::isspace(static_cast<unsigned char>(c))) {
                    in_token = false;
                } else {
                    if (!in_token) ++tokens;
                    in_token = true;
                    if (std::isalpha(static_cast<unsigned char>(c))) has_alpha = true;
                }
            }
            if (tokens >= 3 && has_alpha) return true;
            start = i + 1;
        }
    }
    return false;
}

inline StructuredOutput parse_output(std::string_view text, const TagSpec& tags = {}) {
    using detail::find_tag;
    StructuredOutput out;
    out.raw_text.assign(text);
    const bool cs = tags.case_sensitive;

    // Think block: first well-formed open/close pair.
    const std::size_t think_open_pos = find_tag(text, tags.think_open, 0, cs);
    std::size_t think_body_begin = std::string_view::npos;
    std::size_t think_body_end = std::string_view::npos;
    if (think_open_pos != std::string_view::npos) {
        const std::size_t close_pos =
            find_tag(text, tags.think_close, think_open_pos + tags.think_open.size(), cs);
        if (close_pos != std::string_view::npos) {
            think_body_begin = think_open_pos + tags.think_open.size();
            think_body_end = close_pos;
            out.think_body = std::string(text.substr(think_body_begin, think_body_end - think_body_begin));
        }
    }
    if (!out.think_body) out.parse_flags |= MissingThink;

    // Domain sections live inside the think body only. A section runs from its
    // tag to the next domain-tag occurrence or the end of the think body.
    if (out.think_body) {
        const std::string_view body = *out.think_body;
        const std::size_t fd_pos = find_tag(body, tags.fd_tag, 0, cs);
        const std::size_t td_pos = find_tag(body, tags.td_tag, 0, cs);
        auto section_end = [&](std::size_t content_begin) {
            std::size_t end = body.size();
            const std::size_t next_fd = find_tag(body, tags.fd_tag, content_begin, cs);
            const std::size_t next_td = find_tag(body, tags.td_tag, content_begin, cs);
            if (next_fd != std::string_view::npos) end = std::min(end, next_fd);
            if (next_td != std::string_view::npos) end = std::min(end, next_td);
            return end;
        };
        if (fd_pos != std::string_view::npos) {
            const std::size_t begin = fd_pos + tags.fd_tag.size();
            out.fd_section = std::string(body.substr(begin, section_end(begin) - begin));
            if (detail::is_blank(*out.fd_section)) out.parse_flags |= EmptySection;
        }
        if (td_pos != std::string_view::npos) {
            const std::size_t begin = td_pos + tags.td_tag.size();
            out.td_section = std::string(body.substr(begin, section_end(begin) - begin));
            if (detail::is_blank(*out.td_section)) out.parse_flags |= EmptySection;
        }
        if (fd_pos != std::string_view::npos && td_pos != std::string_view::npos && td_pos < fd_pos)
            out.parse_flags |= TagOrderViolation;
    }

    // Answer blocks: count well-formed pairs, extract from the first.
    std::size_t first_answer_pos = std::string_view::npos;
    std::string first_answer_content;
    std::size_t scan = 0;
    for (;;) {
        const std::size_t open_pos = find_tag(text, tags.answer_open, scan, cs);
        if (open_pos == std::string_view::npos) break;
        const std::size_t content_begin = open_pos + tags.answer_open.size();
        const std::size_t close_pos = find_tag(text, tags.answer_close, content_begin, cs);
        if (close_pos == std::string_view::npos) break;
        if (out.answer_block_count == 0) {
            first_answer_pos = open_pos;
            first_answer_content = std::string(text.substr(content_begin, close_pos - content_begin));
        }
        ++out.answer_block_count;
        scan = close_pos + tags.answer_close.size();
    }
    if (out.answer_block_count > 1) out.parse_flags |= MultipleAnswer;

    if (out.answer_block_count >= 1) {
        std::string norm(detail::trim(first_answer_content));
        std::transform(norm.begin(), norm.end(), norm.begin(), detail::ascii_lower);
        if (norm == "real") out.answer = Answer::Real;
        else if (norm == "fake") out.answer = Answer::Fake;
    }
    if (out.answer == Answer::Invalid) out.parse_flags |= MissingAnswer;

    if (think_open_pos != std::string_view::npos && out.think_body &&
        first_answer_pos != std::string_view::npos)
        out.think_precedes_answer = think_open_pos < first_answer_pos;

    return out;
}

// Binary format gate F(o): think present, a single answer block holding a
// real/fake verdict, reasoning before the answer. Domain-tag ordering is only
// enforced in strict mode (off by default).
inline bool check_format(const StructuredOutput& out, bool strict_order = false) {
    if (!out.think_body) return false;
    if (out.answer == Answer::Invalid) return false;
    if (out.answer_block_count != 1) return false;
    if (!out.think_precedes_answer) return false;
    if (strict_order && out.has_flag(TagOrderViolation)) return false;
    return true;
}

// Per-domain completeness rule g(a_i): the section exists and contains at
// least one complete sentence. Pure function of the section string.
inline bool check_section_complete(const StructuredOutput& out, Domain which) {
    const auto& section = which == Domain::FD ? out.fd_section : out.td_section;
    if (!section) return false;
    return has_complete_sentence(*section);
}

// Canonical rendering of parsed fields; parse_output(canonical_text(o)) has
// fields equal to o's whenever o came from parse_output.
inline std::string canonical_text(const StructuredOutput& out, const TagSpec& tags = {}) {
    std::string s;
    if (out.think_body) {
        s += tags.think_open;
        s += *out.think_body;
        s += tags.think_close;
    }
    if (out.answer != Answer::Invalid) {
        s += tags.answer_open;
        s += to_string(out.answer);
        s += tags.answer_close;
    }
    return s;
}

} // namespace ftgrpo
