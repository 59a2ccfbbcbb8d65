#include <catch2/catch_amalgamated.hpp>

#include <string>

#include "ftgrpo/rng.hpp"
#include "ftgrpo/schema.hpp"

using namespace ftgrpo;

namespace {

// Structured text shaped like the annotated fake-speech demonstrations: two
// filled domain sections and a fake verdict.
const std::string kFakeExample =
    "<think>\n"
    "<Frequency Domain> The upper bands carry harsh synthetic energy with an envelope "
    "that never relaxes, which natural voice recordings do not show. The ridge sits well "
    "above the expected rolloff.\n"
    "<Time Domain> Pauses land at odd places and the cadence repeats with machine-like "
    "regularity across phrases. The onsets snap in without any breath noise.\n"
    "</think>\n"
    "<answer>fake</answer>";

const std::string kRealExample =
    "<think>"
    "<Frequency Domain> The spectral profile stays full and smooth across low, mid and "
    "high bands, as expected from a genuine recording. "
    "<Time Domain> Rhythm and intonation stay stable throughout with no abrupt jumps. "
    "</think>"
    "<answer>real</answer>";

} // namespace

TEST_CASE("parse_output handles a fully structured fake example") {
    const auto out = parse_output(kFakeExample);
    CHECK(out.answer == Answer::Fake);
    REQUIRE(out.think_body.has_value());
    REQUIRE(out.fd_section.has_value());
    REQUIRE(out.td_section.has_value());
    CHECK_FALSE(out.fd_section->empty());
    CHECK_FALSE(out.td_section->empty());
    CHECK(out.parse_flags == 0);
    CHECK(check_format(out));
    CHECK(check_section_complete(out, Domain::FD));
    CHECK(check_section_complete(out, Domain::TD));
}

TEST_CASE("parse_output on the empty string flags missing pieces") {
    const auto out = parse_output("");
    CHECK(out.answer == Answer::Invalid);
    CHECK(out.has_flag(MissingThink));
    CHECK(out.has_flag(MissingAnswer));
    CHECK_FALSE(out.think_body.has_value());
}

TEST_CASE("parse_output with a single domain section") {
    const auto out = parse_output(
        "<think><Time Domain>steady rhythm throughout the clip.</think><answer>real</answer>");
    CHECK(out.answer == Answer::Real);
    CHECK(out.td_section.has_value());
    CHECK_FALSE(out.fd_section.has_value());
    CHECK(check_section_complete(out, Domain::TD));
    CHECK_FALSE(check_section_complete(out, Domain::FD));
}

TEST_CASE("check_format rejects malformed outputs") {
    SECTION("well-formed") {
        CHECK(check_format(parse_output(kRealExample)));
    }
    SECTION("missing think close tag") {
        const auto out =
            parse_output("<think><Frequency Domain>something off.<answer>fake</answer>");
        CHECK_FALSE(check_format(out));
        CHECK(out.has_flag(MissingThink));
    }
    SECTION("two answer blocks") {
        const auto out = parse_output(
            "<think>reasoning here.</think><answer>real</answer><answer>fake</answer>");
        CHECK_FALSE(check_format(out));
        CHECK(out.has_flag(MultipleAnswer));
        // answer still extracted from the first block
        CHECK(out.answer == Answer::Real);
        CHECK(out.answer_block_count == 2);
    }
    SECTION("answer before think") {
        const auto out =
            parse_output("<answer>fake</answer><think>late reasoning here.</think>");
        CHECK_FALSE(check_format(out));
        CHECK(out.answer == Answer::Fake);
        CHECK(out.think_body.has_value());
    }
}

TEST_CASE("answer normalization trims and lowercases") {
    CHECK(parse_output("<think>x.</think><answer>  ReAl \n</answer>").answer == Answer::Real);
    CHECK(parse_output("<think>x.</think><answer>FAKE</answer>").answer == Answer::Fake);
    CHECK(parse_output("<think>x.</think><answer>really</answer>").answer == Answer::Invalid);
    CHECK(parse_output("<think>x.</think><answer>real fake</answer>").answer == Answer::Invalid);
}

TEST_CASE("section completeness rule") {
    SECTION("complete sentence passes") {
        const auto out = parse_output(
            "<think><Frequency Domain>The spectrum shows natural rolloff.</think>"
            "<answer>real</answer>");
        CHECK(check_section_complete(out, Domain::FD));
    }
    SECTION("below token threshold fails") {
        const auto out =
            parse_output("<think><Frequency Domain>noise</think><answer>real</answer>");
        CHECK_FALSE(check_section_complete(out, Domain::FD));
    }
    SECTION("no terminator fails") {
        const auto out = parse_output(
            "<think><Frequency Domain>plenty of words but no closing mark</think>"
            "<answer>real</answer>");
        CHECK_FALSE(check_section_complete(out, Domain::FD));
    }
    SECTION("numeric-only sentence fails") {
        CHECK_FALSE(has_complete_sentence("1 2 3 4."));
        CHECK(has_complete_sentence("band 3 looks hot."));
    }
    SECTION("empty section flagged") {
        const auto out = parse_output(
            "<think><Frequency Domain></think><answer>real</answer>");
        CHECK(out.has_flag(EmptySection));
        CHECK_FALSE(check_section_complete(out, Domain::FD));
    }
}

TEST_CASE("domain tag order is recorded but only strict mode enforces it") {
    const auto out = parse_output(
        "<think><Time Domain>steady timing all the way through.</Time Domain>"
        "<Frequency Domain>clean spectral shape with no spikes.</think><answer>real</answer>");
    CHECK(out.has_flag(TagOrderViolation));
    CHECK(check_format(out));
    CHECK_FALSE(check_format(out, /*strict_order=*/true));
    CHECK(check_section_complete(out, Domain::FD));
    CHECK(check_section_complete(out, Domain::TD));
}

TEST_CASE("tags are case-sensitive by default, configurable") {
    const std::string text = "<THINK>shouty reasoning.</THINK><ANSWER>real</ANSWER>";
    CHECK(parse_output(text).answer == Answer::Invalid);
    TagSpec tags;
    tags.case_sensitive = false;
    const auto out = parse_output(text, tags);
    CHECK(out.answer == Answer::Real);
    CHECK(out.think_body.has_value());
}

TEST_CASE("TagSpec validation") {
    TagSpec ok;
    CHECK_NOTHROW(ok.validate());
    TagSpec empty;
    empty.fd_tag = "";
    CHECK_THROWS_AS(empty.validate(), std::invalid_argument);
    TagSpec dup;
    dup.fd_tag = dup.td_tag;
    CHECK_THROWS_AS(dup.validate(), std::invalid_argument);
}

TEST_CASE("completeness depends only on the section content") {
    const std::string fd = "The mid bands look perfectly ordinary today.";
    const auto a = parse_output("<think><Frequency Domain>" + fd + "</think><answer>real</answer>");
    const auto b = parse_output("<think>unrelated preamble text <Frequency Domain>" + fd +
                                "<Time Domain>garbage</think><answer>fake</answer>"
                                "<answer>fake</answer>");
    REQUIRE(a.fd_section.has_value());
    REQUIRE(b.fd_section.has_value());
    CHECK(*a.fd_section == *b.fd_section);
    CHECK(check_section_complete(a, Domain::FD) == check_section_complete(b, Domain::FD));
}

TEST_CASE("parse round-trip: canonical serialization preserves fields") {
    const std::string samples[] = {
        kFakeExample,
        kRealExample,
        "<think><Time Domain>steady rhythm throughout the clip.</think><answer>real</answer>",
        "<think>no sections at all, just text.</think><answer>fake</answer>",
        "<think><Frequency Domain>one section only here.</think><answer>real</answer>",
    };
    for (const auto& s : samples) {
        const auto first = parse_output(s);
        const auto second = parse_output(canonical_text(first));
        CHECK(first.think_body == second.think_body);
        CHECK(first.fd_section == second.fd_section);
        CHECK(first.td_section == second.td_section);
        CHECK(first.answer == second.answer);
        // and serializing again is a fixed point
        CHECK(canonical_text(first) == canonical_text(second));
    }
}

TEST_CASE("fuzz: parser is total and flags stay consistent", "[fuzz]") {
    Rng rng(0xF00DF00Du);
    const std::string pieces[] = {
        "<think>", "</think>", "<answer>", "</answer>", "<Frequency Domain>", "<Time Domain>",
        "real",    "fake",     "<",        ">",          "answer",             "think",
        " ",       "\n",       ".",        "xyz",        "<answer",            "</",
    };
    const int n_pieces = static_cast<int>(std::size(pieces));
    for (int iter = 0; iter < 100000; ++iter) {
        std::string text;
        const int len = static_cast<int>(rng.below(12));
        for (int i = 0; i < len; ++i) text += pieces[rng.below(static_cast<std::uint64_t>(n_pieces))];
        const auto out = parse_output(text);

        // MissingAnswer means no usable answer.
        CHECK(out.has_flag(MissingAnswer) == (out.answer == Answer::Invalid));
        CHECK(out.has_flag(MissingThink) == !out.think_body.has_value());
        CHECK(out.has_flag(MultipleAnswer) == (out.answer_block_count > 1));
        if (out.answer != Answer::Invalid) CHECK(out.answer_block_count >= 1);
        // sections only exist inside a think body
        if (!out.think_body) {
            CHECK_FALSE(out.fd_section.has_value());
            CHECK_FALSE(out.td_section.has_value());
        }
        if (check_format(out)) {
            CHECK(out.answer != Answer::Invalid);
            CHECK(out.think_body.has_value());
        }
    }
}
