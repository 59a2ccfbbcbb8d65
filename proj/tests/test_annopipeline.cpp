#include <catch2/catch_amalgamated.hpp>

#include <memory>

#include "ftgrpo/annopipeline.hpp"
#include "ftgrpo/rewards.hpp"
#include "ftgrpo/synth.hpp"

using namespace ftgrpo;

namespace {

struct Fixture {
    CorpusConfig cfg;
    Vocabulary vocab;
    std::vector<AudioClip> clips;
    ClipIndex index;

    explicit Fixture(int train = 120, int dev = 40, std::uint64_t seed = 3) {
        cfg.types = {AudioType::Speech};
        cfg.train_count = train;
        cfg.dev_count = dev;
        cfg.eval_count = 16;
        cfg.seed = seed;
        vocab = build_vocabulary(TagSpec{}, cfg);
        clips = gen_corpus(cfg, vocab);
        index = make_clip_index(clips);
    }

    AnnotateOptions opts() const {
        return {cfg.time_steps, cfg.bands, cfg.clean_levels};
    }
};

AnnotateResult run_annotate(const Fixture& fx, const MockCaptionerOptions& copt,
                            RetryPolicy retry = {3, 0}) {
    auto cap = std::make_shared<MockCaptionTransport>(copt);
    auto pol = std::make_shared<MockPolishTransport>();
    CaptionClient captioner(cap, kCaptionPromptId, retry);
    PolishClient polisher(pol, kPolishPromptId, retry);
    return annotate(fx.clips, captioner, polisher, fx.opts(), fx.vocab);
}

} // namespace

TEST_CASE("error-free captioner yields all-think records") {
    Fixture fx;
    MockCaptionerOptions copt;
    copt.verbose_rate = 0.0;
    const auto res = run_annotate(fx, copt);
    CHECK(res.quarantined.empty());
    REQUIRE(res.records.size() == fx.clips.size());
    for (const auto& r : res.records) {
        CHECK(r.partition == Partition::Think);
        REQUIRE(r.polished.has_value());
        const auto parsed = parse_output(*r.polished);
        CHECK(check_format(parsed));
        CHECK(parsed.answer == to_answer(fx.index.at(r.clip_id).label));
        CHECK(ft_reward(parsed) == 1.0);
    }
}

TEST_CASE("clips whose caption answer contradicts the label become non-think exactly") {
    Fixture fx;
    MockCaptionerOptions copt;
    copt.verbose_rate = 0.0;
    copt.label_flip_rate = 0.15;
    copt.seed = 42;

    // replay the injection schedule independently
    MockCaptionTransport replay(copt);
    std::set<std::string> expected_flagged;
    for (const auto& c : fx.clips) {
        int max_intensity = 0;
        for (const auto& a : c.artifacts) max_intensity = std::max(max_intensity, a.intensity);
        const bool hard = c.label == Label::Fake && max_intensity > 0 &&
                          max_intensity <= copt.hard_intensity;
        if (replay.draws_label_flip(c.id, hard)) expected_flagged.insert(c.id);
    }
    REQUIRE_FALSE(expected_flagged.empty());

    const auto res = run_annotate(fx, copt);
    std::set<std::string> got_flagged;
    for (const auto& r : res.records)
        if (r.partition == Partition::NonThink) got_flagged.insert(r.clip_id);
    CHECK(got_flagged == expected_flagged);
    for (const auto& r : res.records) {
        if (got_flagged.count(r.clip_id))
            CHECK(r.issue_tags.count(IssueTag::LabelContradiction) == 1);
    }
}

TEST_CASE("internal contradictions at 10% on 10k clips are recovered exactly under replay") {
    Fixture fx(5000, 5000, /*seed=*/17);
    REQUIRE(fx.clips.size() >= 10000);
    MockCaptionerOptions copt;
    copt.verbose_rate = 0.0;
    copt.internal_contradiction_rate = 0.10;
    copt.seed = 2024;

    MockCaptionTransport replay(copt);
    int expected = 0;
    for (const auto& c : fx.clips)
        if (replay.draws_internal(c.id)) ++expected;

    const auto res = run_annotate(fx, copt);
    int got = 0;
    for (const auto& r : res.records)
        if (r.partition == Partition::NonThink) ++got;
    CHECK(got == expected);
    // roughly 10% of 10k
    CHECK(got > 800);
    CHECK(got < 1200);
}

TEST_CASE("verbose captions are trimmed and tagged") {
    Fixture fx;
    MockCaptionerOptions copt;
    copt.verbose_rate = 1.0;
    const auto res = run_annotate(fx, copt);
    REQUIRE_FALSE(res.records.empty());
    for (const auto& r : res.records) {
        REQUIRE(r.partition == Partition::Think);
        CHECK(r.issue_tags.count(IssueTag::Verbose) == 1);
        // fillers never survive the polish
        CHECK(r.polished->find("nightly") == std::string::npos);
        CHECK(r.polished->find("reviewer") == std::string::npos);
        CHECK(r.polished->find("recording spans") == std::string::npos);
        CHECK(r.raw_caption.size() > r.polished->size());
    }
}

TEST_CASE("transport failures are retried then quarantined, never dropped") {
    Fixture fx(20, 0, 5);
    MockCaptionerOptions copt;
    copt.verbose_rate = 0.0;

    SECTION("failures within the retry budget succeed") {
        auto flaky = std::make_shared<FlakyTransport>(
            std::make_shared<MockCaptionTransport>(copt), /*failures_per_clip=*/2);
        CaptionClient captioner(flaky, kCaptionPromptId, RetryPolicy{3, 0});
        PolishClient polisher(std::make_shared<MockPolishTransport>(), kPolishPromptId,
                              RetryPolicy{3, 0});
        const auto res = annotate(fx.clips, captioner, polisher, fx.opts(), fx.vocab);
        CHECK(res.quarantined.empty());
        CHECK(res.records.size() == fx.clips.size());
    }

    SECTION("persistent failures land in quarantine with a cause") {
        auto flaky = std::make_shared<FlakyTransport>(
            std::make_shared<MockCaptionTransport>(copt), /*failures_per_clip=*/10);
        CaptionClient captioner(flaky, kCaptionPromptId, RetryPolicy{3, 0});
        PolishClient polisher(std::make_shared<MockPolishTransport>(), kPolishPromptId,
                              RetryPolicy{3, 0});
        const auto res = annotate(fx.clips, captioner, polisher, fx.opts(), fx.vocab);
        CHECK(res.records.empty());
        REQUIRE(res.quarantined.size() == fx.clips.size());
        CHECK(res.quarantined[0].stage == "caption");
        CHECK(res.quarantined[0].cause.find("after 3 attempts") != std::string::npos);
        // record + quarantine accounting covers every clip
        CHECK(res.records.size() + res.quarantined.size() == fx.clips.size());
    }
}

TEST_CASE("partition splits records, computes stats, and is order-stable") {
    Fixture fx;
    MockCaptionerOptions copt;
    copt.label_flip_rate = 0.2;
    copt.seed = 9;
    auto res = run_annotate(fx, copt);

    const auto part1 = partition(res.records, fx.index);
    auto reversed = res.records;
    std::reverse(reversed.begin(), reversed.end());
    const auto part2 = partition(reversed, fx.index);
    REQUIRE(part1.d_think.size() == part2.d_think.size());
    for (std::size_t i = 0; i < part1.d_think.size(); ++i)
        CHECK(part1.d_think[i].clip_id == part2.d_think[i].clip_id);

    const int think_train = part1.stats.think_count.count(Split::Train)
                                ? part1.stats.think_count.at(Split::Train)
                                : 0;
    const int non_think_train = part1.stats.non_think_count.count(Split::Train)
                                    ? part1.stats.non_think_count.at(Split::Train)
                                    : 0;
    CHECK(think_train + non_think_train == fx.cfg.train_count);
    CHECK(part1.d_think.size() + part1.d_non_think.size() == res.records.size());

    // d_r is the union
    const auto dr = part1.d_r();
    CHECK(dr.size() == res.records.size());
}

TEST_CASE("partition rejects duplicates and unknown ids") {
    Fixture fx(4, 0, 8);
    MockCaptionerOptions copt;
    auto res = run_annotate(fx, copt);
    auto dup = res.records;
    dup.push_back(dup.front());
    CHECK_THROWS_WITH(partition(dup, fx.index), Catch::Matchers::ContainsSubstring("duplicate"));
    auto unknown = res.records;
    unknown.front().clip_id = "nope-000";
    CHECK_THROWS_WITH(partition(unknown, fx.index),
                      Catch::Matchers::ContainsSubstring("unknown clip id"));
}

TEST_CASE("all-think input has a zero non-think rate") {
    Fixture fx(30, 10, 2);
    const auto res = run_annotate(fx, MockCaptionerOptions{});
    const auto part = partition(res.records, fx.index);
    CHECK(part.stats.non_think_rate(Split::Train) == 0.0);
    CHECK(part.stats.non_think_rate(Split::Dev) == 0.0);
}

TEST_CASE("documented non-think rate formula") {
    // synthetic stats: think=920, non_think=80 in one split -> 8.00%
    PartitionStats stats;
    stats.think_count[Split::Train] = 920;
    stats.non_think_count[Split::Train] = 80;
    CHECK(stats.non_think_rate(Split::Train) == Catch::Approx(0.08));
}

TEST_CASE("strategy plans match the four published shapes") {
    Fixture fx(16, 0, 6);
    MockCaptionerOptions copt;
    copt.label_flip_rate = 0.3;
    copt.seed = 4;
    const auto res = run_annotate(fx, copt);
    const auto corpus = partition(res.records, fx.index);

    const auto s1 = plan_strategy(StrategyId::S1_discard, corpus);
    REQUIRE(s1.stages.size() == 2);
    CHECK(s1.stages[0].kind == StageKind::SFT);
    CHECK(s1.stages[0].data == DatasetSelector::ThinkOnly);
    CHECK(s1.stages[1].kind == StageKind::GRPO);
    CHECK(s1.stages[1].data == DatasetSelector::ThinkOnly);

    const auto s2 = plan_strategy(StrategyId::S2_threestage, corpus);
    REQUIRE(s2.stages.size() == 3);
    CHECK(s2.stages[0].kind == StageKind::SFT);
    CHECK(s2.stages[0].data == DatasetSelector::NonThinkOnly);
    CHECK(s2.stages[1].kind == StageKind::SFT);
    CHECK(s2.stages[1].data == DatasetSelector::ThinkOnly);
    CHECK(s2.stages[2].kind == StageKind::GRPO);
    CHECK(s2.stages[2].data == DatasetSelector::ThinkOnly);

    const auto s3 = plan_strategy(StrategyId::S3_mix_into_sft, corpus);
    REQUIRE(s3.stages.size() == 2);
    CHECK(s3.stages[0].kind == StageKind::SFT);
    CHECK(s3.stages[0].data == DatasetSelector::ThinkAndNonThink);
    CHECK(s3.stages[1].kind == StageKind::GRPO);
    CHECK(s3.stages[1].data == DatasetSelector::ThinkOnly);

    const auto s4 = plan_strategy(StrategyId::S4_think_sft_mixed_grpo, corpus);
    REQUIRE(s4.stages.size() == 2);
    CHECK(s4.stages[0].kind == StageKind::SFT);
    CHECK(s4.stages[0].data == DatasetSelector::ThinkOnly);
    CHECK(s4.stages[1].kind == StageKind::GRPO);
    CHECK(s4.stages[1].data == DatasetSelector::ThinkAndNonThink);

    CHECK_THROWS_AS(strategy_from("S9"), std::invalid_argument);
    CHECK(strategy_from("s4") == StrategyId::S4_think_sft_mixed_grpo);
}

TEST_CASE("with no non-think records S1 and S4 select identical data") {
    Fixture fx(12, 0, 13);
    const auto res = run_annotate(fx, MockCaptionerOptions{});
    const auto corpus = partition(res.records, fx.index);
    REQUIRE(corpus.d_non_think.empty());
    const auto s1 = plan_strategy(StrategyId::S1_discard, corpus);
    const auto s4 = plan_strategy(StrategyId::S4_think_sft_mixed_grpo, corpus);
    const auto data1 = select_records(corpus, s1.stages[1].data);
    const auto data4 = select_records(corpus, s4.stages[1].data);
    REQUIRE(data1.size() == data4.size());
    for (std::size_t i = 0; i < data1.size(); ++i)
        CHECK(data1[i].clip_id == data4[i].clip_id);
}

TEST_CASE("wire messages round-trip through JSON") {
    WireRequest req;
    req.clip_id = "spc-tr-00001";
    req.label = Label::Fake;
    req.prompt_id = kCaptionPromptId;
    req.payload = {{"type", "speech"}, {"tokens", {"b0_l1", "b1_l2"}}};
    const auto req2 = WireRequest::from_json(nlohmann::json::parse(req.to_json().dump()));
    CHECK(req2.clip_id == req.clip_id);
    CHECK(req2.label == req.label);
    CHECK(req2.prompt_id == req.prompt_id);
    CHECK(nlohmann::json(req2.payload) == nlohmann::json(req.payload));

    WireResponse ok;
    ok.text = "<think> body </think><answer> real </answer>";
    const auto ok2 = WireResponse::from_json(nlohmann::json::parse(ok.to_json().dump()));
    CHECK(ok2.text == ok.text);
    CHECK_FALSE(ok2.mismatch);

    WireResponse bad;
    bad.mismatch = true;
    bad.reason = "label_contradiction";
    const auto bad2 = WireResponse::from_json(nlohmann::json::parse(bad.to_json().dump()));
    CHECK(bad2.mismatch);
    CHECK(bad2.reason == "label_contradiction");
}

TEST_CASE("annotation records round-trip through JSON") {
    AnnotationRecord r;
    r.clip_id = "mus-dv-00003";
    r.raw_caption = "<think> raw </think><answer> fake </answer>";
    r.partition = Partition::NonThink;
    r.issue_tags = {IssueTag::LabelContradiction};
    const auto r2 = record_from_json(nlohmann::json::parse(record_to_json(r).dump()));
    CHECK(r2.clip_id == r.clip_id);
    CHECK(r2.partition == Partition::NonThink);
    CHECK_FALSE(r2.polished.has_value());
    CHECK(r2.issue_tags == r.issue_tags);
}
