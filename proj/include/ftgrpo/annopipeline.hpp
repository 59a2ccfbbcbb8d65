#pragma once

// Two-step annotation pipeline: a caption client produces a raw structured
// rationale for each labeled clip, a polish client either rewrites it into a
// concise, format-clean rationale or flags a mismatch. Mismatch-flagged clips
// become label-only (non-think) records. Clients speak a small JSON request/
// response contract over a pluggable transport; deterministic in-process
// mocks implement both roles with configurable issue injection.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ftgrpo/rng.hpp"
#include "ftgrpo/schema.hpp"
#include "ftgrpo/synth.hpp"
#include "ftgrpo/vocab.hpp"

namespace ftgrpo {

// ---------------------------------------------------------------------------
// wire contract
// ---------------------------------------------------------------------------

struct WireRequest {
    std::string clip_id;
    Label label = Label::Real;
    std::string prompt_id;
    nlohmann::ordered_json payload;

    nlohmann::ordered_json to_json() const {
        return {{"clip_id", clip_id},
                {"label", to_string(label)},
                {"prompt_id", prompt_id},
                {"payload", payload}};
    }

    static WireRequest from_json(const nlohmann::json& j) {
        WireRequest r;
        r.clip_id = j.at("clip_id").get<std::string>();
        r.label = label_from(j.at("label").get<std::string>());
        r.prompt_id = j.at("prompt_id").get<std::string>();
        r.payload = j.at("payload");
        return r;
    }
};

struct WireResponse {
    std::optional<std::string> text;
    bool mismatch = false;
    std::string reason;  // optional diagnostic for mismatch / trims

    nlohmann::ordered_json to_json() const {
        if (mismatch) {
            nlohmann::ordered_json j = {{"flag", "mismatch"}};
            if (!reason.empty()) j["reason"] = reason;
            return j;
        }
        nlohmann::ordered_json j = {{"text", text.value_or("")}};
        if (!reason.empty()) j["reason"] = reason;
        return j;
    }

    static WireResponse from_json(const nlohmann::json& j) {
        WireResponse r;
        if (j.contains("flag")) {
            if (j.at("flag").get<std::string>() != "mismatch")
                throw std::invalid_argument("WireResponse: unknown flag");
            r.mismatch = true;
        } else {
            r.text = j.at("text").get<std::string>();
        }
        if (j.contains("reason")) r.reason = j.at("reason").get<std::string>();
        return r;
    }
};

// Transport failure (network error, HTTP 5xx, ...). Retried with backoff.
struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual WireResponse send(const WireRequest& req) = 0;
};

// ---------------------------------------------------------------------------
// records and partition
// ---------------------------------------------------------------------------

enum class IssueTag : std::uint8_t { Verbose, InternalContradiction, LabelContradiction };

inline const char* to_string(IssueTag t) {
    switch (t) {
        case IssueTag::Verbose: return "verbose";
        case IssueTag::InternalContradiction: return "internal_contradiction";
        default: return "label_contradiction";
    }
}

enum class Partition : std::uint8_t { Think, NonThink };

struct AnnotationRecord {
    std::string clip_id;
    std::string raw_caption;
    std::optional<std::string> polished; // absent <=> mismatch <=> NonThink
    std::set<IssueTag> issue_tags;
    Partition partition = Partition::Think;
};

struct QuarantineRecord {
    std::string clip_id;
    std::string stage; // "caption" or "polish"
    std::string cause;
};

struct AnnotateResult {
    std::vector<AnnotationRecord> records;
    std::vector<QuarantineRecord> quarantined;
};

struct SplitTypeKey {
    Split split;
    AudioType type;
    bool operator<(const SplitTypeKey& o) const {
        if (split != o.split) return split < o.split;
        return type < o.type;
    }
};

struct PartitionStats {
    std::map<Split, int> think_count;
    std::map<Split, int> non_think_count;
    std::map<SplitTypeKey, int> think_by_type;
    std::map<SplitTypeKey, int> non_think_by_type;

    // non_think / (think + non_think) per split
    double non_think_rate(Split s) const {
        const int t = think_count.count(s) ? think_count.at(s) : 0;
        const int n = non_think_count.count(s) ? non_think_count.at(s) : 0;
        if (t + n == 0) return 0.0;
        return static_cast<double>(n) / (t + n);
    }
};

struct PartitionedCorpus {
    std::vector<AnnotationRecord> d_think;
    std::vector<AnnotationRecord> d_non_think;
    PartitionStats stats;

    std::vector<AnnotationRecord> d_r() const {
        std::vector<AnnotationRecord> all = d_think;
        all.insert(all.end(), d_non_think.begin(), d_non_think.end());
        std::sort(all.begin(), all.end(),
                  [](const auto& a, const auto& b) { return a.clip_id < b.clip_id; });
        return all;
    }
};

struct ClipMeta {
    AudioType type;
    Split split;
    Label label;
};

using ClipIndex = std::map<std::string, ClipMeta>;

inline ClipIndex make_clip_index(const std::vector<AudioClip>& clips) {
    ClipIndex idx;
    for (const auto& c : clips) {
        if (!idx.emplace(c.id, ClipMeta{c.type, c.split, c.label}).second)
            throw std::invalid_argument("duplicate clip id '" + c.id + "'");
    }
    return idx;
}

// ---------------------------------------------------------------------------
// clients
// ---------------------------------------------------------------------------

struct RetryPolicy {
    int max_attempts = 3;
    int backoff_ms = 10; // doubled per retry

    void validate() const {
        if (max_attempts < 1) throw std::invalid_argument("RetryPolicy: max_attempts must be >= 1");
        if (backoff_ms < 0) throw std::invalid_argument("RetryPolicy: negative backoff");
    }
};

inline constexpr const char* kCaptionPromptId = "caption.v1";
inline constexpr const char* kPolishPromptId = "polish.v1";

class Client {
public:
    Client(std::shared_ptr<Transport> transport, std::string prompt_id, RetryPolicy retry = {})
        : transport_(std::move(transport)), prompt_id_(std::move(prompt_id)), retry_(retry) {
        retry_.validate();
        if (!transport_) throw std::invalid_argument("Client: null transport");
    }

    WireResponse call(const std::string& clip_id, Label label,
                      nlohmann::ordered_json payload) const {
        WireRequest req{clip_id, label, prompt_id_, std::move(payload)};
        int delay = retry_.backoff_ms;
        for (int attempt = 1;; ++attempt) {
            try {
                return transport_->send(req);
            } catch (const TransportError& e) {
                if (attempt >= retry_.max_attempts)
                    throw TransportError(std::string(e.what()) + " (after " +
                                         std::to_string(attempt) + " attempts)");
                if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay));
                delay *= 2;
            }
        }
    }

    const std::string& prompt_id() const { return prompt_id_; }

private:
    std::shared_ptr<Transport> transport_;
    std::string prompt_id_;
    RetryPolicy retry_;
};

using CaptionClient = Client;
using PolishClient = Client;

// ---------------------------------------------------------------------------
// deterministic mocks
// ---------------------------------------------------------------------------

namespace mockdet {

// Evidence the captioner can actually extract from the token grid: bands hot
// across every time step, and maximal runs of time steps hot across every band.
struct DetectedEvidence {
    std::vector<int> bands;
    std::vector<std::pair<int, int>> intervals;
    bool any() const { return !bands.empty() || !intervals.empty(); }
};

inline int token_level(const std::string& tok) {
    const auto pos = tok.rfind("_l");
    if (pos == std::string::npos) return -1;
    return std::stoi(tok.substr(pos + 2));
}

inline DetectedEvidence detect_from_tokens(const std::vector<std::string>& tokens, int time_steps,
                                           int bands, int clean_levels) {
    DetectedEvidence ev;
    auto hot = [&](int t, int b) {
        return token_level(tokens[static_cast<std::size_t>(t) * bands + b]) >= clean_levels;
    };
    for (int b = 0; b < bands; ++b) {
        bool all = true;
        for (int t = 0; t < time_steps && all; ++t) all = hot(t, b);
        if (all) ev.bands.push_back(b);
    }
    int run_start = -1;
    for (int t = 0; t <= time_steps; ++t) {
        bool all = t < time_steps;
        for (int b = 0; b < bands && all; ++b) all = hot(t, b);
        if (all && run_start < 0) run_start = t;
        if (!all && run_start >= 0) {
            ev.intervals.emplace_back(run_start, t - 1);
            run_start = -1;
        }
    }
    return ev;
}

inline std::string fake_fd_sentences(const std::vector<int>& bands) {
    if (bands.empty()) return "band 0 shows a strong artifact ridge above the clean profile .";
    std::string s;
    for (int b : bands) {
        if (!s.empty()) s += ' ';
        s += "band " + std::to_string(b) + " shows a strong artifact ridge above the clean profile .";
    }
    return s;
}

inline std::string fake_td_sentences(const std::vector<std::pair<int, int>>& iv) {
    if (iv.empty()) return "energy stays steady across every interval .";
    std::string s;
    for (auto [a, b] : iv) {
        if (!s.empty()) s += ' ';
        s += "interval " + std::to_string(a) + " to " + std::to_string(b) +
             " carries an abrupt artifact burst .";
    }
    return s;
}

inline constexpr const char* kFillers[] = {
    "the clip came from the nightly batch .",
    "a reviewer noted the file earlier .",
    "the recording spans a few seconds .",
};

} // namespace mockdet

struct MockCaptionerOptions {
    double verbose_rate = 0.25;
    double internal_contradiction_rate = 0.0; // issue (ii)
    double label_flip_rate = 0.0;             // issue (iii), all clips
    double hard_label_flip_rate = 0.0;        // issue (iii) extra, hard fakes only
    int hard_intensity = 1; // fakes whose strongest artifact is at most this are "hard"
    std::uint64_t seed = 1;
};

// Deterministic stand-in for a captioning model. Reads the clip token grid
// from the payload, reconstructs artifact evidence, writes a structured
// rationale, and injects the three issue classes at configurable rates. Every
// injection decision derives from (seed, clip_id), so schedules replay
// exactly.
class MockCaptionTransport : public Transport {
public:
    explicit MockCaptionTransport(MockCaptionerOptions opt = {}) : opt_(opt) {}

    // replayable decision schedule
    bool draws_verbose(const std::string& clip_id) const {
        return draw(clip_id, "verbose") < opt_.verbose_rate;
    }
    bool draws_internal(const std::string& clip_id) const {
        return draw(clip_id, "internal") < opt_.internal_contradiction_rate;
    }
    bool draws_label_flip(const std::string& clip_id, bool hard_fake) const {
        if (draw(clip_id, "flip") < opt_.label_flip_rate) return true;
        return hard_fake && draw(clip_id, "hardflip") < opt_.hard_label_flip_rate;
    }

    WireResponse send(const WireRequest& req) override {
        const auto& p = req.payload;
        const auto tokens = p.at("tokens").get<std::vector<std::string>>();
        const int time_steps = p.at("time_steps").get<int>();
        const int bands = p.at("bands").get<int>();
        const int clean_levels = p.at("clean_levels").get<int>();
        const int max_intensity = p.value("max_artifact_intensity", 0);

        const bool hard_fake =
            req.label == Label::Fake && max_intensity > 0 && max_intensity <= opt_.hard_intensity;
        const bool flip = draws_label_flip(req.clip_id, hard_fake);
        const bool internal = draws_internal(req.clip_id);
        const bool verbose = draws_verbose(req.clip_id);

        const Label answer = flip ? (req.label == Label::Real ? Label::Fake : Label::Real)
                                  : req.label;
        // sections support the answer unless an internal contradiction is injected
        const Label evidence = internal ? (answer == Label::Real ? Label::Fake : Label::Real)
                                        : answer;

        const auto ev =
            mockdet::detect_from_tokens(tokens, time_steps, bands, clean_levels);
        std::string fd, td;
        if (evidence == Label::Fake) {
            fd = mockdet::fake_fd_sentences(ev.bands);
            td = mockdet::fake_td_sentences(ev.intervals);
            if (ev.intervals.empty() && ev.bands.empty())
                td = "interval 0 to 1 carries an abrupt artifact burst .";
        } else {
            fd = "the spectrum keeps a clean profile across all bands .";
            td = "energy stays steady across every interval .";
        }
        if (verbose) {
            Rng rng(derive_seed(opt_.seed, "verbose-pick/" + req.clip_id));
            fd = std::string(mockdet::kFillers[rng.below(3)]) + " " + fd;
            td = td + " " + mockdet::kFillers[rng.below(3)];
        }

        TagSpec tags;
        WireResponse resp;
        resp.text = tags.think_open + " " + tags.fd_tag + " " + fd + " " + tags.td_tag + " " + td +
                    " " + tags.think_close + " " + tags.answer_open + " " + to_string(answer) +
                    " " + tags.answer_close;
        return resp;
    }

    const MockCaptionerOptions& options() const { return opt_; }

private:
    double draw(const std::string& clip_id, const char* what) const {
        Rng rng(derive_seed(opt_.seed, std::string(what) + "/" + clip_id));
        return rng.uniform01();
    }

    MockCaptionerOptions opt_;
};

// Deterministic polish rules: flag when the caption's answer contradicts the
// provided label, or when the think evidence polarity contradicts the answer;
// otherwise keep only evidence sentences and re-emit the canonical layout.
class MockPolishTransport : public Transport {
public:
    static bool sentence_has_evidence(const std::string& sentence) {
        static const std::vector<std::string> kKeep = {"band",   "bands", "interval", "spectrum",
                                                       "energy", "artifact", "clean", "steady"};
        for (const auto& k : kKeep) {
            if (has_word(sentence, k)) return true;
        }
        return false;
    }

    WireResponse send(const WireRequest& req) override {
        const std::string raw = req.payload.at("raw_caption").get<std::string>();
        const TagSpec tags;
        const auto parsed = parse_output(raw, tags);

        WireResponse resp;
        if (parsed.answer == Answer::Invalid || !parsed.think_body) {
            resp.mismatch = true;
            resp.reason = "label_contradiction";
            return resp;
        }
        if (parsed.answer != to_answer(req.label)) {
            resp.mismatch = true;
            resp.reason = "label_contradiction";
            return resp;
        }
        const bool evidence_fake = has_word(*parsed.think_body, "artifact");
        if (evidence_fake != (parsed.answer == Answer::Fake)) {
            resp.mismatch = true;
            resp.reason = "internal_contradiction";
            return resp;
        }

        bool trimmed = false;
        const std::string fd = keep_evidence(parsed.fd_section.value_or(""), trimmed);
        const std::string td = keep_evidence(parsed.td_section.value_or(""), trimmed);
        const std::string fd_out =
            fd.empty() ? "the spectrum keeps a clean profile across all bands ." : fd;
        const std::string td_out = td.empty() ? "energy stays steady across every interval ." : td;
        resp.text = tags.think_open + " " + tags.fd_tag + " " + fd_out + " " + tags.td_tag + " " +
                    td_out + " " + tags.think_close + " " + tags.answer_open + " " +
                    to_string(req.label) + " " + tags.answer_close;
        if (trimmed) resp.reason = "trimmed";
        return resp;
    }

private:
    static bool has_word(const std::string& text, const std::string& word) {
        std::size_t pos = 0;
        while ((pos = text.find(word, pos)) != std::string::npos) {
            const bool left_ok = pos == 0 || std::isspace(static_cast<unsigned char>(text[pos - 1]));
            const std::size_t end = pos + word.size();
            const bool right_ok =
                end >= text.size() || std::isspace(static_cast<unsigned char>(text[end]));
            if (left_ok && right_ok) return true;
            pos = end;
        }
        return false;
    }

    // keep sentences carrying evidence keywords, joined back with " "
    static std::string keep_evidence(const std::string& section, bool& trimmed) {
        std::string out;
        std::size_t start = 0;
        for (std::size_t i = 0; i < section.size(); ++i) {
            if (section[i] != '.' && section[i] != '!' && section[i] != '?') continue;
            const std::string sentence = section.substr(start, i - start + 1);
            start = i + 1;
            const auto first = sentence.find_first_not_of(" \t\n");
            if (first == std::string::npos) continue;
            if (sentence_has_evidence(sentence)) {
                if (!out.empty()) out += ' ';
                std::size_t last = sentence.find_last_not_of(" \t\n");
                out += sentence.substr(first, last - first + 1);
            } else {
                trimmed = true;
            }
        }
        return out;
    }
};

// Transport decorator that fails the first N sends for matching clips.
class FlakyTransport : public Transport {
public:
    FlakyTransport(std::shared_ptr<Transport> inner, int failures_per_clip,
                   std::string match_prefix = "")
        : inner_(std::move(inner)),
          failures_per_clip_(failures_per_clip),
          match_prefix_(std::move(match_prefix)) {}

    WireResponse send(const WireRequest& req) override {
        if (match_prefix_.empty() || req.clip_id.rfind(match_prefix_, 0) == 0) {
            int& n = failures_[req.clip_id];
            if (n < failures_per_clip_) {
                ++n;
                throw TransportError("injected transport failure for " + req.clip_id);
            }
        }
        return inner_->send(req);
    }

    int total_failures() const {
        int s = 0;
        for (const auto& [id, n] : failures_) s += n;
        return s;
    }

private:
    std::shared_ptr<Transport> inner_;
    int failures_per_clip_;
    std::string match_prefix_;
    std::map<std::string, int> failures_;
};

// ---------------------------------------------------------------------------
// pipeline operations
// ---------------------------------------------------------------------------

struct AnnotateOptions {
    int grid_time_steps = 8;
    int grid_bands = 4;
    int clean_levels = 3;
};

inline nlohmann::ordered_json caption_payload(const AudioClip& clip, const Vocabulary& vocab,
                                              const AnnotateOptions& opt) {
    std::vector<std::string> toks;
    toks.reserve(clip.feature_tokens.size());
    for (TokenId id : clip.feature_tokens) toks.push_back(vocab.text(id));
    int max_intensity = 0;
    for (const auto& a : clip.artifacts) max_intensity = std::max(max_intensity, a.intensity);
    return {{"type", to_string(clip.type)},
            {"tokens", toks},
            {"time_steps", opt.grid_time_steps},
            {"bands", opt.grid_bands},
            {"clean_levels", opt.clean_levels},
            {"max_artifact_intensity", max_intensity}};
}

// One record per clip, processed in id order so results are deterministic
// regardless of transport timing. Failures after retries are quarantined,
// never dropped.
inline AnnotateResult annotate(const std::vector<AudioClip>& clips, const CaptionClient& captioner,
                               const PolishClient& polisher, const AnnotateOptions& opt,
                               const Vocabulary& vocab) {
    std::vector<const AudioClip*> ordered;
    ordered.reserve(clips.size());
    for (const auto& c : clips) ordered.push_back(&c);
    std::sort(ordered.begin(), ordered.end(),
              [](const AudioClip* a, const AudioClip* b) { return a->id < b->id; });

    AnnotateResult out;
    for (const AudioClip* clip : ordered) {
        std::string raw;
        try {
            const auto resp = captioner.call(clip->id, clip->label, caption_payload(*clip, vocab, opt));
            if (!resp.text || resp.text->empty())
                throw std::runtime_error("caption response carried no text");
            raw = *resp.text;
        } catch (const std::exception& e) {
            out.quarantined.push_back({clip->id, "caption", e.what()});
            continue;
        }

        AnnotationRecord rec;
        rec.clip_id = clip->id;
        rec.raw_caption = raw;
        try {
            const auto resp = polisher.call(clip->id, clip->label,
                                            nlohmann::ordered_json{{"raw_caption", raw}});
            if (resp.mismatch) {
                rec.partition = Partition::NonThink;
                if (resp.reason == "internal_contradiction")
                    rec.issue_tags.insert(IssueTag::InternalContradiction);
                else
                    rec.issue_tags.insert(IssueTag::LabelContradiction);
            } else {
                if (!resp.text || resp.text->empty())
                    throw std::runtime_error("polish response carried no text");
                const auto polished = parse_output(*resp.text);
                if (!check_format(polished) || polished.answer != to_answer(clip->label))
                    throw std::runtime_error("polished caption failed format/label validation");
                rec.partition = Partition::Think;
                rec.polished = *resp.text;
                if (resp.reason == "trimmed") rec.issue_tags.insert(IssueTag::Verbose);
            }
        } catch (const std::exception& e) {
            out.quarantined.push_back({clip->id, "polish", e.what()});
            continue;
        }
        out.records.push_back(std::move(rec));
    }
    return out;
}

// Split records into think / non-think and compute per-split, per-type stats.
// A pure function of the record set: input order never matters.
inline PartitionedCorpus partition(const std::vector<AnnotationRecord>& records,
                                   const ClipIndex& index) {
    std::vector<AnnotationRecord> sorted = records;
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.clip_id < b.clip_id; });
    PartitionedCorpus out;
    std::string prev;
    for (const auto& rec : sorted) {
        if (rec.clip_id == prev)
            throw std::invalid_argument("partition: duplicate clip id '" + rec.clip_id + "'");
        prev = rec.clip_id;
        const auto it = index.find(rec.clip_id);
        if (it == index.end())
            throw std::invalid_argument("partition: unknown clip id '" + rec.clip_id + "'");
        const bool think = rec.partition == Partition::Think;
        if (think != rec.polished.has_value())
            throw std::invalid_argument("partition: record '" + rec.clip_id +
                                        "' violates partition <=> polished invariant");
        const Split sp = it->second.split;
        const SplitTypeKey key{sp, it->second.type};
        if (think) {
            out.d_think.push_back(rec);
            out.stats.think_count[sp]++;
            out.stats.think_by_type[key]++;
        } else {
            out.d_non_think.push_back(rec);
            out.stats.non_think_count[sp]++;
            out.stats.non_think_by_type[key]++;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// training strategies
// ---------------------------------------------------------------------------

enum class StrategyId : std::uint8_t {
    S1_discard,            // SFT(think)            -> GRPO(think)
    S2_threestage,         // SFT(non-think) -> SFT(think) -> GRPO(think)
    S3_mix_into_sft,       // SFT(think + non-think) -> GRPO(think)
    S4_think_sft_mixed_grpo // SFT(think)           -> GRPO(think + non-think)
};

inline const char* to_string(StrategyId s) {
    switch (s) {
        case StrategyId::S1_discard: return "S1";
        case StrategyId::S2_threestage: return "S2";
        case StrategyId::S3_mix_into_sft: return "S3";
        default: return "S4";
    }
}

inline StrategyId strategy_from(const std::string& s) {
    if (s == "S1" || s == "s1") return StrategyId::S1_discard;
    if (s == "S2" || s == "s2") return StrategyId::S2_threestage;
    if (s == "S3" || s == "s3") return StrategyId::S3_mix_into_sft;
    if (s == "S4" || s == "s4") return StrategyId::S4_think_sft_mixed_grpo;
    throw std::invalid_argument("unknown strategy id '" + s + "' (expected S1..S4)");
}

enum class StageKind : std::uint8_t { SFT, GRPO };
enum class DatasetSelector : std::uint8_t { ThinkOnly, NonThinkOnly, ThinkAndNonThink };

struct Stage {
    StageKind kind;
    DatasetSelector data;
};

struct StrategyPlan {
    StrategyId id;
    std::vector<Stage> stages;
};

inline StrategyPlan plan_strategy(StrategyId id, const PartitionedCorpus& corpus) {
    if (corpus.d_think.empty() && corpus.d_non_think.empty())
        throw std::invalid_argument("plan_strategy: empty corpus");
    switch (id) {
        case StrategyId::S1_discard:
            return {id,
                    {{StageKind::SFT, DatasetSelector::ThinkOnly},
                     {StageKind::GRPO, DatasetSelector::ThinkOnly}}};
        case StrategyId::S2_threestage:
            return {id,
                    {{StageKind::SFT, DatasetSelector::NonThinkOnly},
                     {StageKind::SFT, DatasetSelector::ThinkOnly},
                     {StageKind::GRPO, DatasetSelector::ThinkOnly}}};
        case StrategyId::S3_mix_into_sft:
            return {id,
                    {{StageKind::SFT, DatasetSelector::ThinkAndNonThink},
                     {StageKind::GRPO, DatasetSelector::ThinkOnly}}};
        default:
            return {id,
                    {{StageKind::SFT, DatasetSelector::ThinkOnly},
                     {StageKind::GRPO, DatasetSelector::ThinkAndNonThink}}};
    }
}

inline std::vector<AnnotationRecord> select_records(const PartitionedCorpus& corpus,
                                                    DatasetSelector sel) {
    switch (sel) {
        case DatasetSelector::ThinkOnly: return corpus.d_think;
        case DatasetSelector::NonThinkOnly: return corpus.d_non_think;
        default: return corpus.d_r();
    }
}

// ---------------------------------------------------------------------------
// record persistence
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json record_to_json(const AnnotationRecord& r) {
    nlohmann::ordered_json tags = nlohmann::ordered_json::array();
    for (const auto t : r.issue_tags) tags.push_back(to_string(t));
    nlohmann::ordered_json j = {{"clip_id", r.clip_id},
                                {"raw_caption", r.raw_caption},
                                {"partition", r.partition == Partition::Think ? "think" : "non_think"},
                                {"issue_tags", tags}};
    if (r.polished) j["polished"] = *r.polished;
    else j["mismatch"] = true;
    return j;
}

inline AnnotationRecord record_from_json(const nlohmann::json& j) {
    AnnotationRecord r;
    r.clip_id = j.at("clip_id").get<std::string>();
    r.raw_caption = j.at("raw_caption").get<std::string>();
    const std::string part = j.at("partition").get<std::string>();
    r.partition = part == "think" ? Partition::Think : Partition::NonThink;
    if (j.contains("polished")) r.polished = j.at("polished").get<std::string>();
    for (const auto& t : j.at("issue_tags")) {
        const std::string s = t.get<std::string>();
        if (s == "verbose") r.issue_tags.insert(IssueTag::Verbose);
        else if (s == "internal_contradiction") r.issue_tags.insert(IssueTag::InternalContradiction);
        else r.issue_tags.insert(IssueTag::LabelContradiction);
    }
    return r;
}

} // namespace ftgrpo
