#pragma once

// Desk-scale corpus generator: labeled clips of four audio types as T x B
// token grids. Fake clips carry planted frequency-band or time-interval
// artifacts whose cell levels sit above the clean range, so a rule detector
// stays exact while a learned policy still has work to do. The eval split
// uses held-out generator ids and the hardest artifact intensity.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ftgrpo/rng.hpp"
#include "ftgrpo/schema.hpp"
#include "ftgrpo/vocab.hpp"

namespace ftgrpo {

enum class AudioType : std::uint8_t { Speech, Sound, Singing, Music };
enum class Split : std::uint8_t { Train, Dev, Eval };

inline constexpr AudioType kAllAudioTypes[] = {AudioType::Speech, AudioType::Sound,
                                               AudioType::Singing, AudioType::Music};

inline const char* to_string(AudioType t) {
    switch (t) {
        case AudioType::Speech: return "speech";
        case AudioType::Sound: return "sound";
        case AudioType::Singing: return "singing";
        default: return "music";
    }
}

inline const char* to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Dev: return "dev";
        default: return "eval";
    }
}

inline AudioType audio_type_from(const std::string& s) {
    if (s == "speech") return AudioType::Speech;
    if (s == "sound") return AudioType::Sound;
    if (s == "singing") return AudioType::Singing;
    if (s == "music") return AudioType::Music;
    throw std::invalid_argument("unknown audio type '" + s + "'");
}

inline Split split_from(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "dev") return Split::Dev;
    if (s == "eval") return Split::Eval;
    throw std::invalid_argument("unknown split '" + s + "'");
}

inline Label label_from(const std::string& s) {
    if (s == "real") return Label::Real;
    if (s == "fake") return Label::Fake;
    throw std::invalid_argument("unknown label '" + s + "'");
}

struct ArtifactSpec {
    enum class Kind : std::uint8_t { FrequencyBand, TimeInterval };
    Kind kind = Kind::FrequencyBand;
    int band = -1;     // FrequencyBand
    int t_begin = -1;  // TimeInterval, inclusive
    int t_end = -1;
    int intensity = 1;
};

struct AudioClip {
    std::string id;
    AudioType type = AudioType::Speech;
    Split split = Split::Train;
    Label label = Label::Real;
    std::string generator_id;
    std::vector<TokenId> feature_tokens; // T x B, row-major over time steps
    std::vector<ArtifactSpec> artifacts;
};

struct CorpusConfig {
    std::vector<AudioType> types = {AudioType::Speech, AudioType::Sound, AudioType::Singing,
                                    AudioType::Music};
    int train_count = 512; // per type
    int dev_count = 128;
    int eval_count = 256;
    double fake_fraction = 0.5;
    int time_steps = 8;
    int bands = 4;
    int levels = 6;
    int clean_levels = 3;
    int intensity_min = 1;
    int intensity_max = 3;
    std::uint64_t seed = 1;

    void validate() const {
        if (types.empty()) throw std::invalid_argument("CorpusConfig: no audio types");
        if (train_count < 0 || dev_count < 0 || eval_count < 0)
            throw std::invalid_argument("CorpusConfig: negative clip count");
        if (fake_fraction < 0.0 || fake_fraction > 1.0)
            throw std::invalid_argument("CorpusConfig: fake_fraction must lie in [0,1]");
        if (time_steps < 4) throw std::invalid_argument("CorpusConfig: time_steps must be >= 4");
        if (bands < 2) throw std::invalid_argument("CorpusConfig: bands must be >= 2");
        if (clean_levels < 2 || clean_levels >= levels)
            throw std::invalid_argument("CorpusConfig: need 2 <= clean_levels < levels");
        if (intensity_min < 1 || intensity_min > intensity_max)
            throw std::invalid_argument("CorpusConfig: bad intensity range");
        if (clean_levels - 1 + intensity_max >= levels)
            throw std::invalid_argument("CorpusConfig: intensity_max exceeds level range");
    }

    int count_for(Split s) const {
        switch (s) {
            case Split::Train: return train_count;
            case Split::Dev: return dev_count;
            default: return eval_count;
        }
    }

    int max_index() const { return std::max(time_steps, bands); }
};

inline Vocabulary build_vocabulary(const TagSpec& tags, const CorpusConfig& cfg) {
    return build_vocabulary(tags, cfg.bands, cfg.levels, cfg.max_index());
}

namespace detail {

inline const char* type_code(AudioType t) {
    switch (t) {
        case AudioType::Speech: return "spc";
        case AudioType::Sound: return "snd";
        case AudioType::Singing: return "sng";
        default: return "mus";
    }
}

inline const char* split_code(Split s) {
    switch (s) {
        case Split::Train: return "tr";
        case Split::Dev: return "dv";
        default: return "ev";
    }
}

// Per-type base texture in [0, clean_levels).
inline int base_pattern(AudioType ty, int t, int b, int clean_levels) {
    int v = 0;
    switch (ty) {
        case AudioType::Speech: v = (b < 2) ? (t % 2) + 1 : 0; break;
        case AudioType::Sound: v = (t + b) % 3; break;
        case AudioType::Singing: v = (b + (t % 3)) % 3; break;
        default: v = (2 * b + t) % 3; break;
    }
    return v % clean_levels;
}

inline int generator_offset(const std::string& gen, int b, int clean_levels) {
    return static_cast<int>(fnv1a64(gen + "/" + std::to_string(b)) %
                            static_cast<std::uint64_t>(clean_levels));
}

} // namespace detail

// Clean cell levels depend on (type, generator, position) plus a small
// per-clip jitter; everything stays strictly below clean_levels.
inline int clean_level(AudioType ty, const std::string& gen, int t, int b, int clean_levels,
                       Rng& jitter_rng) {
    const int base = detail::base_pattern(ty, t, b, clean_levels);
    const int off = detail::generator_offset(gen, b, clean_levels);
    const int jit = static_cast<int>(jitter_rng.below(2));
    return (base + off + jit) % clean_levels;
}

inline std::vector<std::string> generators_for(Split s) {
    if (s == Split::Eval) return {"g05", "g06", "g07"};
    return {"g01", "g02", "g03", "g04"};
}

// Deterministic corpus generation: stratified exact fake counts per type and
// split, eval generators disjoint from train/dev, eval artifacts pinned to the
// hardest (minimum) intensity.
inline std::vector<AudioClip> gen_corpus(const CorpusConfig& cfg, const Vocabulary& vocab) {
    cfg.validate();
    for (int b = 0; b < cfg.bands; ++b) {
        for (int l = 0; l < cfg.levels; ++l) {
            if (!vocab.contains(feature_token(b, l)))
                throw std::invalid_argument(
                    "gen_corpus: vocabulary too small, missing feature token '" +
                    feature_token(b, l) + "'");
        }
    }

    std::vector<AudioClip> clips;
    const Split splits[] = {Split::Train, Split::Dev, Split::Eval};
    for (AudioType ty : cfg.types) {
        for (Split sp : splits) {
            const int n = cfg.count_for(sp);
            const int n_fake = static_cast<int>(n * cfg.fake_fraction);
            // exact stratified label assignment, shuffled deterministically
            std::vector<Label> labels(static_cast<std::size_t>(n), Label::Real);
            for (int i = 0; i < n_fake; ++i) labels[static_cast<std::size_t>(i)] = Label::Fake;
            Rng label_rng(derive_seed(cfg.seed, std::string("labels/") + to_string(ty) + "/" +
                                                    to_string(sp)));
            label_rng.shuffle(labels);

            const auto gens = generators_for(sp);
            for (int i = 0; i < n; ++i) {
                AudioClip clip;
                char idx[16];
                std::snprintf(idx, sizeof(idx), "%05d", i);
                clip.id = std::string(detail::type_code(ty)) + "-" + detail::split_code(sp) + "-" + idx;
                clip.type = ty;
                clip.split = sp;
                clip.label = labels[static_cast<std::size_t>(i)];

                Rng rng(derive_seed(cfg.seed, "clip/" + clip.id));
                clip.generator_id = gens[rng.below(gens.size())];

                // clean grid
                std::vector<int> grid(static_cast<std::size_t>(cfg.time_steps) * cfg.bands);
                for (int t = 0; t < cfg.time_steps; ++t)
                    for (int b = 0; b < cfg.bands; ++b)
                        grid[static_cast<std::size_t>(t) * cfg.bands + b] =
                            clean_level(ty, clip.generator_id, t, b, cfg.clean_levels, rng);

                if (clip.label == Label::Fake) {
                    const int kind_pick = static_cast<int>(rng.below(3)); // FD / TD / both
                    auto intensity = [&]() {
                        if (sp == Split::Eval) return cfg.intensity_min;
                        return static_cast<int>(rng.range(cfg.intensity_min, cfg.intensity_max));
                    };
                    if (kind_pick == 0 || kind_pick == 2) {
                        ArtifactSpec a;
                        a.kind = ArtifactSpec::Kind::FrequencyBand;
                        a.band = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.bands)));
                        a.intensity = intensity();
                        clip.artifacts.push_back(a);
                    }
                    if (kind_pick == 1 || kind_pick == 2) {
                        ArtifactSpec a;
                        a.kind = ArtifactSpec::Kind::TimeInterval;
                        const int max_len = std::max(1, cfg.time_steps / 2 - 1);
                        const int len = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_len)));
                        a.t_begin = static_cast<int>(
                            rng.below(static_cast<std::uint64_t>(cfg.time_steps - len + 1)));
                        a.t_end = a.t_begin + len - 1;
                        a.intensity = intensity();
                        clip.artifacts.push_back(a);
                    }
                    for (const auto& a : clip.artifacts) {
                        const int level = cfg.clean_levels - 1 + a.intensity;
                        if (a.kind == ArtifactSpec::Kind::FrequencyBand) {
                            for (int t = 0; t < cfg.time_steps; ++t)
                                grid[static_cast<std::size_t>(t) * cfg.bands + a.band] = level;
                        } else {
                            for (int t = a.t_begin; t <= a.t_end; ++t)
                                for (int b = 0; b < cfg.bands; ++b)
                                    grid[static_cast<std::size_t>(t) * cfg.bands + b] = level;
                        }
                    }
                }

                clip.feature_tokens.reserve(grid.size());
                for (int t = 0; t < cfg.time_steps; ++t)
                    for (int b = 0; b < cfg.bands; ++b)
                        clip.feature_tokens.push_back(vocab.require(
                            feature_token(b, grid[static_cast<std::size_t>(t) * cfg.bands + b])));
                clips.push_back(std::move(clip));
            }
        }
    }
    return clips;
}

// Ground-truth rationale from artifact metadata. Always well-formed, both
// sections complete, answer equals the clip label.
inline std::string oracle_rationale(const AudioClip& clip, const TagSpec& tags = {}) {
    std::string fd, td;
    for (const auto& a : clip.artifacts) {
        if (a.kind == ArtifactSpec::Kind::FrequencyBand) {
            if (!fd.empty()) fd += ' ';
            fd += "band " + std::to_string(a.band) +
                  " shows a strong artifact ridge above the clean profile .";
        } else {
            if (!td.empty()) td += ' ';
            td += "interval " + std::to_string(a.t_begin) + " to " + std::to_string(a.t_end) +
                  " carries an abrupt artifact burst .";
        }
    }
    if (fd.empty()) fd = "the spectrum keeps a clean profile across all bands .";
    if (td.empty()) td = "energy stays steady across every interval .";
    return tags.think_open + " " + tags.fd_tag + " " + fd + " " + tags.td_tag + " " + td + " " +
           tags.think_close + " " + tags.answer_open + " " + to_string(clip.label) + " " +
           tags.answer_close;
}

// Rule-based detection from feature tokens alone: any cell at or above the
// clean range means fake.
inline Label oracle_detector(const AudioClip& clip, const Vocabulary& vocab, int clean_levels) {
    for (TokenId id : clip.feature_tokens) {
        const std::string& s = vocab.text(id);
        const auto pos = s.rfind("_l");
        if (pos == std::string::npos) continue;
        const int level = std::stoi(s.substr(pos + 2));
        if (level >= clean_levels) return Label::Fake;
    }
    return Label::Real;
}

// ---------------------------------------------------------------------------
// persistence: line-delimited clip records plus a manifest with the config
// hash and the vocabulary
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json corpus_config_json(const CorpusConfig& cfg) {
    nlohmann::ordered_json types = nlohmann::ordered_json::array();
    for (auto t : cfg.types) types.push_back(to_string(t));
    return {{"types", types},
            {"train", cfg.train_count},
            {"dev", cfg.dev_count},
            {"eval", cfg.eval_count},
            {"fake_fraction", cfg.fake_fraction},
            {"time_steps", cfg.time_steps},
            {"bands", cfg.bands},
            {"levels", cfg.levels},
            {"clean_levels", cfg.clean_levels},
            {"intensity_min", cfg.intensity_min},
            {"intensity_max", cfg.intensity_max},
            {"seed", cfg.seed}};
}

inline CorpusConfig corpus_config_from_json(const nlohmann::json& j) {
    CorpusConfig cfg;
    cfg.types.clear();
    for (const auto& t : j.at("types")) cfg.types.push_back(audio_type_from(t.get<std::string>()));
    cfg.train_count = j.at("train").get<int>();
    cfg.dev_count = j.at("dev").get<int>();
    cfg.eval_count = j.at("eval").get<int>();
    cfg.fake_fraction = j.at("fake_fraction").get<double>();
    cfg.time_steps = j.at("time_steps").get<int>();
    cfg.bands = j.at("bands").get<int>();
    cfg.levels = j.at("levels").get<int>();
    cfg.clean_levels = j.at("clean_levels").get<int>();
    cfg.intensity_min = j.at("intensity_min").get<int>();
    cfg.intensity_max = j.at("intensity_max").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

inline nlohmann::ordered_json clip_to_json(const AudioClip& c) {
    nlohmann::ordered_json arts = nlohmann::ordered_json::array();
    for (const auto& a : c.artifacts) {
        if (a.kind == ArtifactSpec::Kind::FrequencyBand)
            arts.push_back({{"kind", "frequency_band"}, {"band", a.band}, {"intensity", a.intensity}});
        else
            arts.push_back({{"kind", "time_interval"},
                            {"begin", a.t_begin},
                            {"end", a.t_end},
                            {"intensity", a.intensity}});
    }
    return {{"id", c.id},
            {"type", to_string(c.type)},
            {"split", to_string(c.split)},
            {"label", to_string(c.label)},
            {"generator_id", c.generator_id},
            {"tokens", c.feature_tokens},
            {"artifacts", arts}};
}

inline AudioClip clip_from_json(const nlohmann::json& j) {
    AudioClip c;
    c.id = j.at("id").get<std::string>();
    c.type = audio_type_from(j.at("type").get<std::string>());
    c.split = split_from(j.at("split").get<std::string>());
    c.label = label_from(j.at("label").get<std::string>());
    c.generator_id = j.at("generator_id").get<std::string>();
    c.feature_tokens = j.at("tokens").get<std::vector<TokenId>>();
    for (const auto& a : j.at("artifacts")) {
        ArtifactSpec spec;
        const std::string kind = a.at("kind").get<std::string>();
        spec.intensity = a.at("intensity").get<int>();
        if (kind == "frequency_band") {
            spec.kind = ArtifactSpec::Kind::FrequencyBand;
            spec.band = a.at("band").get<int>();
        } else if (kind == "time_interval") {
            spec.kind = ArtifactSpec::Kind::TimeInterval;
            spec.t_begin = a.at("begin").get<int>();
            spec.t_end = a.at("end").get<int>();
        } else {
            throw std::invalid_argument("unknown artifact kind '" + kind + "'");
        }
        c.artifacts.push_back(spec);
    }
    return c;
}

inline std::uint64_t config_hash(const nlohmann::ordered_json& j) { return fnv1a64(j.dump()); }

struct CorpusOnDisk {
    CorpusConfig cfg;
    std::vector<std::string> vocabulary;
    std::vector<AudioClip> clips;
};

inline void save_corpus(const std::vector<AudioClip>& clips, const CorpusConfig& cfg,
                        const Vocabulary& vocab, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "corpus.jsonl", std::ios::trunc);
        if (!out) throw std::runtime_error("save_corpus: cannot write " + (dir / "corpus.jsonl").string());
        for (const auto& c : clips) out << clip_to_json(c).dump() << '\n';
    }
    int n_fake = 0;
    for (const auto& c : clips) n_fake += c.label == Label::Fake ? 1 : 0;
    const auto cfg_json = corpus_config_json(cfg);
    nlohmann::ordered_json manifest = {
        {"config", cfg_json},
        {"config_hash", config_hash(cfg_json)},
        {"clip_count", clips.size()},
        {"fake_count", n_fake},
        {"vocabulary", vocab.tokens()},
    };
    std::ofstream mout(dir / "manifest.json", std::ios::trunc);
    mout << manifest.dump(2) << '\n';
}

inline CorpusOnDisk load_corpus(const std::filesystem::path& dir) {
    std::ifstream min(dir / "manifest.json");
    if (!min)
        throw std::runtime_error("load_corpus: missing manifest " + (dir / "manifest.json").string());
    nlohmann::json manifest = nlohmann::json::parse(min);
    CorpusOnDisk out;
    out.cfg = corpus_config_from_json(manifest.at("config"));
    out.vocabulary = manifest.at("vocabulary").get<std::vector<std::string>>();

    std::ifstream in(dir / "corpus.jsonl");
    if (!in) throw std::runtime_error("load_corpus: missing " + (dir / "corpus.jsonl").string());
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.clips.push_back(clip_from_json(nlohmann::json::parse(line)));
    }
    if (out.clips.size() != manifest.at("clip_count").get<std::size_t>())
        throw std::runtime_error("load_corpus: clip count mismatch against manifest");
    return out;
}

} // namespace ftgrpo
