#pragma once

// Two-step training: an SFT cold start on rationale demonstrations, then
// group-relative policy optimization with the composite rule reward, group
// z-scored advantages, a PPO-style clipped surrogate, and a k3 KL penalty to
// the frozen SFT reference snapshot.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ftgrpo/annopipeline.hpp"
#include "ftgrpo/policy.hpp"
#include "ftgrpo/rewards.hpp"
#include "ftgrpo/rng.hpp"
#include "ftgrpo/schema.hpp"
#include "ftgrpo/synth.hpp"
#include "ftgrpo/vocab.hpp"

namespace ftgrpo {

// ---------------------------------------------------------------------------
// datasets
// ---------------------------------------------------------------------------

struct TrainSample {
    std::string clip_id;
    std::vector<TokenId> clip_tokens;
    Label label = Label::Real;
    std::vector<TokenId> target; // rationale tokens + <eos>; answer-only for non-think
    bool has_rationale = false;
};

// Join annotation records with their clips. Think records train on the
// polished rationale; non-think records reduce to an answer-only target.
inline std::vector<TrainSample> build_training_samples(
    const std::vector<AnnotationRecord>& records,
    const std::map<std::string, const AudioClip*>& clips_by_id, const Vocabulary& vocab,
    const TagSpec& tags) {
    std::vector<TrainSample> out;
    out.reserve(records.size());
    for (const auto& rec : records) {
        const auto it = clips_by_id.find(rec.clip_id);
        if (it == clips_by_id.end())
            throw std::invalid_argument("build_training_samples: no clip for record '" +
                                        rec.clip_id + "'");
        const AudioClip& clip = *it->second;
        TrainSample s;
        s.clip_id = clip.id;
        s.clip_tokens = clip.feature_tokens;
        s.label = clip.label;
        std::string text;
        if (rec.polished) {
            text = *rec.polished;
            s.has_rationale = true;
        } else {
            text = tags.answer_open + " " + std::string(to_string(clip.label)) + " " +
                   tags.answer_close;
        }
        try {
            s.target = vocab.tokenize(text);
        } catch (const std::exception& e) {
            throw std::runtime_error("build_training_samples: sample '" + rec.clip_id +
                                     "': " + e.what());
        }
        s.target.push_back(vocab.eos());
        out.push_back(std::move(s));
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.clip_id < b.clip_id; });
    return out;
}

inline std::map<std::string, const AudioClip*> index_clips(const std::vector<AudioClip>& clips) {
    std::map<std::string, const AudioClip*> m;
    for (const auto& c : clips) m[c.id] = &c;
    return m;
}

// Ground-truth demonstration dataset straight from the corpus oracle.
inline std::vector<TrainSample> build_oracle_samples(const std::vector<AudioClip>& clips,
                                                     const Vocabulary& vocab, const TagSpec& tags) {
    std::vector<TrainSample> out;
    out.reserve(clips.size());
    for (const auto& clip : clips) {
        TrainSample s;
        s.clip_id = clip.id;
        s.clip_tokens = clip.feature_tokens;
        s.label = clip.label;
        s.target = vocab.tokenize(oracle_rationale(clip, tags));
        s.target.push_back(vocab.eos());
        s.has_rationale = true;
        out.push_back(std::move(s));
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.clip_id < b.clip_id; });
    return out;
}

// ---------------------------------------------------------------------------
// metrics stream
// ---------------------------------------------------------------------------

// Append-only line-delimited records. "tick" is a logical timestamp (the
// cumulative count of consumed samples), keeping identical runs byte-identical.
class MetricsWriter {
public:
    MetricsWriter() = default;

    explicit MetricsWriter(const std::filesystem::path& path) {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        out_.open(path, std::ios::trunc);
        if (!out_) throw std::runtime_error("MetricsWriter: cannot open " + path.string());
    }

    void write(const nlohmann::ordered_json& row) {
        if (out_.is_open()) out_ << row.dump() << '\n';
        rows_.push_back(row);
    }

    void flush() {
        if (out_.is_open()) out_.flush();
    }

    const std::vector<nlohmann::ordered_json>& rows() const { return rows_; }

private:
    std::ofstream out_;
    std::vector<nlohmann::ordered_json> rows_;
};

// ---------------------------------------------------------------------------
// SFT
// ---------------------------------------------------------------------------

struct SftConfig {
    int epochs = 3;
    double lr = 1e-2;
    int batch_size = 16;
    double max_grad_norm = 0.0; // 0 disables clipping
    std::uint64_t seed = 1;

    void validate() const {
        if (epochs < 0) throw std::invalid_argument("SftConfig: negative epochs");
        if (lr <= 0.0) throw std::invalid_argument("SftConfig: lr must be positive");
        if (batch_size < 1) throw std::invalid_argument("SftConfig: batch_size must be >= 1");
        if (max_grad_norm < 0.0) throw std::invalid_argument("SftConfig: negative max_grad_norm");
    }
};

// Mean over the batch of per-sample summed token NLL.
inline double sft_loss(const PolicyParams& params, const PrefixLayout& pl,
                       std::span<const TrainSample> batch) {
    if (batch.empty()) throw std::invalid_argument("sft_loss: empty batch");
    double total = 0.0;
    for (const auto& s : batch) {
        try {
            total -= sequence_logprob(params, pl, s.clip_tokens, s.target).total;
        } catch (const std::exception& e) {
            throw std::runtime_error("sft_loss: sample '" + s.clip_id + "': " + e.what());
        }
    }
    return total / static_cast<double>(batch.size());
}

inline void clip_gradient(PolicyGrad& grad, double max_norm) {
    if (max_norm <= 0.0) return;
    const double norm = std::sqrt(grad_sq_norm(grad));
    if (norm > max_norm) grad_scale(grad, max_norm / norm);
}

// Shared SFT optimizer loop; accepts any record mix. The cold-start entry
// point below additionally enforces think-only data.
inline PolicyParams run_sft_stage(PolicyParams params, std::span<const TrainSample> samples,
                                  const SftConfig& cfg, const PrefixLayout& pl,
                                  MetricsWriter* metrics = nullptr, const char* phase = "sft") {
    cfg.validate();
    if (samples.empty()) throw std::invalid_argument("run_sft_stage: empty corpus");

    int step = 0;
    long tick = 0;
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, "sft/shuffle/" + std::to_string(epoch)));
        shuffle_rng.shuffle(order);
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            PolicyGrad grad = zero_grad(params.dims);
            double loss = 0.0;
            for (std::size_t k = begin; k < end; ++k) {
                const auto& s = samples[order[k]];
                const std::vector<double> ones(s.target.size(), 1.0);
                try {
                    loss -= sequence_logprob(params, pl, s.clip_tokens, s.target).total;
                    grad_accumulate(grad,
                                    weighted_nll_gradient(params, pl, s.clip_tokens, s.target, ones));
                } catch (const std::exception& e) {
                    throw std::runtime_error("run_sft_stage: sample '" + s.clip_id + "': " + e.what());
                }
            }
            const double inv = 1.0 / static_cast<double>(end - begin);
            loss *= inv;
            grad_scale(grad, inv);
            std::string bad;
            if (!grad_all_finite(grad, &bad))
                throw std::runtime_error("run_sft_stage: non-finite gradient in tensor '" + bad +
                                         "' at step " + std::to_string(step));
            clip_gradient(grad, cfg.max_grad_norm);
            sgd_update(params, grad, cfg.lr);
            tick += static_cast<long>(end - begin);
            if (metrics)
                metrics->write({{"phase", phase},
                                {"step", step},
                                {"tick", tick},
                                {"epoch", epoch},
                                {"seed", cfg.seed},
                                {"loss", loss}});
            ++step;
        }
    }
    if (metrics) metrics->flush();
    return params;
}

// Step-1 cold start: rejects any non-think record.
inline PolicyParams train_sft(PolicyParams init, std::span<const TrainSample> corpus,
                              const SftConfig& cfg, const PrefixLayout& pl,
                              MetricsWriter* metrics = nullptr) {
    for (const auto& s : corpus) {
        if (!s.has_rationale)
            throw std::invalid_argument("train_sft: cold start requires think-only data, sample '" +
                                        s.clip_id + "' has no rationale");
    }
    return run_sft_stage(std::move(init), corpus, cfg, pl, metrics, "sft");
}

// ---------------------------------------------------------------------------
// GRPO primitives
// ---------------------------------------------------------------------------

// Group-relative advantages: (r_i - mean) / (population std + epsilon).
// Constant-reward groups short-circuit to exact zeros.
inline std::vector<double> compute_advantages(std::span<const double> rewards, double epsilon) {
    if (rewards.size() < 2)
        throw std::invalid_argument("compute_advantages: need at least 2 rewards");
    if (epsilon <= 0.0) throw std::invalid_argument("compute_advantages: epsilon must be > 0");
    const std::size_t g = rewards.size();
    bool all_equal = true;
    for (std::size_t i = 1; i < g; ++i) all_equal = all_equal && rewards[i] == rewards[0];
    if (all_equal) return std::vector<double>(g, 0.0);

    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(g);
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(g);
    const double denom = std::sqrt(var) + epsilon;
    std::vector<double> adv(g);
    for (std::size_t i = 0; i < g; ++i) adv[i] = (rewards[i] - mean) / denom;
    return adv;
}

// Per-token k3 estimator: mean of exp(ref - pol) - (ref - pol) - 1.
inline double kl_estimate(std::span<const double> policy_logprobs,
                          std::span<const double> ref_logprobs) {
    if (policy_logprobs.size() != ref_logprobs.size())
        throw std::invalid_argument("kl_estimate: length mismatch (" +
                                    std::to_string(policy_logprobs.size()) + " vs " +
                                    std::to_string(ref_logprobs.size()) + ")");
    if (policy_logprobs.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < policy_logprobs.size(); ++i) {
        const double delta = ref_logprobs[i] - policy_logprobs[i];
        acc += std::exp(delta) - delta - 1.0;
    }
    return acc / static_cast<double>(policy_logprobs.size());
}

struct RolloutResponse {
    std::vector<TokenId> tokens;            // completion, includes <eos> when emitted
    std::vector<double> sampling_logprobs;  // behavior policy, at sampling temperature
    StructuredOutput parsed;
    RewardBreakdown reward;
};

struct RolloutGroup {
    std::string clip_id;
    std::vector<TokenId> clip_tokens;
    Label label = Label::Real;
    std::vector<RolloutResponse> responses;
    std::vector<double> rewards;
    std::vector<double> advantages;
    double epsilon = 1e-4;

    void validate() const {
        if (responses.size() < 2)
            throw std::invalid_argument("RolloutGroup: group size must be >= 2");
        if (rewards.size() != responses.size() || advantages.size() != responses.size())
            throw std::invalid_argument("RolloutGroup: rewards/advantages size mismatch");
    }
};

struct GrpoConfig {
    int group_size = 8;
    double temperature = 0.9;
    double clip_ratio = 0.2;
    double kl_coefficient = 0.04;
    double epsilon = 1e-4;
    RewardWeights weights;
    double lr = 1e-2;
    int epochs = 2;
    int batch_size = 16;
    int max_completion = 48;
    int inner_passes = 1;
    double max_grad_norm = 5.0;
    std::uint64_t seed = 1;
    std::string reference; // id/path of the frozen reference checkpoint

    void validate() const {
        if (group_size < 2) throw std::invalid_argument("GrpoConfig: group_size must be >= 2");
        if (temperature <= 0.0) throw std::invalid_argument("GrpoConfig: temperature must be > 0");
        if (clip_ratio <= 0.0 || clip_ratio >= 1.0)
            throw std::invalid_argument("GrpoConfig: clip_ratio must lie in (0,1)");
        if (kl_coefficient < 0.0) throw std::invalid_argument("GrpoConfig: negative kl_coefficient");
        if (epsilon <= 0.0) throw std::invalid_argument("GrpoConfig: epsilon must be > 0");
        weights.validate();
        if (lr <= 0.0) throw std::invalid_argument("GrpoConfig: lr must be positive");
        if (epochs < 0) throw std::invalid_argument("GrpoConfig: negative epochs");
        if (batch_size < 1) throw std::invalid_argument("GrpoConfig: batch_size must be >= 1");
        if (max_completion < 4) throw std::invalid_argument("GrpoConfig: max_completion too small");
        if (inner_passes < 1) throw std::invalid_argument("GrpoConfig: inner_passes must be >= 1");
        if (max_grad_norm < 0.0) throw std::invalid_argument("GrpoConfig: negative max_grad_norm");
    }
};

struct GrpoStepStats {
    double loss = 0.0;           // clipped surrogate + KL penalty
    double surrogate_loss = 0.0; // clipped surrogate alone
    double unclipped_loss = 0.0; // ratio * A surrogate without clipping
    double mean_kl = 0.0;
    double clip_fraction = 0.0;
    double grad_norm = 0.0;
};

// One GRPO update over a batch of rollout groups: token-mean clipped
// surrogate with the group advantage broadcast across each response's
// completion tokens, plus kl_coefficient times the token-mean k3 penalty to
// the frozen reference. Ratios compare the current policy to the sampling
// snapshot, so the first inner pass is exactly on-policy (ratio one).
inline GrpoStepStats grpo_step(PolicyParams& params, const PolicyParams& ref_params,
                               std::span<const RolloutGroup> groups, const GrpoConfig& cfg,
                               const PrefixLayout& pl) {
    cfg.validate();
    if (groups.empty()) throw std::invalid_argument("grpo_step: empty group batch");
    for (const auto& g : groups) g.validate();

    std::size_t total_tokens = 0;
    for (const auto& g : groups)
        for (const auto& r : g.responses) total_tokens += r.tokens.size();
    if (total_tokens == 0) throw std::invalid_argument("grpo_step: no completion tokens");
    const double inv_n = 1.0 / static_cast<double>(total_tokens);

    GrpoStepStats stats;
    for (int pass = 0; pass < cfg.inner_passes; ++pass) {
        PolicyGrad grad = zero_grad(params.dims);
        double surr_loss = 0.0, unclipped_loss = 0.0, kl_sum = 0.0;
        std::size_t clipped = 0;

        for (const auto& g : groups) {
            for (std::size_t i = 0; i < g.responses.size(); ++i) {
                const auto& resp = g.responses[i];
                const double adv = g.advantages[i];
                const auto cur =
                    sequence_logprob(params, pl, g.clip_tokens, resp.tokens, cfg.temperature);
                const auto ref =
                    sequence_logprob(ref_params, pl, g.clip_tokens, resp.tokens, cfg.temperature);
                std::vector<double> w(resp.tokens.size(), 0.0);
                for (std::size_t t = 0; t < resp.tokens.size(); ++t) {
                    const double ratio = std::exp(cur.per_token[t] - resp.sampling_logprobs[t]);
                    const double clamped =
                        std::clamp(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio);
                    const double surr = std::min(ratio * adv, clamped * adv);
                    const bool is_clipped = clamped * adv < ratio * adv;
                    if (is_clipped) ++clipped;
                    surr_loss -= surr * inv_n;
                    unclipped_loss -= ratio * adv * inv_n;

                    const double delta = ref.per_token[t] - cur.per_token[t];
                    kl_sum += (std::exp(delta) - delta - 1.0) * inv_n;

                    double wt = is_clipped ? 0.0 : adv * ratio;
                    wt += cfg.kl_coefficient * (std::exp(delta) - 1.0);
                    w[t] = wt * inv_n;
                }
                grad_accumulate(grad, weighted_nll_gradient(params, pl, g.clip_tokens, resp.tokens,
                                                            w, cfg.temperature));
            }
        }

        std::string bad;
        if (!grad_all_finite(grad, &bad))
            throw std::runtime_error("grpo_step: non-finite gradient in tensor '" + bad + "'");
        clip_gradient(grad, cfg.max_grad_norm);
        sgd_update(params, grad, cfg.lr);

        if (pass == 0) {
            stats.surrogate_loss = surr_loss;
            stats.unclipped_loss = unclipped_loss;
            stats.mean_kl = kl_sum;
            stats.loss = surr_loss + cfg.kl_coefficient * kl_sum;
            stats.clip_fraction = static_cast<double>(clipped) / static_cast<double>(total_tokens);
            stats.grad_norm = std::sqrt(grad_sq_norm(grad));
        }
    }
    return stats;
}

// ---------------------------------------------------------------------------
// GRPO loop
// ---------------------------------------------------------------------------

struct GrpoDataItem {
    std::string clip_id;
    std::vector<TokenId> clip_tokens;
    Label label = Label::Real;
};

inline std::vector<GrpoDataItem> grpo_items_from_samples(std::span<const TrainSample> samples) {
    std::vector<GrpoDataItem> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back({s.clip_id, s.clip_tokens, s.label});
    return out;
}

// Samples G responses per clip from the current policy, scores them with the
// composite reward, normalizes advantages within each group, and applies
// grpo_step batch by batch. The reference stays frozen at `init` all run.
inline PolicyParams train_grpo(PolicyParams init, bool init_reference_eligible,
                               std::span<const GrpoDataItem> data, const GrpoConfig& cfg,
                               const PrefixLayout& pl, const Vocabulary& vocab, const TagSpec& tags,
                               MetricsWriter* metrics = nullptr) {
    cfg.validate();
    if (!init_reference_eligible)
        throw std::invalid_argument(
            "train_grpo: init checkpoint is not designated reference-eligible");
    if (data.empty()) throw std::invalid_argument("train_grpo: empty dataset");

    PolicyParams params = init;
    const PolicyParams ref = std::move(init); // frozen reference snapshot

    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    int step = 0;
    long tick = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, "grpo/shuffle/" + std::to_string(epoch)));
        shuffle_rng.shuffle(order);
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            std::vector<RolloutGroup> groups;
            groups.reserve(end - begin);
            double mean_reward = 0, mean_acc = 0, mean_fmt = 0, mean_ft = 0;
            for (std::size_t k = begin; k < end; ++k) {
                const auto& item = data[order[k]];
                RolloutGroup group;
                group.clip_id = item.clip_id;
                group.clip_tokens = item.clip_tokens;
                group.label = item.label;
                group.epsilon = cfg.epsilon;
                for (int gi = 0; gi < cfg.group_size; ++gi) {
                    SampleConfig sc;
                    sc.temperature = cfg.temperature;
                    sc.max_length = cfg.max_completion;
                    sc.seed = derive_seed(cfg.seed, "rollout/" + std::to_string(epoch) + "/" +
                                                        std::to_string(step) + "/" + item.clip_id +
                                                        "/" + std::to_string(gi));
                    RolloutResponse resp;
                    auto sampled = sample_with_logprobs(params, pl, item.clip_tokens, sc);
                    resp.tokens = std::move(sampled.tokens);
                    resp.sampling_logprobs = std::move(sampled.logprobs);
                    resp.parsed = parse_output(vocab.detokenize(resp.tokens), tags);
                    resp.reward = total_reward(resp.parsed, item.label, cfg.weights);
                    group.rewards.push_back(resp.reward.total);
                    mean_reward += resp.reward.total;
                    mean_acc += resp.reward.r_acc;
                    mean_fmt += resp.reward.r_fmt;
                    mean_ft += resp.reward.r_ft;
                    group.responses.push_back(std::move(resp));
                }
                group.advantages = compute_advantages(group.rewards, cfg.epsilon);
                groups.push_back(std::move(group));
            }
            const double denom_resp = static_cast<double>(groups.size() * cfg.group_size);
            const auto stats = grpo_step(params, ref, groups, cfg, pl);
            tick += static_cast<long>(end - begin);
            if (metrics)
                metrics->write({{"phase", "grpo"},
                                {"step", step},
                                {"tick", tick},
                                {"epoch", epoch},
                                {"seed", cfg.seed},
                                {"loss", stats.loss},
                                {"mean_reward", mean_reward / denom_resp},
                                {"mean_r_acc", mean_acc / denom_resp},
                                {"mean_r_fmt", mean_fmt / denom_resp},
                                {"mean_r_ft", mean_ft / denom_resp},
                                {"mean_kl", stats.mean_kl},
                                {"clip_fraction", stats.clip_fraction}});
            ++step;
        }
    }
    if (metrics) metrics->flush();
    return params;
}

// ---------------------------------------------------------------------------
// evaluation of a policy on labeled clips
// ---------------------------------------------------------------------------

struct EvalPrediction {
    std::string clip_id;
    Answer answer = Answer::Invalid;
    std::string text; // raw decoded completion
};

struct EvalStats {
    double accuracy = 0.0;    // fraction in [0,1]
    double format_rate = 0.0; // fraction passing check_format
    double mean_r_ft = 0.0;
    std::vector<EvalPrediction> predictions;
};

inline EvalStats evaluate_policy(const PolicyParams& params, const PrefixLayout& pl,
                                 std::span<const AudioClip> clips, const Vocabulary& vocab,
                                 const TagSpec& tags, int max_completion = 48) {
    if (clips.empty()) throw std::invalid_argument("evaluate_policy: no clips");
    EvalStats stats;
    int correct = 0, formatted = 0;
    double ft_sum = 0.0;
    for (const auto& clip : clips) {
        SampleConfig sc;
        sc.greedy = true;
        sc.max_length = max_completion;
        sc.seed = 0;
        const auto tokens = sample(params, pl, clip.feature_tokens, sc);
        const std::string text = vocab.detokenize(tokens);
        const auto parsed = parse_output(text, tags);
        if (parsed.answer == to_answer(clip.label)) ++correct;
        if (check_format(parsed)) ++formatted;
        ft_sum += ft_reward(parsed);
        stats.predictions.push_back({clip.id, parsed.answer, text});
    }
    const double n = static_cast<double>(clips.size());
    stats.accuracy = correct / n;
    stats.format_rate = formatted / n;
    stats.mean_r_ft = ft_sum / n;
    return stats;
}

} // namespace ftgrpo
