#pragma once

// Tiny autoregressive sequence policy: token embeddings, one gated recurrent
// layer, softmax head. Conditions on clip feature tokens consumed as a prefix
// (<bos> clip-tokens <query>) before the completion. Exact log-probabilities,
// temperature sampling, and manual backpropagation of weighted token NLL.
//
// Parameters are stored as float32 (the checkpoint container format); all
// arithmetic runs in double. The core is templated on the parameter scalar so
// tests can evaluate the same forward pass on double-valued copies.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ftgrpo/rng.hpp"
#include "ftgrpo/vocab.hpp"

namespace ftgrpo {

struct PolicyDims {
    int vocab = 0;
    int embed = 32;
    int hidden = 64;

    void validate() const {
        if (vocab < 2) throw std::invalid_argument("PolicyDims: vocab must be >= 2");
        if (embed < 1 || hidden < 1)
            throw std::invalid_argument("PolicyDims: embed and hidden must be positive");
    }
};

namespace detail {

struct TensorShape {
    const char* name;
    int rows;
    int cols; // 1 for vectors
};

inline std::array<TensorShape, 12> tensor_shapes(const PolicyDims& d) {
    return {{{"emb", d.vocab, d.embed},
             {"wz", d.hidden, d.embed},
             {"wr", d.hidden, d.embed},
             {"wn", d.hidden, d.embed},
             {"uz", d.hidden, d.hidden},
             {"ur", d.hidden, d.hidden},
             {"un", d.hidden, d.hidden},
             {"bz", d.hidden, 1},
             {"br", d.hidden, 1},
             {"bn", d.hidden, 1},
             {"wo", d.vocab, d.hidden},
             {"bo", d.vocab, 1}}};
}

} // namespace detail

template <typename Scalar>
struct PolicyTensors {
    PolicyDims dims;
    std::vector<Scalar> emb, wz, wr, wn, uz, ur, un, bz, br, bn, wo, bo;

    std::array<std::pair<const char*, std::vector<Scalar>*>, 12> tensor_map() {
        return {{{"emb", &emb},
                 {"wz", &wz},
                 {"wr", &wr},
                 {"wn", &wn},
                 {"uz", &uz},
                 {"ur", &ur},
                 {"un", &un},
                 {"bz", &bz},
                 {"br", &br},
                 {"bn", &bn},
                 {"wo", &wo},
                 {"bo", &bo}}};
    }

    std::array<std::pair<const char*, const std::vector<Scalar>*>, 12> tensor_map() const {
        return {{{"emb", &emb},
                 {"wz", &wz},
                 {"wr", &wr},
                 {"wn", &wn},
                 {"uz", &uz},
                 {"ur", &ur},
                 {"un", &un},
                 {"bz", &bz},
                 {"br", &br},
                 {"bn", &bn},
                 {"wo", &wo},
                 {"bo", &bo}}};
    }

    std::vector<Scalar>* tensor(std::string_view name) {
        for (auto& [n, vec] : tensor_map())
            if (name == n) return vec;
        throw std::invalid_argument("unknown tensor '" + std::string(name) + "'");
    }

    const std::vector<Scalar>* tensor(std::string_view name) const {
        for (auto& [n, vec] : tensor_map())
            if (name == n) return vec;
        throw std::invalid_argument("unknown tensor '" + std::string(name) + "'");
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (auto& [name, vec] : tensor_map()) {
            (void)name;
            n += vec->size();
        }
        return n;
    }
};

using PolicyParams = PolicyTensors<float>;
using PolicyGrad = PolicyTensors<double>;

namespace detail {

template <typename Scalar>
void resize_tensors(PolicyTensors<Scalar>& p) {
    const auto shapes = tensor_shapes(p.dims);
    auto map = p.tensor_map();
    for (std::size_t i = 0; i < shapes.size(); ++i)
        map[i].second->assign(static_cast<std::size_t>(shapes[i].rows) *
                                  static_cast<std::size_t>(shapes[i].cols),
                              Scalar(0));
}

} // namespace detail

template <typename Scalar>
PolicyTensors<Scalar> make_zero_tensors(const PolicyDims& d) {
    d.validate();
    PolicyTensors<Scalar> p;
    p.dims = d;
    detail::resize_tensors(p);
    return p;
}

inline PolicyParams zero_params(const PolicyDims& d) { return make_zero_tensors<float>(d); }

inline PolicyGrad zero_grad(const PolicyDims& d) { return make_zero_tensors<double>(d); }

// Gaussian init for weights, zero biases. Values are float32-rounded so every
// later state of the parameters is exactly representable in the checkpoint.
inline PolicyParams init_params(const PolicyDims& d, Rng& rng, double weight_scale = 0.1) {
    PolicyParams p = zero_params(d);
    for (auto& [name, vec] : p.tensor_map()) {
        const std::string_view n = name;
        if (n == "bz" || n == "br" || n == "bn" || n == "bo") continue;
        for (auto& w : *vec) w = static_cast<float>(rng.normal(0.0, weight_scale));
    }
    return p;
}

struct SampleConfig {
    double temperature = 0.9;
    int max_length = 128;
    std::uint64_t seed = 0;
    bool greedy = false;

    void validate() const {
        if (temperature <= 0.0) throw std::invalid_argument("SampleConfig: temperature must be > 0");
        if (max_length < 4) throw std::invalid_argument("SampleConfig: max_length must be >= 4");
    }
};

struct LogprobResult {
    double total = 0.0;
    std::vector<double> per_token;
};

struct SampledSequence {
    std::vector<TokenId> tokens;    // completion, includes <eos> when emitted
    std::vector<double> logprobs;   // per completion token, at the sampling temperature
};

namespace detail {

template <typename PT>
struct ParamsView {
    PolicyDims dims;
    const PT *emb, *wz, *wr, *wn, *uz, *ur, *un, *bz, *br, *bn, *wo, *bo;
};

template <typename PT>
ParamsView<PT> make_view(const PolicyTensors<PT>& p) {
    return {p.dims,      p.emb.data(), p.wz.data(), p.wr.data(), p.wn.data(), p.uz.data(),
            p.ur.data(), p.un.data(),  p.bz.data(), p.br.data(), p.bn.data(), p.wo.data(),
            p.bo.data()};
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// out = W x + b, rows x cols row-major, double accumulation.
template <typename PT>
void affine(const PT* w, const PT* b, const double* x, int rows, int cols, double* out) {
    for (int i = 0; i < rows; ++i) {
        double acc = b ? static_cast<double>(b[i]) : 0.0;
        const PT* row = w + static_cast<std::size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) acc += static_cast<double>(row[j]) * x[j];
        out[i] = acc;
    }
}

// out += W x.
template <typename PT>
void affine_acc(const PT* w, const double* x, int rows, int cols, double* out) {
    for (int i = 0; i < rows; ++i) {
        double acc = 0.0;
        const PT* row = w + static_cast<std::size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) acc += static_cast<double>(row[j]) * x[j];
        out[i] += acc;
    }
}

// out += W^T y  (W rows x cols, y length rows, out length cols).
template <typename PT>
void add_transposed(const PT* w, const double* y, int rows, int cols, double* out) {
    for (int i = 0; i < rows; ++i) {
        const double yi = y[i];
        if (yi == 0.0) continue;
        const PT* row = w + static_cast<std::size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) out[j] += yi * static_cast<double>(row[j]);
    }
}

inline void check_tokens(std::span<const TokenId> seq, int vocab, const char* what) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (seq[i] < 0 || seq[i] >= vocab)
            throw std::invalid_argument(std::string(what) + ": token id " +
                                        std::to_string(seq[i]) + " at position " +
                                        std::to_string(i) + " outside vocabulary of size " +
                                        std::to_string(vocab));
    }
}

// One recurrent step, allocation-free. Gate activations are written out for
// backprop: z and r hold the post-sigmoid gates, hu the raw recurrent
// candidate contribution U_n h_prev, n the post-tanh candidate.
template <typename PT>
void gru_step(const ParamsView<PT>& p, const double* e, const double* h_prev, double* z, double* r,
              double* hu, double* n, double* h_out) {
    const int h = p.dims.hidden;
    const int d = p.dims.embed;
    affine(p.wz, p.bz, e, h, d, z);
    affine(p.wr, p.br, e, h, d, r);
    affine(p.wn, p.bn, e, h, d, n);
    affine_acc(p.uz, h_prev, h, h, z);
    affine_acc(p.ur, h_prev, h, h, r);
    affine(p.un, static_cast<const PT*>(nullptr), h_prev, h, h, hu);
    for (int i = 0; i < h; ++i) {
        z[i] = sigmoid(z[i]);
        r[i] = sigmoid(r[i]);
        n[i] = std::tanh(n[i] + r[i] * hu[i]);
        h_out[i] = (1.0 - z[i]) * n[i] + z[i] * h_prev[i];
    }
}

// log softmax(logits / temperature), max-shifted. Returns lse of the scaled
// logits; probs (optional) receives the full distribution.
inline double scaled_log_softmax_lse(const std::vector<double>& logits, double temperature,
                                     std::vector<double>* probs) {
    const int v = static_cast<int>(logits.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < v; ++i) mx = std::max(mx, logits[i] / temperature);
    double sum = 0.0;
    for (int i = 0; i < v; ++i) sum += std::exp(logits[i] / temperature - mx);
    const double lse = mx + std::log(sum);
    if (probs) {
        probs->resize(static_cast<std::size_t>(v));
        for (int i = 0; i < v; ++i) (*probs)[i] = std::exp(logits[i] / temperature - lse);
    }
    return lse;
}

// Recorded activations for one scored sequence (inputs s[0..L-2]).
struct Tape {
    int steps = 0;
    std::vector<double> h;  // (steps + 1) x hidden, row 0 is the initial state
    std::vector<double> z, r, hu, n; // steps x hidden
    std::vector<double> probs;       // one V-row per prediction position
    std::vector<int> prob_row;       // step index -> row in probs, or -1
};

} // namespace detail

// Control-marker ids for building the model input prefix.
struct PrefixLayout {
    TokenId bos = 0;
    TokenId query = 0;
    TokenId eos = 0;

    static PrefixLayout from_vocab(const Vocabulary& v) { return {v.bos(), v.query(), v.eos()}; }
};

namespace detail {

inline std::vector<TokenId> build_sequence(const PrefixLayout& pl, std::span<const TokenId> clip,
                                           std::span<const TokenId> target) {
    std::vector<TokenId> seq;
    seq.reserve(clip.size() + target.size() + 2);
    seq.push_back(pl.bos);
    seq.insert(seq.end(), clip.begin(), clip.end());
    seq.push_back(pl.query);
    seq.insert(seq.end(), target.begin(), target.end());
    return seq;
}

// Forward over the full sequence; predictions at input positions
// prefix_len-1 .. L-2. Returns per-target-token logprobs.
template <typename PT>
LogprobResult forward_scored(const ParamsView<PT>& p, const std::vector<TokenId>& seq,
                             std::size_t prefix_len, double temperature, Tape* tape) {
    const int hdim = p.dims.hidden;
    const std::size_t steps = seq.size() - 1; // inputs s[0..L-2]
    const std::size_t n_target = seq.size() - prefix_len;

    std::vector<double> h_prev(hdim, 0.0), h_cur(hdim), e(p.dims.embed);
    std::vector<double> z(hdim), r(hdim), hu(hdim), n(hdim);
    std::vector<double> logits(p.dims.vocab), probs;

    if (tape) {
        tape->steps = static_cast<int>(steps);
        tape->h.assign((steps + 1) * hdim, 0.0);
        tape->z.assign(steps * hdim, 0.0);
        tape->r.assign(steps * hdim, 0.0);
        tape->hu.assign(steps * hdim, 0.0);
        tape->n.assign(steps * hdim, 0.0);
        tape->probs.clear();
        tape->prob_row.assign(steps, -1);
    }

    LogprobResult res;
    res.per_token.reserve(n_target);

    for (std::size_t k = 0; k < steps; ++k) {
        const TokenId x = seq[k];
        const PT* erow = p.emb + static_cast<std::size_t>(x) * p.dims.embed;
        for (int j = 0; j < p.dims.embed; ++j) e[j] = static_cast<double>(erow[j]);
        gru_step(p, e.data(), h_prev.data(), z.data(), r.data(), hu.data(), n.data(), h_cur.data());
        if (tape) {
            std::copy(z.begin(), z.end(), tape->z.begin() + k * hdim);
            std::copy(r.begin(), r.end(), tape->r.begin() + k * hdim);
            std::copy(hu.begin(), hu.end(), tape->hu.begin() + k * hdim);
            std::copy(n.begin(), n.end(), tape->n.begin() + k * hdim);
            std::copy(h_cur.begin(), h_cur.end(), tape->h.begin() + (k + 1) * hdim);
        }
        if (k + 1 >= prefix_len) {
            affine(p.wo, p.bo, h_cur.data(), p.dims.vocab, hdim, logits.data());
            const double lse = scaled_log_softmax_lse(logits, temperature, tape ? &probs : nullptr);
            const double lp = logits[seq[k + 1]] / temperature - lse;
            res.per_token.push_back(lp);
            res.total += lp;
            if (tape) {
                tape->prob_row[k] = static_cast<int>(tape->probs.size() / p.dims.vocab);
                tape->probs.insert(tape->probs.end(), probs.begin(), probs.end());
            }
        }
        h_prev.swap(h_cur);
    }
    return res;
}

// Backward pass of sum_j weights[j] * NLL_j through the tape.
template <typename PT>
void backward_weighted_nll(const ParamsView<PT>& p, const std::vector<TokenId>& seq,
                           std::size_t prefix_len, std::span<const double> weights,
                           double temperature, const Tape& tape, PolicyGrad& grad) {
    const int hdim = p.dims.hidden;
    const int d = p.dims.embed;
    const int v = p.dims.vocab;
    const std::size_t steps = seq.size() - 1;

    std::vector<double> dh(hdim, 0.0), dh_prev(hdim), dlogits(v), e(d);
    std::vector<double> dz(hdim), dr(hdim), dn(hdim), dan(hdim), dhu(hdim), daz(hdim), dar(hdim);

    for (std::size_t kk = steps; kk-- > 0;) {
        const std::size_t k = kk;
        const double* h_prev = tape.h.data() + k * hdim;
        const double* h_cur = tape.h.data() + (k + 1) * hdim;
        const double* z = tape.z.data() + k * hdim;
        const double* r = tape.r.data() + k * hdim;
        const double* hu = tape.hu.data() + k * hdim;
        const double* n = tape.n.data() + k * hdim;

        // Head gradient at prediction positions.
        if (k + 1 >= prefix_len) {
            const std::size_t j = k + 1 - prefix_len; // target index
            const double w = weights[j];
            if (w != 0.0) {
                const double* probs = tape.probs.data() +
                                      static_cast<std::size_t>(tape.prob_row[k]) * v;
                const double inv_t = 1.0 / temperature;
                for (int i = 0; i < v; ++i) dlogits[i] = w * inv_t * probs[i];
                dlogits[seq[k + 1]] -= w * inv_t;
                for (int i = 0; i < v; ++i) {
                    const double g = dlogits[i];
                    if (g == 0.0) continue;
                    grad.bo[i] += g;
                    double* wo_row = grad.wo.data() + static_cast<std::size_t>(i) * hdim;
                    for (int q = 0; q < hdim; ++q) wo_row[q] += g * h_cur[q];
                }
                add_transposed(p.wo, dlogits.data(), v, hdim, dh.data());
            }
        }

        // Recurrent backstep.
        const TokenId x = seq[k];
        const PT* erow = p.emb + static_cast<std::size_t>(x) * d;
        for (int j = 0; j < d; ++j) e[j] = static_cast<double>(erow[j]);

        for (int i = 0; i < hdim; ++i) {
            dz[i] = dh[i] * (h_prev[i] - n[i]);
            dn[i] = dh[i] * (1.0 - z[i]);
            dh_prev[i] = dh[i] * z[i];
            dan[i] = dn[i] * (1.0 - n[i] * n[i]);
            dhu[i] = dan[i] * r[i];
            dr[i] = dan[i] * hu[i];
            daz[i] = dz[i] * z[i] * (1.0 - z[i]);
            dar[i] = dr[i] * r[i] * (1.0 - r[i]);
        }

        double* demb = grad.emb.data() + static_cast<std::size_t>(x) * d;
        for (int i = 0; i < hdim; ++i) {
            const double gz = daz[i], gr = dar[i], gn = dan[i], gu = dhu[i];
            double* wz_row = grad.wz.data() + static_cast<std::size_t>(i) * d;
            double* wr_row = grad.wr.data() + static_cast<std::size_t>(i) * d;
            double* wn_row = grad.wn.data() + static_cast<std::size_t>(i) * d;
            for (int j = 0; j < d; ++j) {
                wz_row[j] += gz * e[j];
                wr_row[j] += gr * e[j];
                wn_row[j] += gn * e[j];
            }
            grad.bz[i] += gz;
            grad.br[i] += gr;
            grad.bn[i] += gn;
            double* uz_row = grad.uz.data() + static_cast<std::size_t>(i) * hdim;
            double* ur_row = grad.ur.data() + static_cast<std::size_t>(i) * hdim;
            double* un_row = grad.un.data() + static_cast<std::size_t>(i) * hdim;
            for (int j = 0; j < hdim; ++j) {
                uz_row[j] += gz * h_prev[j];
                ur_row[j] += gr * h_prev[j];
                un_row[j] += gu * h_prev[j];
            }
        }
        add_transposed(p.uz, daz.data(), hdim, hdim, dh_prev.data());
        add_transposed(p.ur, dar.data(), hdim, hdim, dh_prev.data());
        add_transposed(p.un, dhu.data(), hdim, hdim, dh_prev.data());
        add_transposed(p.wz, daz.data(), hdim, d, demb);
        add_transposed(p.wr, dar.data(), hdim, d, demb);
        add_transposed(p.wn, dan.data(), hdim, d, demb);

        dh.swap(dh_prev);
        std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
    }
}

} // namespace detail

// Exact per-token log-probabilities of `target` given the clip prefix.
template <typename PT>
LogprobResult sequence_logprob_t(const PolicyTensors<PT>& params, const PrefixLayout& pl,
                                 std::span<const TokenId> clip, std::span<const TokenId> target,
                                 double temperature = 1.0) {
    if (target.empty()) throw std::invalid_argument("sequence_logprob: target must be non-empty");
    const auto view = detail::make_view(params);
    detail::check_tokens(clip, params.dims.vocab, "clip");
    detail::check_tokens(target, params.dims.vocab, "target");
    const auto seq = detail::build_sequence(pl, clip, target);
    detail::check_tokens(std::span<const TokenId>(seq), params.dims.vocab, "sequence");
    return detail::forward_scored(view, seq, clip.size() + 2, temperature, nullptr);
}

inline LogprobResult sequence_logprob(const PolicyParams& params, const PrefixLayout& pl,
                                      std::span<const TokenId> clip,
                                      std::span<const TokenId> target, double temperature = 1.0) {
    return sequence_logprob_t(params, pl, clip, target, temperature);
}

// Gradient of -sum_j weights[j] * log p(target[j] | prefix, target[<j]) with
// respect to every parameter. Mirrors the parameter structure.
template <typename PT>
PolicyGrad weighted_nll_gradient_t(const PolicyTensors<PT>& params, const PrefixLayout& pl,
                                   std::span<const TokenId> clip, std::span<const TokenId> target,
                                   std::span<const double> weights, double temperature = 1.0) {
    if (target.empty()) throw std::invalid_argument("weighted_nll_gradient: target must be non-empty");
    if (weights.size() != target.size())
        throw std::invalid_argument("weighted_nll_gradient: weights size " +
                                    std::to_string(weights.size()) + " != target size " +
                                    std::to_string(target.size()));
    const auto view = detail::make_view(params);
    detail::check_tokens(clip, params.dims.vocab, "clip");
    detail::check_tokens(target, params.dims.vocab, "target");
    const auto seq = detail::build_sequence(pl, clip, target);
    detail::Tape tape;
    detail::forward_scored(view, seq, clip.size() + 2, temperature, &tape);
    PolicyGrad grad = zero_grad(params.dims);
    detail::backward_weighted_nll(view, seq, clip.size() + 2, weights, temperature, tape, grad);
    return grad;
}

inline PolicyGrad weighted_nll_gradient(const PolicyParams& params, const PrefixLayout& pl,
                                        std::span<const TokenId> clip,
                                        std::span<const TokenId> target,
                                        std::span<const double> weights, double temperature = 1.0) {
    return weighted_nll_gradient_t(params, pl, clip, target, weights, temperature);
}

// Accumulate: dst += src (same dims).
inline void grad_accumulate(PolicyGrad& dst, const PolicyGrad& src) {
    auto d = dst.tensor_map();
    auto s = src.tensor_map();
    for (std::size_t i = 0; i < d.size(); ++i) {
        auto& dv = *d[i].second;
        const auto& sv = *s[i].second;
        for (std::size_t j = 0; j < dv.size(); ++j) dv[j] += sv[j];
    }
}

inline void grad_scale(PolicyGrad& g, double f) {
    for (auto& [name, vec] : g.tensor_map()) {
        (void)name;
        for (auto& x : *vec) x *= f;
    }
}

inline double grad_sq_norm(const PolicyGrad& g) {
    double s = 0.0;
    for (const auto& [name, vec] : g.tensor_map()) {
        (void)name;
        for (double x : *vec) s += x * x;
    }
    return s;
}

inline bool grad_all_finite(const PolicyGrad& g, std::string* bad_tensor = nullptr) {
    for (const auto& [name, vec] : g.tensor_map()) {
        for (double x : *vec) {
            if (!std::isfinite(x)) {
                if (bad_tensor) *bad_tensor = name;
                return false;
            }
        }
    }
    return true;
}

// Plain SGD step; parameters stay float32-rounded.
inline void sgd_update(PolicyParams& params, const PolicyGrad& grad, double lr) {
    if (params.dims.vocab != grad.dims.vocab || params.dims.embed != grad.dims.embed ||
        params.dims.hidden != grad.dims.hidden)
        throw std::invalid_argument("sgd_update: parameter/gradient shape mismatch");
    auto pm = params.tensor_map();
    auto gm = grad.tensor_map();
    for (std::size_t i = 0; i < pm.size(); ++i) {
        auto& pv = *pm[i].second;
        const auto& gv = *gm[i].second;
        for (std::size_t j = 0; j < pv.size(); ++j)
            pv[j] = static_cast<float>(static_cast<double>(pv[j]) - lr * gv[j]);
    }
}

// Autoregressive sampling. Logits are divided by the temperature; generation
// stops at <eos> or after max_length tokens. Greedy mode takes the argmax
// (lowest id on ties), the temperature's zero-limit behavior.
inline SampledSequence sample_with_logprobs(const PolicyParams& params, const PrefixLayout& pl,
                                            std::span<const TokenId> clip,
                                            const SampleConfig& cfg) {
    cfg.validate();
    detail::check_tokens(clip, params.dims.vocab, "clip");
    const auto p = detail::make_view(params);
    const int hdim = params.dims.hidden;
    const int d = params.dims.embed;
    const int v = params.dims.vocab;

    std::vector<double> h_prev(hdim, 0.0), h_cur(hdim), e(d);
    std::vector<double> z(hdim), r(hdim), hu(hdim), n(hdim);
    std::vector<double> logits(v), probs;

    auto consume = [&](TokenId x) {
        const float* erow = p.emb + static_cast<std::size_t>(x) * d;
        for (int j = 0; j < d; ++j) e[j] = static_cast<double>(erow[j]);
        detail::gru_step(p, e.data(), h_prev.data(), z.data(), r.data(), hu.data(), n.data(),
                         h_cur.data());
        h_prev.swap(h_cur);
    };

    consume(pl.bos);
    for (TokenId t : clip) consume(t);
    consume(pl.query);

    Rng rng(cfg.seed);
    SampledSequence out;
    for (int step = 0; step < cfg.max_length; ++step) {
        detail::affine(p.wo, p.bo, h_prev.data(), v, hdim, logits.data());
        TokenId pick = 0;
        if (cfg.greedy) {
            for (int i = 1; i < v; ++i)
                if (logits[i] > logits[pick]) pick = i;
            const double lse = detail::scaled_log_softmax_lse(logits, cfg.temperature, nullptr);
            out.logprobs.push_back(logits[pick] / cfg.temperature - lse);
        } else {
            const double lse = detail::scaled_log_softmax_lse(logits, cfg.temperature, &probs);
            const double u = rng.uniform01();
            double acc = 0.0;
            pick = v - 1;
            for (int i = 0; i < v; ++i) {
                acc += probs[i];
                if (u < acc) {
                    pick = i;
                    break;
                }
            }
            // Same expression as forward scoring, so recomputed logprobs of a
            // sampled sequence match these values bit-for-bit.
            out.logprobs.push_back(logits[pick] / cfg.temperature - lse);
        }
        out.tokens.push_back(pick);
        if (pick == pl.eos) break;
        consume(pick);
    }
    return out;
}

inline std::vector<TokenId> sample(const PolicyParams& params, const PrefixLayout& pl,
                                   std::span<const TokenId> clip, const SampleConfig& cfg) {
    return sample_with_logprobs(params, pl, clip, cfg).tokens;
}

} // namespace ftgrpo
