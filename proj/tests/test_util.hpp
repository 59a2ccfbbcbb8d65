#pragma once

// Shared test helpers: an independent reference evaluator for the recurrent
// policy (naive loops, direct softmax materialization) and finite-difference
// gradients. Kept apart from the library code on purpose.

#include <cmath>
#include <span>
#include <vector>

#include "ftgrpo/policy.hpp"

namespace testutil {

using ftgrpo::PolicyDims;
using ftgrpo::PolicyGrad;
using ftgrpo::PolicyParams;
using ftgrpo::PolicyTensors;
using ftgrpo::PrefixLayout;
using ftgrpo::TokenId;

inline PolicyTensors<double> to_double(const PolicyParams& p) {
    auto d = ftgrpo::make_zero_tensors<double>(p.dims);
    auto src = p.tensor_map();
    auto dst = d.tensor_map();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const auto& s = *src[i].second;
        auto& t = *dst[i].second;
        for (std::size_t j = 0; j < s.size(); ++j) t[j] = static_cast<double>(s[j]);
    }
    return d;
}

// Naive re-implementation of the recurrent scorer. Materializes the full
// softmax at every step, no shared code with the library beyond the types.
template <typename Scalar>
std::vector<double> reference_logprobs(const PolicyTensors<Scalar>& p, const PrefixLayout& pl,
                                       std::span<const TokenId> clip,
                                       std::span<const TokenId> target, double temperature = 1.0) {
    const int V = p.dims.vocab, D = p.dims.embed, H = p.dims.hidden;
    std::vector<TokenId> seq;
    seq.push_back(pl.bos);
    for (auto t : clip) seq.push_back(t);
    seq.push_back(pl.query);
    for (auto t : target) seq.push_back(t);
    const std::size_t prefix = clip.size() + 2;

    auto at = [](const std::vector<Scalar>& m, int i, int j, int cols) {
        return static_cast<double>(m[static_cast<std::size_t>(i) * cols + j]);
    };

    std::vector<double> h(H, 0.0);
    std::vector<double> logprobs;
    for (std::size_t k = 0; k + 1 < seq.size(); ++k) {
        const TokenId x = seq[k];
        std::vector<double> z(H), r(H), n(H), hn(H);
        for (int i = 0; i < H; ++i) {
            double az = at(p.bz, i, 0, 1), ar = at(p.br, i, 0, 1), an = at(p.bn, i, 0, 1);
            for (int j = 0; j < D; ++j) {
                const double e = at(p.emb, x, j, D);
                az += at(p.wz, i, j, D) * e;
                ar += at(p.wr, i, j, D) * e;
                an += at(p.wn, i, j, D) * e;
            }
            double uzh = 0, urh = 0, unh = 0;
            for (int j = 0; j < H; ++j) {
                uzh += at(p.uz, i, j, H) * h[j];
                urh += at(p.ur, i, j, H) * h[j];
                unh += at(p.un, i, j, H) * h[j];
            }
            z[i] = 1.0 / (1.0 + std::exp(-(az + uzh)));
            r[i] = 1.0 / (1.0 + std::exp(-(ar + urh)));
            n[i] = std::tanh(an + r[i] * unh);
            hn[i] = (1.0 - z[i]) * n[i] + z[i] * h[i];
        }
        h = hn;
        if (k + 1 >= prefix) {
            std::vector<double> logits(V);
            for (int v = 0; v < V; ++v) {
                double acc = at(p.bo, v, 0, 1);
                for (int j = 0; j < H; ++j) acc += at(p.wo, v, j, H) * h[j];
                logits[v] = acc / temperature;
            }
            double mx = logits[0];
            for (int v = 1; v < V; ++v) mx = std::max(mx, logits[v]);
            long double denom = 0.0L;
            for (int v = 0; v < V; ++v) denom += std::exp(static_cast<long double>(logits[v] - mx));
            const double lp = logits[seq[k + 1]] - mx -
                              static_cast<double>(std::log(denom));
            logprobs.push_back(lp);
        }
    }
    return logprobs;
}

// Weighted NLL loss through the library's double-precision forward.
inline double weighted_nll_loss(const PolicyTensors<double>& p, const PrefixLayout& pl,
                                std::span<const TokenId> clip, std::span<const TokenId> target,
                                std::span<const double> weights, double temperature = 1.0) {
    const auto lp = ftgrpo::sequence_logprob_t(p, pl, clip, target, temperature);
    double loss = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) loss -= weights[i] * lp.per_token[i];
    return loss;
}

// Central finite differences of the weighted NLL with respect to every
// parameter, evaluated on a double copy of the float32 parameters.
inline PolicyGrad finite_difference_gradient(const PolicyParams& params, const PrefixLayout& pl,
                                             std::span<const TokenId> clip,
                                             std::span<const TokenId> target,
                                             std::span<const double> weights, double step = 1e-4,
                                             double temperature = 1.0) {
    auto base = to_double(params);
    PolicyGrad fd = ftgrpo::zero_grad(params.dims);
    auto tensors = base.tensor_map();
    auto out = fd.tensor_map();
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        auto& vec = *tensors[t].second;
        auto& g = *out[t].second;
        for (std::size_t i = 0; i < vec.size(); ++i) {
            const double orig = vec[i];
            vec[i] = orig + step;
            const double up = weighted_nll_loss(base, pl, clip, target, weights, temperature);
            vec[i] = orig - step;
            const double dn = weighted_nll_loss(base, pl, clip, target, weights, temperature);
            vec[i] = orig;
            g[i] = (up - dn) / (2.0 * step);
        }
    }
    return fd;
}

// Relative error with an absolute floor for near-zero coordinates.
inline double rel_err(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-6});
    return std::abs(a - b) / denom;
}

} // namespace testutil
