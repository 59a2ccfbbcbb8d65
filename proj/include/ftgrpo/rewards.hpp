#pragma once

// Composite rule-based reward: r = r_acc + alpha * r_fmt + beta * r_ft.
// r_acc rewards a correct verdict, r_fmt a well-formed output schema, r_ft
// complete frequency- and time-domain reasoning sections.

#include <stdexcept>

#include "ftgrpo/schema.hpp"

namespace ftgrpo {

struct RewardWeights {
    double alpha = 0.1;
    double beta = 0.1;

    void validate() const {
        if (alpha < 0.0 || beta < 0.0)
            throw std::invalid_argument("RewardWeights: alpha and beta must be nonnegative");
    }
};

struct RewardBreakdown {
    double r_acc = 0.0; // {0, 1}
    double r_fmt = 0.0; // {0, 1}
    double r_ft = 0.0;  // {0, 0.5, 1.0}
    double total = 0.0;
};

inline double accuracy_reward(Answer pred, Label truth) {
    return pred == to_answer(truth) ? 1.0 : 0.0;
}

// (1/2) * [g(FD) + g(TD)]; independent of answer correctness and of any text
// outside the two sections.
inline double ft_reward(const StructuredOutput& out) {
    const double fd = check_section_complete(out, Domain::FD) ? 1.0 : 0.0;
    const double td = check_section_complete(out, Domain::TD) ? 1.0 : 0.0;
    return 0.5 * (fd + td);
}

inline RewardBreakdown total_reward(const StructuredOutput& out, Label truth,
                                    const RewardWeights& w = {}) {
    w.validate();
    RewardBreakdown b;
    b.r_acc = accuracy_reward(out.answer, truth);
    b.r_fmt = check_format(out) ? 1.0 : 0.0;
    b.r_ft = ft_reward(out);
    b.total = b.r_acc + w.alpha * b.r_fmt + w.beta * b.r_ft;
    return b;
}

} // namespace ftgrpo
