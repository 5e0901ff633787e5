#pragma once

#include <optional>

#include "disent/corpus.hpp"
#include "disent/pair_model.hpp"

namespace disent {

struct GreedyConfig {
    double threshold = 0.5;
    std::optional<int> window;  // max lookback in messages; unset = unlimited
};

// Attach each message to the session of its best-scoring predecessor when
// that score clears the threshold, otherwise open a new session. Ties go to
// the earliest predecessor.
Partition greedy_disentangle(const PairModelParams& params, const Conversation& conv,
                             const GreedyConfig& config);

// Same rule on a precomputed probability matrix; probs[j][i] = p(m_j, m_i), j < i.
Partition greedy_disentangle_matrix(const std::vector<std::vector<double>>& probs,
                                    const GreedyConfig& config);

}  // namespace disent
