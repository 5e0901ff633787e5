#include "disent/two_step.hpp"

#include <stdexcept>

namespace disent {

Partition greedy_disentangle_matrix(const std::vector<std::vector<double>>& probs,
                                    const GreedyConfig& config) {
    const std::size_t n = probs.size();
    if (n == 0) throw std::invalid_argument("greedy_disentangle: empty conversation");
    if (config.threshold <= 0.0 || config.threshold >= 1.0) {
        throw std::invalid_argument("greedy_disentangle: threshold must be in (0,1)");
    }
    std::vector<int> labels(n, 0);
    int next_session = 1;
    labels[0] = next_session++;
    for (std::size_t i = 1; i < n; ++i) {
        std::size_t lo = 0;
        if (config.window) {
            const std::size_t w = static_cast<std::size_t>(*config.window);
            lo = i > w ? i - w : 0;
        }
        std::size_t best = n;
        double best_p = -1.0;
        for (std::size_t j = lo; j < i; ++j) {
            if (probs[j][i] > best_p) {  // ties: earliest predecessor wins
                best_p = probs[j][i];
                best = j;
            }
        }
        if (best != n && best_p > config.threshold) {
            labels[i] = labels[best];
        } else {
            labels[i] = next_session++;
        }
    }
    return Partition::from_labels(labels);
}

Partition greedy_disentangle(const PairModelParams& params, const Conversation& conv,
                             const GreedyConfig& config) {
    const std::size_t n = conv.messages.size();
    if (n == 0) throw std::invalid_argument("greedy_disentangle: empty conversation");

    std::vector<Vec> vecs(n);
    MessageCache mc;
    for (std::size_t i = 0; i < n; ++i) {
        encode_message(params.enc, params.vocab.lookup_all(conv.messages[i].tokens), mc);
        vecs[i] = mc.out;
    }
    std::vector<std::vector<double>> probs(n, std::vector<double>(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = j + 1; i < n; ++i) {
            probs[j][i] = sigmoid(dot(vecs[j], vecs[i]));
        }
    }
    return greedy_disentangle_matrix(probs, config);
}

}  // namespace disent
