#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "disent/corpus.hpp"
#include "disent/encoder.hpp"
#include "disent/pair_model.hpp"

namespace disent {

struct SessionModelParams {
    Vocab vocab;
    EncoderParams enc;
};

struct SessionInstance {
    std::vector<Message> context;
    Message candidate;
    int label = 0;
};

struct SessionDataset {
    std::vector<SessionInstance> instances;
};

// sigmoid(encode_session(T) . encode_message(m)).
double session_prob(const SessionModelParams& params, const std::vector<Message>& context,
                    const Message& m);

// Positives: for each speaker occurrence after their first in a conversation,
// (full preceding context, that message). Negatives: a whole conversation as
// context paired with a message from another conversation.
SessionDataset build_pseudo_sessions(const Corpus& corpus, double negatives_per_positive,
                                     std::uint64_t seed);

TrainReport train_session_init(SessionModelParams& params, const SessionDataset& dataset,
                               int epochs, double lr, std::uint64_t seed, int batch_size = 64);

void write_session_dataset(const SessionDataset& dataset, const std::string& path);
SessionDataset load_session_dataset(const std::string& path, const Corpus& corpus);

enum class DecodeMode { argmax, sample };

struct EpisodeStep {
    int position = 0;
    int a_new = 0;          // 0: open new session, 1: join an existing one
    double logp_new = 0.0;  // log-prob of the sampled first-layer action
    int a_t = 0;            // 1-based session id, meaningful when a_new == 1
    double logp_t = 0.0;
    double reward = 0.0;
};

struct Episode {
    std::string conv_id;
    std::vector<EpisodeStep> steps;
};

// Algorithm: first message opens session 1. For each later message, the
// new-session probability is computed over the entire preceding context;
// below 0.5 (argmax mode) a new session opens, otherwise the message joins
// the best-scoring existing session. In sample mode both decisions are
// drawn and the trace is recorded in `episode`.
Partition disentangle_e2e(const SessionModelParams& params, const Conversation& conv,
                          DecodeMode mode, std::mt19937_64* rng = nullptr,
                          Episode* episode = nullptr);

}  // namespace disent
