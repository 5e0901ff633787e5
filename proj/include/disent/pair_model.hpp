#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "disent/corpus.hpp"
#include "disent/encoder.hpp"

namespace disent {

struct PairModelParams {
    Vocab vocab;
    EncoderParams enc;
};

enum class PairSource { ret, gen, harvested };

std::string to_string(PairSource src);
PairSource pair_source_from_string(const std::string& s);

struct PairInstance {
    Message a;
    Message b;
    int label = 0;
    PairSource src = PairSource::ret;
};

struct PairDataset {
    std::vector<PairInstance> instances;
};

// sigmoid(v_a . v_b); exactly symmetric in its arguments.
double pair_prob(const PairModelParams& params, const Message& a, const Message& b);

// Positives: all unordered same-speaker pairs within each conversation.
// Negatives: uniformly sampled cross-conversation message pairs.
PairDataset build_pseudo_pairs_ret(const Corpus& corpus, double negatives_per_positive,
                                   std::uint64_t seed);

// Maps a message to a direct on-topic reply; empty result means generation failed.
using ReplyGenerator = std::function<std::optional<Message>(const Message&)>;

// Reply generator backed by the synthetic corpus' topic model: the reply
// resamples words from the source message.
ReplyGenerator make_topic_echo_generator(std::uint64_t seed);

// Adds (message, generated reply, 1) pairs tagged gen. Generator failures
// are skipped, never fatal.
void augment_generated(PairDataset& dataset, const Corpus& corpus, const ReplyGenerator& gen,
                       int n_messages, std::uint64_t seed);

struct TrainReport {
    std::vector<double> epoch_loss;
    double final_accuracy = 0.0;
};

TrainReport train_pair(PairModelParams& params, const PairDataset& dataset, int epochs,
                       double lr, std::uint64_t seed, int batch_size = 64);

struct PairEval {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Positive-class F1 at threshold 0.5; 0 when precision + recall is 0.
PairEval eval_pair_f1(const PairModelParams& params, const std::vector<PairInstance>& pairs);

void write_pair_dataset(const PairDataset& dataset, const std::string& path);
PairDataset load_pair_dataset(const std::string& path, const Corpus& corpus);

}  // namespace disent
