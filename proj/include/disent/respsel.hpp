#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "disent/corpus.hpp"
#include "disent/encoder.hpp"
#include "disent/pair_model.hpp"

namespace disent {

struct RespSelParams {
    Vocab vocab;
    EncoderParams enc;
};

struct RespSelInstance {
    Conversation conversation;          // context; gold partition inside when known
    std::optional<Partition> predicted; // filled by a disentangler when used
    std::vector<Message> candidates;
    int gold_index = 0;
};

enum class PartitionSource { none, predicted, gold };

std::string to_string(PartitionSource src);
PartitionSource partition_source_from_string(const std::string& s);

// s^k = v_Tk . v_m; w = softmax(s); v_C = sum w^k v_Tk; score = v_C . v_m.
double score_response(const RespSelParams& params,
                      const std::vector<std::vector<Message>>& sessions, const Message& candidate);

// The whole conversation encoded as a single session.
double score_flat(const RespSelParams& params, const std::vector<Message>& conversation,
                  const Message& candidate);

// One instance per usable conversation: the gold response is the held-out
// final message of a randomly chosen gold session; distractors come from
// other conversations.
std::vector<RespSelInstance> build_respsel_dataset(const Corpus& corpus, int n_candidates,
                                                   std::uint64_t seed);

TrainReport train_respsel(RespSelParams& params, const std::vector<RespSelInstance>& instances,
                          PartitionSource source, int epochs, double lr, std::uint64_t seed);

struct RespSelEval {
    double hits1 = 0.0;
    double hits2 = 0.0;
    double hits5 = 0.0;
    double mrr = 0.0;
};

RespSelEval eval_respsel(const RespSelParams& params, const std::vector<RespSelInstance>& instances,
                         PartitionSource source);

void write_respsel_dataset(const std::vector<RespSelInstance>& instances, const std::string& path);

}  // namespace disent
