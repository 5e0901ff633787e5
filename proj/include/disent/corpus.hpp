#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace disent {

struct Message {
    std::string id;
    std::string speaker;
    std::vector<std::string> tokens;
    int position = 0;
};

// Session assignment for one conversation. Session ids are 1-based and
// contiguous, renumbered by order of first appearance.
struct Partition {
    std::vector<int> assignment;

    int session_count() const;
    // Positions grouped by session, sessions ordered by id, positions ascending.
    std::vector<std::vector<int>> sessions() const;

    static Partition from_labels(const std::vector<int>& raw);
    void validate() const;

    bool operator==(const Partition&) const = default;
};

struct Conversation {
    std::string conv_id;
    std::vector<Message> messages;
    std::optional<Partition> gold;
};

struct Corpus {
    std::vector<Conversation> conversations;
};

// Lowercase, split on whitespace, strip surrounding punctuation.
std::vector<std::string> tokenize(const std::string& text);

Corpus load_corpus(const std::string& path);
void write_corpus(const Corpus& corpus, const std::string& path);

std::vector<std::pair<std::string, Partition>> load_partitions(const std::string& path);
void write_partitions(const std::vector<std::pair<std::string, Partition>>& parts,
                      const std::string& path);

struct SynthConfig {
    int n_conversations = 100;
    int session_count_min = 2;
    int session_count_max = 4;
    int messages_per_session_min = 3;
    int messages_per_session_max = 6;
    int vocab_size = 120;
    int topic_words_per_session = 8;
    int speakers_per_session = 2;
    double speaker_violation_rate = 0.06;
    std::uint64_t seed = 1;
};

Corpus generate_synthetic(const SynthConfig& config);

// (#speakers appearing in >=2 gold sessions of one conversation) /
// (#speaker-conversation pairs). Requires gold on every conversation.
double speaker_multisession_rate(const Corpus& corpus);

}  // namespace disent
