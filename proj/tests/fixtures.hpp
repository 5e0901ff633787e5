#pragma once

#include <string>
#include <vector>

#include "disent/corpus.hpp"

namespace disent::testfix {

inline Message msg(const std::string& id, const std::string& speaker,
                   std::vector<std::string> tokens, int position) {
    Message m;
    m.id = id;
    m.speaker = speaker;
    m.tokens = std::move(tokens);
    m.position = position;
    return m;
}

inline Conversation conv(const std::string& id,
                         std::vector<std::pair<std::string, std::vector<std::string>>> specs) {
    Conversation c;
    c.conv_id = id;
    int pos = 0;
    for (auto& [speaker, tokens] : specs) {
        c.messages.push_back(msg(id + "-m" + std::to_string(pos), speaker, tokens, pos));
        ++pos;
    }
    return c;
}

}  // namespace disent::testfix
