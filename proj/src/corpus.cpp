#include "disent/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace disent {

using ordered_json = nlohmann::ordered_json;

int Partition::session_count() const {
    int k = 0;
    for (int s : assignment) k = std::max(k, s);
    return k;
}

std::vector<std::vector<int>> Partition::sessions() const {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(session_count()));
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        out[static_cast<std::size_t>(assignment[i] - 1)].push_back(static_cast<int>(i));
    }
    return out;
}

Partition Partition::from_labels(const std::vector<int>& raw) {
    Partition p;
    p.assignment.reserve(raw.size());
    std::unordered_map<int, int> remap;
    for (int label : raw) {
        auto it = remap.find(label);
        if (it == remap.end()) {
            it = remap.emplace(label, static_cast<int>(remap.size()) + 1).first;
        }
        p.assignment.push_back(it->second);
    }
    return p;
}

void Partition::validate() const {
    int seen = 0;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        int s = assignment[i];
        if (s < 1 || s > seen + 1) {
            throw std::runtime_error("partition: session ids not contiguous by first appearance at position " +
                                     std::to_string(i));
        }
        seen = std::max(seen, s);
    }
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < n && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) {
            std::size_t lo = i, hi = j;
            while (lo < hi && std::ispunct(static_cast<unsigned char>(text[lo]))) ++lo;
            while (hi > lo && std::ispunct(static_cast<unsigned char>(text[hi - 1]))) --hi;
            if (hi > lo) {
                std::string tok;
                tok.reserve(hi - lo);
                for (std::size_t k = lo; k < hi; ++k) {
                    tok.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[k]))));
                }
                tokens.push_back(std::move(tok));
            }
        }
        i = j;
    }
    return tokens;
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus file: " + path);
    Corpus corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error("parse error at line " + std::to_string(line_no) + ": " + e.what());
        }
        Conversation conv;
        conv.conv_id = j.at("conv_id").get<std::string>();
        std::vector<int> session_labels;
        int with_session = 0;
        int pos = 0;
        for (const auto& jm : j.at("messages")) {
            Message m;
            m.id = jm.at("id").get<std::string>();
            m.speaker = jm.at("speaker").get<std::string>();
            m.tokens = tokenize(jm.at("text").get<std::string>());
            m.position = pos++;
            if (jm.contains("session") && !jm["session"].is_null()) {
                session_labels.push_back(jm["session"].get<int>());
                ++with_session;
            }
            conv.messages.push_back(std::move(m));
        }
        if (with_session > 0) {
            if (with_session != static_cast<int>(conv.messages.size())) {
                throw std::runtime_error("conversation " + conv.conv_id + " (line " + std::to_string(line_no) +
                                         "): partial gold session labels");
            }
            conv.gold = Partition::from_labels(session_labels);
        }
        corpus.conversations.push_back(std::move(conv));
    }
    return corpus;
}

void write_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    for (const auto& conv : corpus.conversations) {
        ordered_json j;
        j["conv_id"] = conv.conv_id;
        j["messages"] = ordered_json::array();
        for (const auto& m : conv.messages) {
            ordered_json jm;
            jm["id"] = m.id;
            jm["speaker"] = m.speaker;
            std::string text;
            for (std::size_t t = 0; t < m.tokens.size(); ++t) {
                if (t) text.push_back(' ');
                text += m.tokens[t];
            }
            jm["text"] = text;
            if (conv.gold) {
                jm["session"] = conv.gold->assignment[static_cast<std::size_t>(m.position)];
            }
            j["messages"].push_back(std::move(jm));
        }
        out << j.dump() << '\n';
    }
}

std::vector<std::pair<std::string, Partition>> load_partitions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open partition file: " + path);
    std::vector<std::pair<std::string, Partition>> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error("parse error at line " + std::to_string(line_no) + ": " + e.what());
        }
        Partition p = Partition::from_labels(j.at("assignment").get<std::vector<int>>());
        out.emplace_back(j.at("conv_id").get<std::string>(), std::move(p));
    }
    return out;
}

void write_partitions(const std::vector<std::pair<std::string, Partition>>& parts,
                      const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    for (const auto& [conv_id, p] : parts) {
        ordered_json j;
        j["conv_id"] = conv_id;
        j["assignment"] = p.assignment;
        out << j.dump() << '\n';
    }
}

namespace {

std::string word_name(int idx) {
    std::ostringstream os;
    os << 'w' << idx;
    return os.str();
}

}  // namespace

Corpus generate_synthetic(const SynthConfig& cfg) {
    if (cfg.session_count_min < 1 || cfg.session_count_max < cfg.session_count_min) {
        throw std::invalid_argument("synth: invalid session count range");
    }
    if (cfg.messages_per_session_min < 1 || cfg.messages_per_session_max < cfg.messages_per_session_min) {
        throw std::invalid_argument("synth: invalid messages-per-session range");
    }
    if (cfg.speaker_violation_rate < 0.0 || cfg.speaker_violation_rate > 1.0) {
        throw std::invalid_argument("synth: violation rate must be in [0,1]");
    }
    const int n_background = std::max(10, cfg.vocab_size / 5);
    const int n_topic_pool = cfg.vocab_size - n_background;
    if (n_topic_pool < cfg.session_count_max * cfg.topic_words_per_session) {
        throw std::invalid_argument("synth: vocab too small for disjoint topic word sets");
    }

    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<int> k_dist(cfg.session_count_min, cfg.session_count_max);
    std::uniform_int_distribution<int> n_msg_dist(cfg.messages_per_session_min, cfg.messages_per_session_max);
    std::uniform_int_distribution<int> len_dist(4, 12);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> bg_dist(0, n_background - 1);

    std::vector<int> topic_pool(static_cast<std::size_t>(n_topic_pool));
    for (int i = 0; i < n_topic_pool; ++i) topic_pool[static_cast<std::size_t>(i)] = n_background + i;

    Corpus corpus;
    for (int c = 0; c < cfg.n_conversations; ++c) {
        const int k = k_dist(rng);
        std::shuffle(topic_pool.begin(), topic_pool.end(), rng);
        std::vector<std::vector<int>> topics(static_cast<std::size_t>(k));
        for (int s = 0; s < k; ++s) {
            topics[static_cast<std::size_t>(s)].assign(
                topic_pool.begin() + s * cfg.topic_words_per_session,
                topic_pool.begin() + (s + 1) * cfg.topic_words_per_session);
        }

        // One token sequence per message, grouped by session of origin.
        struct Draft {
            std::string speaker;
            std::vector<std::string> tokens;
        };
        std::vector<std::vector<Draft>> session_msgs(static_cast<std::size_t>(k));
        std::vector<std::pair<std::string, int>> speakers;  // (name, home session)
        int speaker_counter = 0;

        auto make_tokens = [&](int session) {
            const auto& tw = topics[static_cast<std::size_t>(session)];
            std::uniform_int_distribution<int> tw_dist(0, static_cast<int>(tw.size()) - 1);
            const int len = len_dist(rng);
            std::vector<std::string> toks;
            toks.reserve(static_cast<std::size_t>(len));
            for (int t = 0; t < len; ++t) {
                if (unit(rng) < 0.8) {
                    toks.push_back(word_name(tw[static_cast<std::size_t>(tw_dist(rng))]));
                } else {
                    toks.push_back(word_name(bg_dist(rng)));
                }
            }
            return toks;
        };

        for (int s = 0; s < k; ++s) {
            std::vector<std::string> local;
            for (int p = 0; p < cfg.speakers_per_session; ++p) {
                std::string name = "c" + std::to_string(c) + "_p" + std::to_string(speaker_counter++);
                speakers.emplace_back(name, s);
                local.push_back(name);
            }
            const int n_msgs = n_msg_dist(rng);
            std::uniform_int_distribution<int> sp_dist(0, static_cast<int>(local.size()) - 1);
            for (int m = 0; m < n_msgs; ++m) {
                session_msgs[static_cast<std::size_t>(s)].push_back(
                    {local[static_cast<std::size_t>(sp_dist(rng))], make_tokens(s)});
            }
        }

        // Speaker violations: a home speaker drops one message into another session.
        if (k >= 2) {
            for (const auto& [name, home] : speakers) {
                if (unit(rng) < cfg.speaker_violation_rate) {
                    std::uniform_int_distribution<int> other_dist(0, k - 2);
                    int other = other_dist(rng);
                    if (other >= home) ++other;
                    auto& target = session_msgs[static_cast<std::size_t>(other)];
                    std::uniform_int_distribution<std::size_t> at(0, target.size());
                    target.insert(target.begin() + static_cast<std::ptrdiff_t>(at(rng)),
                                  {name, make_tokens(other)});
                }
            }
        }

        // Interleave by random merge preserving intra-session order.
        Conversation conv;
        conv.conv_id = "synth-" + std::to_string(c);
        std::vector<std::size_t> cursor(static_cast<std::size_t>(k), 0);
        std::vector<int> labels;
        std::size_t remaining = 0;
        for (const auto& sm : session_msgs) remaining += sm.size();
        while (remaining > 0) {
            std::uniform_int_distribution<std::size_t> pick(0, remaining - 1);
            std::size_t r = pick(rng);
            int chosen = -1;
            for (int s = 0; s < k; ++s) {
                const std::size_t left = session_msgs[static_cast<std::size_t>(s)].size() -
                                         cursor[static_cast<std::size_t>(s)];
                if (r < left) {
                    chosen = s;
                    break;
                }
                r -= left;
            }
            auto& draft = session_msgs[static_cast<std::size_t>(chosen)][cursor[static_cast<std::size_t>(chosen)]++];
            Message msg;
            msg.position = static_cast<int>(conv.messages.size());
            msg.id = conv.conv_id + "-m" + std::to_string(msg.position);
            msg.speaker = draft.speaker;
            msg.tokens = std::move(draft.tokens);
            conv.messages.push_back(std::move(msg));
            labels.push_back(chosen + 1);
            --remaining;
        }
        conv.gold = Partition::from_labels(labels);
        corpus.conversations.push_back(std::move(conv));
    }
    return corpus;
}

double speaker_multisession_rate(const Corpus& corpus) {
    std::size_t multi = 0, total = 0;
    for (const auto& conv : corpus.conversations) {
        if (!conv.gold) throw std::runtime_error("speaker_multisession_rate: gold partition missing");
        std::map<std::string, std::set<int>> sessions_of;
        for (const auto& m : conv.messages) {
            sessions_of[m.speaker].insert(conv.gold->assignment[static_cast<std::size_t>(m.position)]);
        }
        for (const auto& [speaker, sess] : sessions_of) {
            ++total;
            if (sess.size() >= 2) ++multi;
        }
    }
    if (total == 0) return 0.0;
    return static_cast<double>(multi) / static_cast<double>(total);
}

}  // namespace disent
