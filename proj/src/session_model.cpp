#include "disent/session_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace disent {

double session_prob(const SessionModelParams& params, const std::vector<Message>& context,
                    const Message& m) {
    if (context.empty()) throw std::invalid_argument("session_prob: empty context");
    std::vector<Vec> vecs;
    vecs.reserve(context.size());
    MessageCache mc;
    for (const auto& cm : context) {
        encode_message(params.enc, params.vocab.lookup_all(cm.tokens), mc);
        vecs.push_back(mc.out);
    }
    SessionCache sc;
    encode_session(params.enc, vecs, sc);
    encode_message(params.enc, params.vocab.lookup_all(m.tokens), mc);
    return sigmoid(dot(sc.out, mc.out));
}

SessionDataset build_pseudo_sessions(const Corpus& corpus, double negatives_per_positive,
                                     std::uint64_t seed) {
    SessionDataset ds;
    for (const auto& conv : corpus.conversations) {
        std::unordered_map<std::string, int> seen;
        for (const auto& m : conv.messages) {
            const int count = seen[m.speaker]++;
            if (count >= 1 && m.position > 0) {
                SessionInstance inst;
                inst.context.assign(conv.messages.begin(),
                                    conv.messages.begin() + m.position);
                inst.candidate = m;
                inst.label = 1;
                ds.instances.push_back(std::move(inst));
            }
        }
    }
    const std::size_t n_pos = ds.instances.size();
    const std::size_t n_neg =
        static_cast<std::size_t>(negatives_per_positive * static_cast<double>(n_pos) + 0.5);
    if (n_neg > 0 && corpus.conversations.size() < 2) {
        throw std::runtime_error("build_pseudo_sessions: need >=2 conversations for negatives");
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> conv_dist(0, corpus.conversations.size() - 1);
    for (std::size_t n = 0; n < n_neg; ++n) {
        std::size_t ci = conv_dist(rng), cj = conv_dist(rng);
        while (cj == ci) cj = conv_dist(rng);
        const auto& t_conv = corpus.conversations[ci];
        const auto& m_conv = corpus.conversations[cj];
        if (t_conv.messages.empty() || m_conv.messages.empty()) continue;
        std::uniform_int_distribution<std::size_t> mdist(0, m_conv.messages.size() - 1);
        SessionInstance inst;
        inst.context = t_conv.messages;
        inst.candidate = m_conv.messages[mdist(rng)];
        inst.label = 0;
        ds.instances.push_back(std::move(inst));
    }
    return ds;
}

TrainReport train_session_init(SessionModelParams& params, const SessionDataset& dataset,
                               int epochs, double lr, std::uint64_t seed, int batch_size) {
    bool has_pos = false, has_neg = false;
    for (const auto& inst : dataset.instances) (inst.label ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) throw std::runtime_error("train_session_init: dataset must contain both labels");

    struct Resolved {
        std::vector<std::vector<int>> context_ids;
        std::vector<int> candidate_ids;
        int label;
    };
    std::vector<Resolved> resolved;
    resolved.reserve(dataset.instances.size());
    for (const auto& inst : dataset.instances) {
        Resolved r;
        for (const auto& m : inst.context) r.context_ids.push_back(params.vocab.lookup_all(m.tokens));
        r.candidate_ids = params.vocab.lookup_all(inst.candidate.tokens);
        r.label = inst.label;
        resolved.push_back(std::move(r));
    }

    auto forward_backward = [&](const Resolved& r, Grad* g, double scale) {
        std::vector<Vec> vecs;
        std::vector<MessageCache> mcs(r.context_ids.size());
        for (std::size_t j = 0; j < r.context_ids.size(); ++j) {
            encode_message(params.enc, r.context_ids[j], mcs[j]);
            vecs.push_back(mcs[j].out);
        }
        SessionCache sc;
        encode_session(params.enc, vecs, sc);
        MessageCache cand;
        encode_message(params.enc, r.candidate_ids, cand);
        const double logit = dot(sc.out, cand.out);
        const double loss = bce_loss(logit, r.label);
        if (g) {
            const double dz = bce_dlogit(logit, r.label) * scale;
            Vec dsession(cand.out), dcand(sc.out);
            for (auto& x : dsession) x *= dz;
            for (auto& x : dcand) x *= dz;
            encode_message_backward(params.enc, cand, dcand.data(), *g);
            std::vector<Vec> dvecs(vecs.size(), Vec(static_cast<std::size_t>(params.enc.dim), 0.0));
            encode_session_backward(params.enc, vecs, sc, dsession, *g, dvecs);
            for (std::size_t j = 0; j < mcs.size(); ++j) {
                encode_message_backward(params.enc, mcs[j], dvecs[j].data(), *g);
            }
        }
        return std::pair<double, double>(loss, logit);
    };

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(resolved.size());
    std::iota(order.begin(), order.end(), 0);
    Adam opt(lr);
    Grad g(params.enc);
    TrainReport report;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t done = 0;
        while (done < order.size()) {
            const std::size_t end = std::min(done + static_cast<std::size_t>(batch_size), order.size());
            g.zero();
            const double scale = 1.0 / static_cast<double>(end - done);
            for (std::size_t k = done; k < end; ++k) {
                epoch_loss += forward_backward(resolved[order[k]], &g, scale).first;
            }
            if (lr > 0.0) opt.step(params.enc.data, g.data);
            done = end;
        }
        report.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    }

    std::size_t correct = 0;
    for (const auto& r : resolved) {
        const auto [loss, logit] = forward_backward(r, nullptr, 0.0);
        if ((sigmoid(logit) >= 0.5 ? 1 : 0) == r.label) ++correct;
    }
    report.final_accuracy = static_cast<double>(correct) / static_cast<double>(resolved.size());
    return report;
}

namespace {

nlohmann::ordered_json session_message_ref(const Message& m) {
    if (m.position >= 0) return m.id;
    nlohmann::ordered_json j;
    j["id"] = m.id;
    j["speaker"] = m.speaker;
    std::string text;
    for (std::size_t t = 0; t < m.tokens.size(); ++t) {
        if (t) text.push_back(' ');
        text += m.tokens[t];
    }
    j["text"] = text;
    return j;
}

Message session_resolve_ref(const nlohmann::json& j,
                            const std::unordered_map<std::string, const Message*>& index) {
    if (j.is_string()) {
        auto it = index.find(j.get<std::string>());
        if (it == index.end()) {
            throw std::runtime_error("session dataset: unknown message id " + j.get<std::string>());
        }
        return *it->second;
    }
    Message m;
    m.id = j.at("id").get<std::string>();
    m.speaker = j.at("speaker").get<std::string>();
    m.tokens = tokenize(j.at("text").get<std::string>());
    m.position = -1;
    return m;
}

}  // namespace

void write_session_dataset(const SessionDataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    for (const auto& inst : dataset.instances) {
        nlohmann::ordered_json j;
        j["context"] = nlohmann::ordered_json::array();
        for (const auto& m : inst.context) j["context"].push_back(session_message_ref(m));
        j["candidate"] = session_message_ref(inst.candidate);
        j["label"] = inst.label;
        out << j.dump() << '\n';
    }
}

SessionDataset load_session_dataset(const std::string& path, const Corpus& corpus) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open session dataset: " + path);
    std::unordered_map<std::string, const Message*> index;
    for (const auto& conv : corpus.conversations) {
        for (const auto& m : conv.messages) index[m.id] = &m;
    }
    SessionDataset ds;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        SessionInstance inst;
        for (const auto& ref : j.at("context")) inst.context.push_back(session_resolve_ref(ref, index));
        inst.candidate = session_resolve_ref(j.at("candidate"), index);
        inst.label = j.at("label").get<int>();
        ds.instances.push_back(std::move(inst));
    }
    return ds;
}

Partition disentangle_e2e(const SessionModelParams& params, const Conversation& conv,
                          DecodeMode mode, std::mt19937_64* rng, Episode* episode) {
    if (conv.messages.empty()) throw std::invalid_argument("disentangle_e2e: empty conversation");
    if (mode == DecodeMode::sample && rng == nullptr) {
        throw std::invalid_argument("disentangle_e2e: sample mode needs an rng");
    }
    if (episode) {
        episode->conv_id = conv.conv_id;
        episode->steps.clear();
    }

    const std::size_t n = conv.messages.size();
    std::vector<Vec> msg_vecs(n);
    {
        MessageCache mc;
        for (std::size_t i = 0; i < n; ++i) {
            encode_message(params.enc, params.vocab.lookup_all(conv.messages[i].tokens), mc);
            msg_vecs[i] = mc.out;
        }
    }

    std::vector<int> labels(n, 0);
    std::vector<std::vector<int>> sessions;  // message positions per session
    sessions.push_back({0});
    labels[0] = 1;

    SessionCache sc;
    std::vector<Vec> ctx_vecs;
    for (std::size_t i = 1; i < n; ++i) {
        ctx_vecs.assign(msg_vecs.begin(), msg_vecs.begin() + static_cast<std::ptrdiff_t>(i));
        encode_session(params.enc, ctx_vecs, sc);
        const double p_ctx = sigmoid(dot(sc.out, msg_vecs[i]));

        bool join_existing;
        double logp_new = 0.0;
        if (mode == DecodeMode::argmax) {
            join_existing = p_ctx >= 0.5;
        } else {
            std::bernoulli_distribution draw(p_ctx);
            join_existing = draw(*rng);
            logp_new = std::log(std::max(join_existing ? p_ctx : 1.0 - p_ctx, 1e-300));
        }

        EpisodeStep step;
        step.position = static_cast<int>(i);
        step.a_new = join_existing ? 1 : 0;
        step.logp_new = logp_new;

        if (!join_existing) {
            sessions.push_back({static_cast<int>(i)});
            labels[i] = static_cast<int>(sessions.size());
        } else {
            std::vector<double> scores(sessions.size());
            std::vector<Vec> sess_vecs;
            for (std::size_t k = 0; k < sessions.size(); ++k) {
                sess_vecs.clear();
                for (int pos : sessions[k]) sess_vecs.push_back(msg_vecs[static_cast<std::size_t>(pos)]);
                encode_session(params.enc, sess_vecs, sc);
                scores[k] = sigmoid(dot(sc.out, msg_vecs[i]));
            }
            std::size_t chosen;
            if (mode == DecodeMode::argmax) {
                chosen = 0;
                for (std::size_t k = 1; k < scores.size(); ++k) {
                    if (scores[k] > scores[chosen]) chosen = k;  // ties: lowest index wins
                }
            } else {
                const double total = std::accumulate(scores.begin(), scores.end(), 0.0);
                std::uniform_real_distribution<double> unit(0.0, 1.0);
                double r = unit(*rng) * total;
                chosen = scores.size() - 1;
                for (std::size_t k = 0; k < scores.size(); ++k) {
                    r -= scores[k];
                    if (r <= 0.0) {
                        chosen = k;
                        break;
                    }
                }
                step.logp_t = std::log(std::max(scores[chosen] / total, 1e-300));
            }
            step.a_t = static_cast<int>(chosen) + 1;
            sessions[chosen].push_back(static_cast<int>(i));
            labels[i] = static_cast<int>(chosen) + 1;
        }
        if (episode) episode->steps.push_back(step);
    }

    return Partition::from_labels(labels);
}

}  // namespace disent
