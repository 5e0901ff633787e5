#include "disent/respsel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "disent/metrics.hpp"

namespace disent {

std::string to_string(PartitionSource src) {
    switch (src) {
        case PartitionSource::none: return "none";
        case PartitionSource::predicted: return "predicted";
        case PartitionSource::gold: return "gold";
    }
    return "none";
}

PartitionSource partition_source_from_string(const std::string& s) {
    if (s == "none") return PartitionSource::none;
    if (s == "predicted") return PartitionSource::predicted;
    if (s == "gold") return PartitionSource::gold;
    throw std::runtime_error("unknown partition source: " + s);
}

namespace {

std::vector<std::vector<Message>> sessions_for(const RespSelInstance& inst, PartitionSource source) {
    const auto& msgs = inst.conversation.messages;
    if (source == PartitionSource::none) return {msgs};
    const Partition* p = nullptr;
    if (source == PartitionSource::gold) {
        if (!inst.conversation.gold) throw std::runtime_error("respsel: gold partition missing");
        p = &*inst.conversation.gold;
    } else {
        if (!inst.predicted) throw std::runtime_error("respsel: predicted partition missing");
        p = &*inst.predicted;
    }
    std::vector<std::vector<Message>> out;
    for (const auto& positions : p->sessions()) {
        std::vector<Message> sess;
        for (int pos : positions) sess.push_back(msgs[static_cast<std::size_t>(pos)]);
        out.push_back(std::move(sess));
    }
    return out;
}

struct ScoreCaches {
    std::vector<std::vector<MessageCache>> msg;  // per session
    std::vector<SessionCache> sess;
    std::vector<std::vector<Vec>> vecs;
    MessageCache cand;
    std::vector<double> s;  // per-session dot scores
    std::vector<double> w;  // softmax weights
    Vec v_c;
    double score = 0.0;
};

void score_forward(const RespSelParams& params, const std::vector<std::vector<std::vector<int>>>& session_ids,
                   const std::vector<int>& cand_ids, ScoreCaches& c) {
    const std::size_t kk = session_ids.size();
    if (kk == 0) throw std::invalid_argument("score_response: no sessions");
    const int d = params.enc.dim;
    c.msg.assign(kk, {});
    c.sess.assign(kk, {});
    c.vecs.assign(kk, {});
    c.s.assign(kk, 0.0);
    c.w.assign(kk, 0.0);
    encode_message(params.enc, cand_ids, c.cand);
    for (std::size_t k = 0; k < kk; ++k) {
        if (session_ids[k].empty()) throw std::invalid_argument("score_response: empty session");
        c.msg[k].resize(session_ids[k].size());
        for (std::size_t j = 0; j < session_ids[k].size(); ++j) {
            encode_message(params.enc, session_ids[k][j], c.msg[k][j]);
            c.vecs[k].push_back(c.msg[k][j].out);
        }
        encode_session(params.enc, c.vecs[k], c.sess[k]);
        c.s[k] = dot(c.sess[k].out, c.cand.out);
    }
    const double smax = *std::max_element(c.s.begin(), c.s.end());
    double denom = 0.0;
    for (std::size_t k = 0; k < kk; ++k) {
        c.w[k] = std::exp(c.s[k] - smax);
        denom += c.w[k];
    }
    for (std::size_t k = 0; k < kk; ++k) c.w[k] /= denom;
    c.v_c.assign(static_cast<std::size_t>(d), 0.0);
    for (std::size_t k = 0; k < kk; ++k) {
        for (int i = 0; i < d; ++i) c.v_c[static_cast<std::size_t>(i)] += c.w[k] * c.sess[k].out[static_cast<std::size_t>(i)];
    }
    c.score = dot(c.v_c, c.cand.out);
}

void score_backward(const RespSelParams& params, const ScoreCaches& c, double dscore, Grad& g) {
    const int d = params.enc.dim;
    const std::size_t kk = c.sess.size();
    Vec dv_c(c.cand.out);
    for (auto& x : dv_c) x *= dscore;
    Vec dcand(c.v_c);
    for (auto& x : dcand) x *= dscore;

    std::vector<Vec> dsess(kk, Vec(static_cast<std::size_t>(d), 0.0));
    std::vector<double> dw(kk, 0.0);
    for (std::size_t k = 0; k < kk; ++k) {
        dw[k] = dot(dv_c, c.sess[k].out);
        for (int i = 0; i < d; ++i) dsess[k][static_cast<std::size_t>(i)] += c.w[k] * dv_c[static_cast<std::size_t>(i)];
    }
    double mix = 0.0;
    for (std::size_t k = 0; k < kk; ++k) mix += c.w[k] * dw[k];
    for (std::size_t k = 0; k < kk; ++k) {
        const double ds = c.w[k] * (dw[k] - mix);
        for (int i = 0; i < d; ++i) {
            dsess[k][static_cast<std::size_t>(i)] += ds * c.cand.out[static_cast<std::size_t>(i)];
            dcand[static_cast<std::size_t>(i)] += ds * c.sess[k].out[static_cast<std::size_t>(i)];
        }
    }
    for (std::size_t k = 0; k < kk; ++k) {
        std::vector<Vec> dvecs(c.vecs[k].size(), Vec(static_cast<std::size_t>(d), 0.0));
        encode_session_backward(params.enc, c.vecs[k], c.sess[k], dsess[k], g, dvecs);
        for (std::size_t j = 0; j < c.msg[k].size(); ++j) {
            encode_message_backward(params.enc, c.msg[k][j], dvecs[j].data(), g);
        }
    }
    encode_message_backward(params.enc, c.cand, dcand.data(), g);
}

std::vector<std::vector<std::vector<int>>> resolve_sessions(const RespSelParams& params,
                                                            const std::vector<std::vector<Message>>& sessions) {
    std::vector<std::vector<std::vector<int>>> ids(sessions.size());
    for (std::size_t k = 0; k < sessions.size(); ++k) {
        for (const auto& m : sessions[k]) ids[k].push_back(params.vocab.lookup_all(m.tokens));
    }
    return ids;
}

}  // namespace

double score_response(const RespSelParams& params,
                      const std::vector<std::vector<Message>>& sessions, const Message& candidate) {
    ScoreCaches c;
    score_forward(params, resolve_sessions(params, sessions),
                  params.vocab.lookup_all(candidate.tokens), c);
    return c.score;
}

double score_flat(const RespSelParams& params, const std::vector<Message>& conversation,
                  const Message& candidate) {
    if (conversation.empty()) throw std::invalid_argument("score_flat: empty conversation");
    return score_response(params, {conversation}, candidate);
}

std::vector<RespSelInstance> build_respsel_dataset(const Corpus& corpus, int n_candidates,
                                                   std::uint64_t seed) {
    if (n_candidates < 2) throw std::invalid_argument("build_respsel_dataset: need >=2 candidates");
    std::vector<const Message*> pool;
    for (const auto& conv : corpus.conversations) {
        for (const auto& m : conv.messages) pool.push_back(&m);
    }
    if (corpus.conversations.size() < 2 || pool.size() < static_cast<std::size_t>(n_candidates)) {
        throw std::runtime_error("build_respsel_dataset: corpus too small");
    }

    std::mt19937_64 rng(seed);
    std::vector<RespSelInstance> out;
    for (const auto& conv : corpus.conversations) {
        if (conv.messages.size() < 2) continue;

        // Pick the gold response: last message of a random gold session, or
        // the conversation's last message when no gold partition exists.
        int held_out;
        if (conv.gold) {
            const auto sessions = conv.gold->sessions();
            std::uniform_int_distribution<std::size_t> pick(0, sessions.size() - 1);
            held_out = sessions[pick(rng)].back();
        } else {
            held_out = static_cast<int>(conv.messages.size()) - 1;
        }

        RespSelInstance inst;
        inst.conversation.conv_id = conv.conv_id;
        std::vector<int> labels;
        for (const auto& m : conv.messages) {
            if (m.position == held_out) continue;
            Message copy = m;
            copy.position = static_cast<int>(inst.conversation.messages.size());
            inst.conversation.messages.push_back(std::move(copy));
            if (conv.gold) labels.push_back(conv.gold->assignment[static_cast<std::size_t>(m.position)]);
        }
        if (conv.gold) inst.conversation.gold = Partition::from_labels(labels);

        std::vector<Message> cands;
        cands.push_back(conv.messages[static_cast<std::size_t>(held_out)]);
        std::uniform_int_distribution<std::size_t> mpick(0, pool.size() - 1);
        while (static_cast<int>(cands.size()) < n_candidates) {
            const Message* m = pool[mpick(rng)];
            if (m->id.rfind(conv.conv_id + "-", 0) == 0 || m->id == cands.front().id) continue;
            bool same_conv = false;
            for (const auto& cm : conv.messages) {
                if (cm.id == m->id) {
                    same_conv = true;
                    break;
                }
            }
            if (same_conv) continue;
            cands.push_back(*m);
        }
        std::shuffle(cands.begin(), cands.end(), rng);
        for (std::size_t i = 0; i < cands.size(); ++i) {
            if (cands[i].id == conv.messages[static_cast<std::size_t>(held_out)].id) {
                inst.gold_index = static_cast<int>(i);
                break;
            }
        }
        inst.candidates = std::move(cands);
        out.push_back(std::move(inst));
    }
    if (out.empty()) throw std::runtime_error("build_respsel_dataset: no usable conversations");
    return out;
}

TrainReport train_respsel(RespSelParams& params, const std::vector<RespSelInstance>& instances,
                          PartitionSource source, int epochs, double lr, std::uint64_t seed) {
    if (instances.empty()) throw std::invalid_argument("train_respsel: no instances");

    struct Resolved {
        std::vector<std::vector<std::vector<int>>> session_ids;
        std::vector<std::vector<int>> candidate_ids;
        int gold_index;
    };
    std::vector<Resolved> resolved;
    for (const auto& inst : instances) {
        Resolved r;
        r.session_ids = resolve_sessions(params, sessions_for(inst, source));
        for (const auto& cand : inst.candidates) r.candidate_ids.push_back(params.vocab.lookup_all(cand.tokens));
        r.gold_index = inst.gold_index;
        resolved.push_back(std::move(r));
    }

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(resolved.size());
    std::iota(order.begin(), order.end(), 0);
    Adam opt(lr);
    Grad g(params.enc);
    TrainReport report;
    ScoreCaches c;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t count = 0;
        for (std::size_t idx : order) {
            const auto& r = resolved[idx];
            g.zero();
            const double scale = 1.0 / static_cast<double>(r.candidate_ids.size());
            for (std::size_t ci = 0; ci < r.candidate_ids.size(); ++ci) {
                const int label = static_cast<int>(ci) == r.gold_index ? 1 : 0;
                score_forward(params, r.session_ids, r.candidate_ids[ci], c);
                epoch_loss += bce_loss(c.score, label);
                ++count;
                score_backward(params, c, bce_dlogit(c.score, label) * scale, g);
            }
            if (lr > 0.0) opt.step(params.enc.data, g.data);
        }
        report.epoch_loss.push_back(epoch_loss / static_cast<double>(count));
    }

    std::size_t top1 = 0;
    for (const auto& r : resolved) {
        int best = 0;
        double best_score = -1e300;
        for (std::size_t ci = 0; ci < r.candidate_ids.size(); ++ci) {
            score_forward(params, r.session_ids, r.candidate_ids[ci], c);
            if (c.score > best_score) {
                best_score = c.score;
                best = static_cast<int>(ci);
            }
        }
        if (best == r.gold_index) ++top1;
    }
    report.final_accuracy = static_cast<double>(top1) / static_cast<double>(resolved.size());
    return report;
}

RespSelEval eval_respsel(const RespSelParams& params, const std::vector<RespSelInstance>& instances,
                         PartitionSource source) {
    std::vector<int> ranks;
    ScoreCaches c;
    for (const auto& inst : instances) {
        const auto session_ids = resolve_sessions(params, sessions_for(inst, source));
        std::vector<double> scores(inst.candidates.size());
        for (std::size_t ci = 0; ci < inst.candidates.size(); ++ci) {
            score_forward(params, session_ids, params.vocab.lookup_all(inst.candidates[ci].tokens), c);
            scores[ci] = c.score;
        }
        // Rank of gold; ties broken by candidate order.
        int rank = 0;
        const double gold_score = scores[static_cast<std::size_t>(inst.gold_index)];
        for (std::size_t ci = 0; ci < scores.size(); ++ci) {
            if (static_cast<int>(ci) == inst.gold_index) continue;
            if (scores[ci] > gold_score ||
                (scores[ci] == gold_score && static_cast<int>(ci) < inst.gold_index)) {
                ++rank;
            }
        }
        ranks.push_back(rank);
    }
    RespSelEval eval;
    eval.hits1 = hits_at_k(ranks, 1);
    eval.hits2 = hits_at_k(ranks, 2);
    eval.hits5 = hits_at_k(ranks, 5);
    eval.mrr = mrr(ranks);
    return eval;
}

void write_respsel_dataset(const std::vector<RespSelInstance>& instances, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    for (const auto& inst : instances) {
        nlohmann::ordered_json j;
        j["conv_id"] = inst.conversation.conv_id;
        if (inst.conversation.gold) j["partition"] = inst.conversation.gold->assignment;
        auto cands = nlohmann::ordered_json::array();
        for (const auto& cand : inst.candidates) {
            std::string text;
            for (std::size_t t = 0; t < cand.tokens.size(); ++t) {
                if (t) text.push_back(' ');
                text += cand.tokens[t];
            }
            cands.push_back(text);
        }
        j["candidates"] = std::move(cands);
        j["gold_index"] = inst.gold_index;
        out << j.dump() << '\n';
    }
}

}  // namespace disent
