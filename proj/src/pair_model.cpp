#include "disent/pair_model.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace disent {

std::string to_string(PairSource src) {
    switch (src) {
        case PairSource::ret: return "ret";
        case PairSource::gen: return "gen";
        case PairSource::harvested: return "harvested";
    }
    return "ret";
}

PairSource pair_source_from_string(const std::string& s) {
    if (s == "ret") return PairSource::ret;
    if (s == "gen") return PairSource::gen;
    if (s == "harvested") return PairSource::harvested;
    throw std::runtime_error("unknown pair source: " + s);
}

double pair_prob(const PairModelParams& params, const Message& a, const Message& b) {
    if (a.tokens.empty() || b.tokens.empty()) {
        throw std::invalid_argument("pair_prob: empty message");
    }
    MessageCache ca, cb;
    encode_message(params.enc, params.vocab.lookup_all(a.tokens), ca);
    encode_message(params.enc, params.vocab.lookup_all(b.tokens), cb);
    return sigmoid(dot(ca.out, cb.out));
}

PairDataset build_pseudo_pairs_ret(const Corpus& corpus, double negatives_per_positive,
                                   std::uint64_t seed) {
    if (corpus.conversations.empty()) throw std::invalid_argument("build_pseudo_pairs_ret: empty corpus");
    PairDataset ds;
    for (const auto& conv : corpus.conversations) {
        std::unordered_map<std::string, std::vector<int>> by_speaker;
        for (const auto& m : conv.messages) by_speaker[m.speaker].push_back(m.position);
        for (const auto& [speaker, positions] : by_speaker) {
            for (std::size_t i = 0; i < positions.size(); ++i) {
                for (std::size_t j = i + 1; j < positions.size(); ++j) {
                    ds.instances.push_back({conv.messages[static_cast<std::size_t>(positions[i])],
                                            conv.messages[static_cast<std::size_t>(positions[j])],
                                            1, PairSource::ret});
                }
            }
        }
    }
    const std::size_t n_pos = ds.instances.size();
    const std::size_t n_neg =
        static_cast<std::size_t>(negatives_per_positive * static_cast<double>(n_pos) + 0.5);
    if (n_neg > 0 && corpus.conversations.size() < 2) {
        throw std::runtime_error("build_pseudo_pairs_ret: need >=2 conversations for negatives");
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> conv_dist(0, corpus.conversations.size() - 1);
    for (std::size_t n = 0; n < n_neg; ++n) {
        std::size_t ci = conv_dist(rng), cj = conv_dist(rng);
        while (cj == ci) cj = conv_dist(rng);
        const auto& a_conv = corpus.conversations[ci];
        const auto& b_conv = corpus.conversations[cj];
        if (a_conv.messages.empty() || b_conv.messages.empty()) continue;
        std::uniform_int_distribution<std::size_t> ma(0, a_conv.messages.size() - 1);
        std::uniform_int_distribution<std::size_t> mb(0, b_conv.messages.size() - 1);
        ds.instances.push_back({a_conv.messages[ma(rng)], b_conv.messages[mb(rng)], 0, PairSource::ret});
    }
    return ds;
}

ReplyGenerator make_topic_echo_generator(std::uint64_t seed) {
    auto rng = std::make_shared<std::mt19937_64>(seed);
    return [rng](const Message& src) -> std::optional<Message> {
        if (src.tokens.empty()) return std::nullopt;
        std::uniform_int_distribution<int> len_dist(4, 8);
        std::uniform_int_distribution<std::size_t> tok_dist(0, src.tokens.size() - 1);
        Message reply;
        reply.id = src.id + "-reply";
        reply.speaker = src.speaker + "-reply";
        reply.position = -1;
        const int len = len_dist(*rng);
        for (int i = 0; i < len; ++i) reply.tokens.push_back(src.tokens[tok_dist(*rng)]);
        return reply;
    };
}

void augment_generated(PairDataset& dataset, const Corpus& corpus, const ReplyGenerator& gen,
                       int n_messages, std::uint64_t seed) {
    if (n_messages <= 0) return;
    std::vector<const Message*> all;
    for (const auto& conv : corpus.conversations) {
        for (const auto& m : conv.messages) all.push_back(&m);
    }
    if (all.empty()) return;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, all.size() - 1);
    for (int n = 0; n < n_messages; ++n) {
        const Message& src = *all[pick(rng)];
        auto reply = gen(src);
        if (!reply) {
            std::fprintf(stderr, "warning: reply generation failed for message %s, skipping\n",
                         src.id.c_str());
            continue;
        }
        dataset.instances.push_back({src, *reply, 1, PairSource::gen});
    }
}

TrainReport train_pair(PairModelParams& params, const PairDataset& dataset, int epochs,
                       double lr, std::uint64_t seed, int batch_size) {
    bool has_pos = false, has_neg = false;
    for (const auto& inst : dataset.instances) (inst.label ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) throw std::runtime_error("train_pair: dataset must contain both labels");

    // Token ids resolved once against the frozen vocabulary.
    std::vector<std::pair<std::vector<int>, std::vector<int>>> ids;
    ids.reserve(dataset.instances.size());
    for (const auto& inst : dataset.instances) {
        ids.emplace_back(params.vocab.lookup_all(inst.a.tokens), params.vocab.lookup_all(inst.b.tokens));
    }

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(dataset.instances.size());
    std::iota(order.begin(), order.end(), 0);
    Adam opt(lr);
    Grad g(params.enc);
    TrainReport report;
    MessageCache ca, cb;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t done = 0;
        while (done < order.size()) {
            const std::size_t end = std::min(done + static_cast<std::size_t>(batch_size), order.size());
            g.zero();
            for (std::size_t k = done; k < end; ++k) {
                const std::size_t idx = order[k];
                const int label = dataset.instances[idx].label;
                encode_message(params.enc, ids[idx].first, ca);
                encode_message(params.enc, ids[idx].second, cb);
                const double logit = dot(ca.out, cb.out);
                epoch_loss += bce_loss(logit, label);
                const double dz = bce_dlogit(logit, label) / static_cast<double>(end - done);
                Vec da(cb.out), db(ca.out);
                for (auto& x : da) x *= dz;
                for (auto& x : db) x *= dz;
                encode_message_backward(params.enc, ca, da.data(), g);
                encode_message_backward(params.enc, cb, db.data(), g);
            }
            if (lr > 0.0) opt.step(params.enc.data, g.data);
            done = end;
        }
        report.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    }

    std::size_t correct = 0;
    for (std::size_t i = 0; i < dataset.instances.size(); ++i) {
        encode_message(params.enc, ids[i].first, ca);
        encode_message(params.enc, ids[i].second, cb);
        const int pred = sigmoid(dot(ca.out, cb.out)) >= 0.5 ? 1 : 0;
        if (pred == dataset.instances[i].label) ++correct;
    }
    report.final_accuracy = static_cast<double>(correct) / static_cast<double>(dataset.instances.size());
    return report;
}

PairEval eval_pair_f1(const PairModelParams& params, const std::vector<PairInstance>& pairs) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& inst : pairs) {
        const int pred = pair_prob(params, inst.a, inst.b) >= 0.5 ? 1 : 0;
        if (pred == 1 && inst.label == 1) ++tp;
        else if (pred == 1 && inst.label == 0) ++fp;
        else if (pred == 0 && inst.label == 1) ++fn;
    }
    PairEval eval;
    eval.precision = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    eval.recall = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    eval.f1 = (eval.precision + eval.recall > 0.0)
                  ? 2.0 * eval.precision * eval.recall / (eval.precision + eval.recall)
                  : 0.0;
    return eval;
}

namespace {

nlohmann::ordered_json message_ref(const Message& m) {
    if (m.position >= 0) return m.id;
    // Generated messages have no corpus home; stored inline.
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

Message resolve_ref(const nlohmann::json& j, const std::unordered_map<std::string, const Message*>& index) {
    if (j.is_string()) {
        auto it = index.find(j.get<std::string>());
        if (it == index.end()) throw std::runtime_error("pair dataset: unknown message id " + j.get<std::string>());
        return *it->second;
    }
    Message m;
    m.id = j.at("id").get<std::string>();
    m.speaker = j.at("speaker").get<std::string>();
    m.tokens = tokenize(j.at("text").get<std::string>());
    m.position = -1;
    return m;
}

std::unordered_map<std::string, const Message*> index_messages(const Corpus& corpus) {
    std::unordered_map<std::string, const Message*> index;
    for (const auto& conv : corpus.conversations) {
        for (const auto& m : conv.messages) index[m.id] = &m;
    }
    return index;
}

}  // namespace

void write_pair_dataset(const PairDataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    for (const auto& inst : dataset.instances) {
        nlohmann::ordered_json j;
        j["a"] = message_ref(inst.a);
        j["b"] = message_ref(inst.b);
        j["label"] = inst.label;
        j["src"] = to_string(inst.src);
        out << j.dump() << '\n';
    }
}

PairDataset load_pair_dataset(const std::string& path, const Corpus& corpus) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open pair dataset: " + path);
    auto index = index_messages(corpus);
    PairDataset ds;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        PairInstance inst;
        inst.a = resolve_ref(j.at("a"), index);
        inst.b = resolve_ref(j.at("b"), index);
        inst.label = j.at("label").get<int>();
        inst.src = pair_source_from_string(j.at("src").get<std::string>());
        ds.instances.push_back(std::move(inst));
    }
    return ds;
}

}  // namespace disent
