#include <doctest.h>

#include <cmath>
#include <random>

#include "disent/cotrain.hpp"
#include "fixtures.hpp"

using namespace disent;
using disent::testfix::conv;

namespace {

PairModelParams zero_pair_params(const Corpus& corpus) {
    PairModelParams p;
    p.vocab = Vocab::build(corpus);
    p.enc.vocab_size = p.vocab.size();
    p.enc.dim = 2;
    p.enc.data.assign(p.enc.size(), 0.0);
    return p;
}

// Pair params rigged so every pair probability equals `prob`: zero encoder
// would give 0.5; instead give every token the same embedding e with
// tanh(e) . tanh(e) = logit. Works when logit >= 0.
PairModelParams constant_pair_params(const Corpus& corpus, double prob) {
    PairModelParams p;
    p.vocab = Vocab::build(corpus);
    p.enc.vocab_size = p.vocab.size();
    p.enc.dim = 2;
    p.enc.data.assign(p.enc.size(), 0.0);
    p.enc.data[p.enc.proj_off() + 0] = 1.0;
    p.enc.data[p.enc.proj_off() + 3] = 1.0;
    const double logit = std::log(prob / (1.0 - prob));
    const double component = std::atanh(std::sqrt(logit / 2.0));
    for (int tok = 0; tok < p.enc.vocab_size; ++tok) {
        p.enc.emb(tok)[0] = component;
        p.enc.emb(tok)[1] = component;
    }
    return p;
}

// Surrogate loss for a frozen episode: -sum (r - b) * log-prob of the taken
// actions, recomputed from the current parameters. Independent oracle for
// the reinforce_update gradient.
double surrogate_loss(const SessionModelParams& params, const Conversation& cv,
                      const Episode& episode, double baseline_value) {
    double loss = 0.0;
    std::vector<std::vector<int>> sessions = {{0}};
    for (const auto& step : episode.steps) {
        const std::size_t i = static_cast<std::size_t>(step.position);
        std::vector<Message> ctx(cv.messages.begin(), cv.messages.begin() + static_cast<std::ptrdiff_t>(i));
        const double p = session_prob(params, ctx, cv.messages[i]);
        const double adv = step.reward - baseline_value;
        loss -= adv * std::log(step.a_new == 1 ? p : 1.0 - p);
        if (step.a_new == 0) {
            sessions.push_back({static_cast<int>(i)});
        } else {
            double total = 0.0, chosen_score = 0.0;
            for (std::size_t k = 0; k < sessions.size(); ++k) {
                std::vector<Message> sess;
                for (int pos : sessions[k]) sess.push_back(cv.messages[static_cast<std::size_t>(pos)]);
                const double s = session_prob(params, sess, cv.messages[i]);
                total += s;
                if (static_cast<int>(k) + 1 == step.a_t) chosen_score = s;
            }
            loss -= adv * std::log(chosen_score / total);
            sessions[static_cast<std::size_t>(step.a_t - 1)].push_back(static_cast<int>(i));
        }
    }
    return loss;
}

Corpus small_corpus(std::uint64_t seed, int n = 6) {
    SynthConfig cfg;
    cfg.n_conversations = n;
    cfg.seed = seed;
    return generate_synthetic(cfg);
}

}  // namespace

TEST_CASE("message_reward averages pair probabilities with the right sign") {
    Corpus c;
    c.conversations.push_back(conv("c1", {{"a", {"x"}}, {"b", {"y"}}, {"c", {"z"}}, {"d", {"w"}}}));
    auto pair_params = constant_pair_params(c, 0.7);
    std::vector<std::vector<int>> sessions = {{0, 1}, {2}};
    StepState state{&c.conversations[0], 3, &sessions};

    CHECK(message_reward(pair_params, state, 0, 0) == doctest::Approx(-0.7).epsilon(1e-9));
    CHECK(message_reward(pair_params, state, 1, 1) == doctest::Approx(0.7).epsilon(1e-9));
    CHECK(message_reward(pair_params, state, 1, 2) == doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("message_reward with zero pair model is minus one half on new") {
    Corpus c;
    c.conversations.push_back(conv("c1", {{"a", {"x"}}, {"b", {"y"}}, {"c", {"z"}}}));
    auto pair_params = zero_pair_params(c);
    std::vector<std::vector<int>> sessions = {{0}, {1}};
    StepState state{&c.conversations[0], 2, &sessions};
    CHECK(message_reward(pair_params, state, 0, 0) == doctest::Approx(-0.5));
}

TEST_CASE("speaker_reward cases") {
    Corpus c;
    c.conversations.push_back(conv("c1", {{"A", {"x"}}, {"B", {"y"}}, {"A", {"z"}}}));
    std::vector<std::vector<int>> sessions = {{0}, {1}};
    StepState state{&c.conversations[0], 2, &sessions};
    // new session but speaker A already spoke -> -1
    CHECK(speaker_reward(state, 0, 0) == -1);
    // join session 1 which contains A -> +1
    CHECK(speaker_reward(state, 1, 1) == 1);
    // join session 2 which does not contain A -> 0
    CHECK(speaker_reward(state, 1, 2) == 0);

    Conversation unseen = conv("c2", {{"A", {"x"}}, {"B", {"y"}}, {"C", {"z"}}});
    std::vector<std::vector<int>> sessions2 = {{0}, {1}};
    StepState state2{&unseen, 2, &sessions2};
    CHECK(speaker_reward(state2, 0, 0) == 0);  // new session, speaker unseen
}

TEST_CASE("total_reward mixes with gamma") {
    RewardConfig cfg;
    cfg.gamma = 0.6;
    CHECK(total_reward(-0.7, -1, cfg) == doctest::Approx(-0.82));
    cfg.gamma = 1.0;
    CHECK(total_reward(-0.7, -1, cfg) == doctest::Approx(-0.7));
    cfg.gamma = 0.0;
    CHECK(total_reward(-0.7, -1, cfg) == doctest::Approx(-1.0));
}

TEST_CASE("reward bounds hold across sampled episodes") {
    auto corpus = small_corpus(70);
    SessionModelParams sp;
    sp.vocab = Vocab::build(corpus);
    sp.enc = EncoderParams::init(sp.vocab.size(), 8, 71);
    PairModelParams pp;
    pp.vocab = sp.vocab;
    pp.enc = EncoderParams::init(pp.vocab.size(), 8, 72);
    RewardConfig rcfg;
    for (std::size_t i = 0; i < corpus.conversations.size(); ++i) {
        auto ep = run_episode(sp, pp, corpus.conversations[i], rcfg, 100 + i);
        for (const auto& step : ep.steps) {
            CHECK(step.reward > -1.0);
            CHECK(step.reward < 1.0);
            CHECK(step.logp_new <= 0.0);
        }
    }
}

TEST_CASE("run_episode is deterministic given seed") {
    auto corpus = small_corpus(80);
    SessionModelParams sp;
    sp.vocab = Vocab::build(corpus);
    sp.enc = EncoderParams::init(sp.vocab.size(), 8, 81);
    auto pp = constant_pair_params(corpus, 0.6);
    Partition part1, part2;
    auto a = run_episode(sp, pp, corpus.conversations[0], {}, 999, &part1);
    auto b = run_episode(sp, pp, corpus.conversations[0], {}, 999, &part2);
    CHECK(part1 == part2);
    REQUIRE(a.steps.size() == b.steps.size());
    for (std::size_t i = 0; i < a.steps.size(); ++i) {
        CHECK(a.steps[i].a_new == b.steps[i].a_new);
        CHECK(a.steps[i].reward == b.steps[i].reward);
    }
}

TEST_CASE("reinforce_update: zero advantage means zero update") {
    auto corpus = small_corpus(90);
    SessionModelParams sp;
    sp.vocab = Vocab::build(corpus);
    sp.enc = EncoderParams::init(sp.vocab.size(), 6, 91);
    auto pp = constant_pair_params(corpus, 0.6);
    auto ep = run_episode(sp, pp, corpus.conversations[0], {}, 7);
    // force all rewards to a constant equal to the baseline value
    for (auto& step : ep.steps) step.reward = 0.25;
    ReinforceBaseline bl;
    bl.initialized = true;
    bl.mean = 0.25;
    auto saved = sp.enc.data;
    std::vector<std::pair<const Conversation*, Episode>> batch = {{&corpus.conversations[0], ep}};
    reinforce_update(sp, batch, 0.1, {}, &bl);
    for (std::size_t i = 0; i < saved.size(); ++i) CHECK(sp.enc.data[i] == doctest::Approx(saved[i]).epsilon(1e-12));
}

TEST_CASE("reinforce_update lr=0 (sgd) is a no-op") {
    auto corpus = small_corpus(92);
    SessionModelParams sp;
    sp.vocab = Vocab::build(corpus);
    sp.enc = EncoderParams::init(sp.vocab.size(), 6, 93);
    auto pp = constant_pair_params(corpus, 0.6);
    auto ep = run_episode(sp, pp, corpus.conversations[0], {}, 8);
    auto saved = sp.enc.data;
    std::vector<std::pair<const Conversation*, Episode>> batch = {{&corpus.conversations[0], ep}};
    RewardConfig cfg;
    cfg.baseline = false;
    reinforce_update(sp, batch, 0.0, cfg, nullptr);
    CHECK(sp.enc.data == saved);
}

TEST_CASE("positive reward on a join action pushes its probability up") {
    Corpus c;
    c.conversations.push_back(conv("c1", {{"a", {"ta", "tb"}}, {"b", {"ta", "tc"}}}));
    SessionModelParams sp;
    sp.vocab = Vocab::build(c);
    sp.enc = EncoderParams::init(sp.vocab.size(), 6, 94);
    Episode ep;
    ep.conv_id = "c1";
    EpisodeStep step;
    step.position = 1;
    step.a_new = 1;
    step.a_t = 1;
    step.reward = 1.0;
    ep.steps.push_back(step);
    const auto& cv = c.conversations[0];
    const double before = session_prob(sp, {cv.messages[0]}, cv.messages[1]);
    std::vector<std::pair<const Conversation*, Episode>> batch = {{&cv, ep}};
    RewardConfig cfg;
    cfg.baseline = false;
    reinforce_update(sp, batch, 0.05, cfg, nullptr);
    const double after = session_prob(sp, {cv.messages[0]}, cv.messages[1]);
    CHECK(after > before);
}

TEST_CASE("reinforce gradient matches finite differences of the surrogate") {
    auto corpus = small_corpus(95, 3);
    SessionModelParams sp;
    sp.vocab = Vocab::build(corpus);
    sp.enc = EncoderParams::init(sp.vocab.size(), 4, 96);
    auto pp = constant_pair_params(corpus, 0.65);
    RewardConfig cfg;
    cfg.baseline = false;

    std::mt19937_64 rng(97);
    for (int trial = 0; trial < 5; ++trial) {
        const auto& cv = corpus.conversations[static_cast<std::size_t>(trial) % corpus.conversations.size()];
        auto ep = run_episode(sp, pp, cv, cfg, 1000 + static_cast<std::uint64_t>(trial));

        // analytic gradient extracted from an SGD step with lr = 1
        auto probe = sp;
        std::vector<std::pair<const Conversation*, Episode>> batch = {{&cv, ep}};
        reinforce_update(probe, batch, 1.0, cfg, nullptr);
        std::vector<double> analytic(sp.enc.data.size());
        for (std::size_t i = 0; i < analytic.size(); ++i) analytic[i] = sp.enc.data[i] - probe.enc.data[i];

        std::uniform_int_distribution<std::size_t> pick(0, sp.enc.data.size() - 1);
        for (int s = 0; s < 25; ++s) {
            const std::size_t idx = pick(rng);
            const double h = 1e-5;
            auto plus = sp;
            plus.enc.data[idx] += h;
            auto minus = sp;
            minus.enc.data[idx] -= h;
            const double numeric = (surrogate_loss(plus, cv, ep, 0.0) -
                                    surrogate_loss(minus, cv, ep, 0.0)) / (2.0 * h);
            const double denom = std::max({std::abs(numeric), std::abs(analytic[idx]), 1e-8});
            CHECK(std::abs(numeric - analytic[idx]) / denom < 1e-4);
        }
    }
}

TEST_CASE("harvest_pairs enumerates preceding-M session mates") {
    Corpus c;
    c.conversations.push_back(conv("c1", {{"a", {"alpha", "beta"}},
                                          {"b", {"alpha", "beta"}},
                                          {"c", {"alpha", "beta"}}}));
    Partition p = Partition::from_labels({1, 1, 1});
    HarvestConfig cfg;
    cfg.lookback = 2;
    cfg.min_overlap = 0;
    auto ds = harvest_pairs({{&c.conversations[0], p}}, cfg);
    REQUIRE(ds.instances.size() == 3);  // (a,b), (a,c), (b,c)
    for (const auto& inst : ds.instances) {
        CHECK(inst.label == 1);
        CHECK(inst.src == PairSource::harvested);
        CHECK(inst.a.position < inst.b.position);
    }

    cfg.lookback = 1;
    auto ds1 = harvest_pairs({{&c.conversations[0], p}}, cfg);
    CHECK(ds1.instances.size() == 2);  // (a,b), (b,c)
}

TEST_CASE("harvest respects the overlap filter and stopwords") {
    Corpus c;
    // messages share exactly one non-stopword token ("alpha"); "the" is a stopword
    c.conversations.push_back(conv("c1", {{"a", {"the", "alpha", "beta"}},
                                          {"b", {"the", "alpha", "gamma"}}}));
    Partition p = Partition::from_labels({1, 1});
    HarvestConfig cfg;
    cfg.min_overlap = 2;
    CHECK(harvest_pairs({{&c.conversations[0], p}}, cfg).instances.empty());
    cfg.min_overlap = 1;
    CHECK(harvest_pairs({{&c.conversations[0], p}}, cfg).instances.size() == 1);
}

TEST_CASE("singleton sessions harvest nothing") {
    Corpus c;
    c.conversations.push_back(conv("c1", {{"a", {"x"}}, {"b", {"y"}}}));
    Partition p = Partition::from_labels({1, 2});
    CHECK(harvest_pairs({{&c.conversations[0], p}}, {}).instances.empty());
}

TEST_CASE("harvest size bound") {
    auto corpus = small_corpus(98);
    SessionModelParams sp;
    sp.vocab = Vocab::build(corpus);
    sp.enc = EncoderParams::init(sp.vocab.size(), 6, 99);
    HarvestConfig cfg;
    cfg.lookback = 3;
    cfg.min_overlap = 0;
    std::vector<std::pair<const Conversation*, Partition>> parts;
    for (const auto& cv : corpus.conversations) {
        parts.emplace_back(&cv, disentangle_e2e(sp, cv, DecodeMode::argmax));
    }
    auto ds = harvest_pairs(parts, cfg);
    std::size_t bound = 0;
    for (const auto& [cv, part] : parts) {
        for (const auto& sess : part.sessions()) {
            for (std::size_t i = 0; i < sess.size(); ++i) {
                bound += std::min(i, static_cast<std::size_t>(cfg.lookback));
            }
        }
    }
    CHECK(ds.instances.size() <= bound);
}

TEST_CASE("cotrain_loop zero iterations returns empty report") {
    auto corpus = small_corpus(200);
    PairModelParams pp;
    pp.vocab = Vocab::build(corpus);
    pp.enc = EncoderParams::init(pp.vocab.size(), 6, 201);
    SessionModelParams sp;
    sp.vocab = pp.vocab;
    sp.enc = EncoderParams::init(sp.vocab.size(), 6, 202);
    auto saved_p = pp.enc.data;
    auto saved_s = sp.enc.data;
    CotrainConfig cfg;
    cfg.iterations = 0;
    auto result = cotrain_loop(corpus, nullptr, pp, sp, {}, {}, cfg);
    CHECK(result.reports.empty());
    CHECK(pp.enc.data == saved_p);
    CHECK(sp.enc.data == saved_s);
}

TEST_CASE("cotrain_loop produces structured per-iteration reports") {
    SynthConfig scfg;
    scfg.n_conversations = 12;
    scfg.seed = 210;
    auto train = generate_synthetic(scfg);
    scfg.n_conversations = 4;
    scfg.seed = 211;
    auto dev = generate_synthetic(scfg);

    Corpus both = train;
    for (const auto& cv : dev.conversations) both.conversations.push_back(cv);
    PairModelParams pp;
    pp.vocab = Vocab::build(both);
    pp.enc = EncoderParams::init(pp.vocab.size(), 6, 212);
    SessionModelParams sp;
    sp.vocab = pp.vocab;
    sp.enc = EncoderParams::init(sp.vocab.size(), 6, 213);

    auto d_m = build_pseudo_pairs_ret(train, 1.0, 214);
    auto d_t = build_pseudo_sessions(train, 1.0, 215);
    train_pair(pp, d_m, 2, 1e-3, 216, 32);
    train_session_init(sp, d_t, 2, 1e-3, 217, 32);

    CotrainConfig cfg;
    cfg.iterations = 2;
    cfg.rl_passes = 1;
    cfg.session_init_epochs = 1;
    cfg.pair_epochs = 1;
    cfg.rl_lr = 1e-4;
    cfg.early_stop = false;
    auto result = cotrain_loop(train, &dev, pp, sp, d_t, d_m, cfg);
    REQUIRE(result.reports.size() == 2);
    for (const auto& rep : result.reports) {
        CHECK(rep.iteration >= 1);
        CHECK(std::isfinite(rep.mean_reward));
        CHECK(rep.pair_f1.has_value());
        REQUIRE(rep.metrics.has_value());
        CHECK(rep.metrics->shen_f > 0.0);
    }
}
