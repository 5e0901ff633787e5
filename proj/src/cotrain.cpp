#include "disent/cotrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "disent/stopwords.hpp"

namespace disent {

double message_reward(const PairModelParams& pair_params, const StepState& state,
                      int a_new, int a_t) {
    const auto& messages = state.conv->messages;
    const auto& m_i = messages[static_cast<std::size_t>(state.position)];
    if (a_new == 0) {
        if (state.position == 0) return 0.0;  // first message precedes the policy
        double sum = 0.0;
        for (int j = 0; j < state.position; ++j) {
            sum += pair_prob(pair_params, m_i, messages[static_cast<std::size_t>(j)]);
        }
        return -sum / static_cast<double>(state.position);
    }
    const auto& session = (*state.sessions)[static_cast<std::size_t>(a_t - 1)];
    if (session.empty()) throw std::invalid_argument("message_reward: empty target session");
    double sum = 0.0;
    for (int pos : session) {
        sum += pair_prob(pair_params, m_i, messages[static_cast<std::size_t>(pos)]);
    }
    return sum / static_cast<double>(session.size());
}

int speaker_reward(const StepState& state, int a_new, int a_t) {
    const auto& messages = state.conv->messages;
    const std::string& speaker = messages[static_cast<std::size_t>(state.position)].speaker;
    if (a_new == 0) {
        for (int j = 0; j < state.position; ++j) {
            if (messages[static_cast<std::size_t>(j)].speaker == speaker) return -1;
        }
        return 0;
    }
    for (int pos : (*state.sessions)[static_cast<std::size_t>(a_t - 1)]) {
        if (messages[static_cast<std::size_t>(pos)].speaker == speaker) return 1;
    }
    return 0;
}

double total_reward(double r_m, int r_s, const RewardConfig& config) {
    return config.gamma * r_m + (1.0 - config.gamma) * static_cast<double>(r_s);
}

Episode run_episode(const SessionModelParams& session_params, const PairModelParams& pair_params,
                    const Conversation& conv, const RewardConfig& config, std::uint64_t seed,
                    Partition* out_partition) {
    std::mt19937_64 rng(seed);
    Episode episode;
    Partition partition = disentangle_e2e(session_params, conv, DecodeMode::sample, &rng, &episode);
    if (out_partition) *out_partition = partition;

    // Pair probabilities from cached pair-model message vectors.
    const std::size_t n = conv.messages.size();
    std::vector<Vec> pvecs(n);
    {
        MessageCache mc;
        for (std::size_t i = 0; i < n; ++i) {
            encode_message(pair_params.enc, pair_params.vocab.lookup_all(conv.messages[i].tokens), mc);
            pvecs[i] = mc.out;
        }
    }
    auto pprob = [&](std::size_t a, std::size_t b) { return sigmoid(dot(pvecs[a], pvecs[b])); };

    // Replay the trajectory to recover session membership at each step.
    std::vector<std::vector<int>> sessions;
    sessions.push_back({0});
    for (auto& step : episode.steps) {
        const std::size_t i = static_cast<std::size_t>(step.position);
        double r_m;
        int r_s;
        const std::string& speaker = conv.messages[i].speaker;
        if (step.a_new == 0) {
            double sum = 0.0;
            for (std::size_t j = 0; j < i; ++j) sum += pprob(i, j);
            r_m = -sum / static_cast<double>(i);
            r_s = 0;
            for (std::size_t j = 0; j < i; ++j) {
                if (conv.messages[j].speaker == speaker) {
                    r_s = -1;
                    break;
                }
            }
            sessions.push_back({static_cast<int>(i)});
        } else {
            auto& sess = sessions[static_cast<std::size_t>(step.a_t - 1)];
            double sum = 0.0;
            r_s = 0;
            for (int pos : sess) {
                sum += pprob(i, static_cast<std::size_t>(pos));
                if (conv.messages[static_cast<std::size_t>(pos)].speaker == speaker) r_s = 1;
            }
            r_m = sum / static_cast<double>(sess.size());
            sess.push_back(static_cast<int>(i));
        }
        step.reward = total_reward(r_m, r_s, config);
    }
    return episode;
}

void ReinforceBaseline::observe(double reward) {
    if (!initialized) {
        mean = reward;
        initialized = true;
    } else {
        mean = momentum * mean + (1.0 - momentum) * reward;
    }
}

void reinforce_update(SessionModelParams& params,
                      const std::vector<std::pair<const Conversation*, Episode>>& episodes,
                      double lr, const RewardConfig& config, ReinforceBaseline* baseline,
                      Adam* opt) {
    if (episodes.empty()) throw std::invalid_argument("reinforce_update: no episodes");
    const double b = (config.baseline && baseline) ? baseline->value() : 0.0;
    const double scale = 1.0 / static_cast<double>(episodes.size());
    Grad g(params.enc);

    for (const auto& [conv_ptr, episode] : episodes) {
        const Conversation& conv = *conv_ptr;
        const std::size_t n = conv.messages.size();
        std::vector<MessageCache> mcaches(n);
        std::vector<Vec> vecs(n);
        for (std::size_t i = 0; i < n; ++i) {
            encode_message(params.enc, params.vocab.lookup_all(conv.messages[i].tokens), mcaches[i]);
            vecs[i] = mcaches[i].out;
        }
        std::vector<Vec> dvecs(n, Vec(static_cast<std::size_t>(params.enc.dim), 0.0));

        std::vector<std::vector<int>> sessions;
        sessions.push_back({0});
        SessionCache sc;
        std::vector<Vec> local;
        std::vector<Vec> dlocal;
        for (const auto& step : episode.steps) {
            const std::size_t i = static_cast<std::size_t>(step.position);
            const double adv = (step.reward - b) * scale;

            // First-layer policy: p = sigmoid(v_ctx . v_i).
            local.assign(vecs.begin(), vecs.begin() + static_cast<std::ptrdiff_t>(i));
            encode_session(params.enc, local, sc);
            const double z = dot(sc.out, vecs[i]);
            const double p = sigmoid(z);
            // d(-adv * log pi_new)/dz; descent on the surrogate is ascent on J.
            const double dz = -adv * (static_cast<double>(step.a_new) - p);
            dlocal.assign(local.size(), Vec(static_cast<std::size_t>(params.enc.dim), 0.0));
            {
                Vec dsess(vecs[i]);
                for (auto& x : dsess) x *= dz;
                encode_session_backward(params.enc, local, sc, dsess, g, dlocal);
                for (std::size_t j = 0; j < local.size(); ++j) {
                    for (std::size_t d = 0; d < dlocal[j].size(); ++d) dvecs[j][d] += dlocal[j][d];
                }
                for (std::size_t d = 0; d < sc.out.size(); ++d) dvecs[i][d] += dz * sc.out[d];
            }

            if (step.a_new == 0) {
                sessions.push_back({static_cast<int>(i)});
                continue;
            }

            // Second layer: categorical over normalized sigmoid scores.
            const std::size_t kk = sessions.size();
            std::vector<SessionCache> scs(kk);
            std::vector<std::vector<Vec>> sess_vecs(kk);
            std::vector<double> s(kk);
            double total = 0.0;
            for (std::size_t k = 0; k < kk; ++k) {
                for (int pos : sessions[k]) sess_vecs[k].push_back(vecs[static_cast<std::size_t>(pos)]);
                encode_session(params.enc, sess_vecs[k], scs[k]);
                s[k] = sigmoid(dot(scs[k].out, vecs[i]));
                total += s[k];
            }
            const std::size_t chosen = static_cast<std::size_t>(step.a_t - 1);
            for (std::size_t k = 0; k < kk; ++k) {
                // d log(s_c / sum s) / dz_k through s_k = sigmoid(z_k)
                double dlog_ds = -1.0 / total;
                if (k == chosen) dlog_ds += 1.0 / s[k];
                const double dzk = -adv * dlog_ds * s[k] * (1.0 - s[k]);
                if (dzk == 0.0) continue;
                Vec dsess(vecs[i]);
                for (auto& x : dsess) x *= dzk;
                dlocal.assign(sess_vecs[k].size(), Vec(static_cast<std::size_t>(params.enc.dim), 0.0));
                encode_session_backward(params.enc, sess_vecs[k], scs[k], dsess, g, dlocal);
                for (std::size_t j = 0; j < sessions[k].size(); ++j) {
                    const std::size_t pos = static_cast<std::size_t>(sessions[k][j]);
                    for (std::size_t d = 0; d < dlocal[j].size(); ++d) dvecs[pos][d] += dlocal[j][d];
                }
                for (std::size_t d = 0; d < scs[k].out.size(); ++d) dvecs[i][d] += dzk * scs[k].out[d];
            }
            sessions[chosen].push_back(static_cast<int>(i));
        }

        for (std::size_t i = 0; i < n; ++i) {
            bool nonzero = false;
            for (double x : dvecs[i]) {
                if (x != 0.0) {
                    nonzero = true;
                    break;
                }
            }
            if (nonzero) encode_message_backward(params.enc, mcaches[i], dvecs[i].data(), g);
        }
    }

    if (opt) {
        opt->step(params.enc.data, g.data);
    } else {
        sgd_step(params.enc.data, g.data, lr);
    }

    if (config.baseline && baseline) {
        for (const auto& [conv_ptr, episode] : episodes) {
            for (const auto& step : episode.steps) baseline->observe(step.reward);
        }
    }
}

PairDataset harvest_pairs(const std::vector<std::pair<const Conversation*, Partition>>& partitions,
                          const HarvestConfig& config) {
    if (config.lookback < 1) throw std::invalid_argument("harvest_pairs: lookback must be >= 1");
    PairDataset ds;
    for (const auto& [conv_ptr, partition] : partitions) {
        const Conversation& conv = *conv_ptr;
        for (const auto& session : partition.sessions()) {
            for (std::size_t i = 1; i < session.size(); ++i) {
                const std::size_t lo = i > static_cast<std::size_t>(config.lookback)
                                           ? i - static_cast<std::size_t>(config.lookback)
                                           : 0;
                const Message& mi = conv.messages[static_cast<std::size_t>(session[i])];
                std::set<std::string> mi_tokens;
                for (const auto& t : mi.tokens) {
                    if (!is_stopword(t)) mi_tokens.insert(t);
                }
                for (std::size_t j = lo; j < i; ++j) {
                    const Message& mj = conv.messages[static_cast<std::size_t>(session[j])];
                    std::set<std::string> shared;
                    for (const auto& t : mj.tokens) {
                        if (mi_tokens.contains(t)) shared.insert(t);
                    }
                    if (static_cast<int>(shared.size()) < config.min_overlap) continue;
                    ds.instances.push_back({mj, mi, 1, PairSource::harvested});
                }
            }
        }
    }
    return ds;
}

std::vector<PairInstance> gold_eval_pairs(const Corpus& corpus, std::size_t max_per_conv,
                                          std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<PairInstance> pairs;
    for (const auto& conv : corpus.conversations) {
        if (!conv.gold) continue;
        std::vector<std::pair<int, int>> all;
        const int n = static_cast<int>(conv.messages.size());
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) all.emplace_back(i, j);
        }
        std::shuffle(all.begin(), all.end(), rng);
        if (all.size() > max_per_conv) all.resize(max_per_conv);
        for (const auto& [i, j] : all) {
            const int label = conv.gold->assignment[static_cast<std::size_t>(i)] ==
                                      conv.gold->assignment[static_cast<std::size_t>(j)]
                                  ? 1
                                  : 0;
            pairs.push_back({conv.messages[static_cast<std::size_t>(i)],
                             conv.messages[static_cast<std::size_t>(j)], label, PairSource::ret});
        }
    }
    return pairs;
}

CotrainResult cotrain_loop(const Corpus& train, const Corpus* dev, PairModelParams& pair_params,
                           SessionModelParams& session_params, const SessionDataset& d_t,
                           const PairDataset& d_m, const CotrainConfig& config) {
    CotrainResult result;
    if (config.iterations <= 0) return result;

    bool dev_has_gold = dev != nullptr;
    if (dev) {
        for (const auto& conv : dev->conversations) {
            if (!conv.gold) {
                dev_has_gold = false;
                break;
            }
        }
    }
    std::vector<PairInstance> eval_pairs;
    if (dev_has_gold) eval_pairs = gold_eval_pairs(*dev, 120, config.seed + 77);

    auto dev_shen_f = [&]() {
        std::vector<Partition> preds, golds;
        for (const auto& conv : dev->conversations) {
            if (conv.messages.empty()) continue;
            preds.push_back(disentangle_e2e(session_params, conv, DecodeMode::argmax));
            golds.push_back(*conv.gold);
        }
        return evaluate_partitions(preds, golds).shen_f;
    };
    const bool select_on_dev = dev_has_gold && config.rl_eval_every > 0;

    double best_monitor = -1e300;
    std::vector<double> best_session_enc;
    std::vector<double> best_pair_enc;
    for (int iter = 1; iter <= config.iterations; ++iter) {
        IterationReport report;
        report.iteration = iter;

        // (1) Re-initialize F_t on the pseudo data, then REINFORCE.
        session_params.enc = EncoderParams::init(session_params.enc.vocab_size,
                                                 session_params.enc.dim, config.seed + 11);
        train_session_init(session_params, d_t, config.session_init_epochs,
                           config.session_init_lr, config.seed + 13, 64);

        ReinforceBaseline baseline;
        Adam rl_opt(config.rl_lr);
        std::mt19937_64 order_rng(config.seed + static_cast<std::uint64_t>(iter) * 101);
        double reward_sum = 0.0;
        std::size_t reward_count = 0;
        double best_dev = select_on_dev ? dev_shen_f() : 0.0;
        std::vector<double> best_enc = session_params.enc.data;
        std::size_t batches_done = 0;
        std::vector<std::size_t> order(train.conversations.size());
        std::iota(order.begin(), order.end(), 0);
        for (int pass = 0; pass < config.rl_passes; ++pass) {
            std::shuffle(order.begin(), order.end(), order_rng);
            std::size_t done = 0;
            while (done < order.size()) {
                const std::size_t end =
                    std::min(done + static_cast<std::size_t>(config.episode_batch), order.size());
                std::vector<std::pair<const Conversation*, Episode>> batch;
                for (std::size_t k = done; k < end; ++k) {
                    const Conversation& conv = train.conversations[order[k]];
                    if (conv.messages.empty()) continue;
                    Episode ep = run_episode(session_params, pair_params, conv, config.reward,
                                             config.seed ^ (order[k] * 2654435761ULL) ^
                                                 (static_cast<std::uint64_t>(iter * config.rl_passes + pass) << 32));
                    if (pass == config.rl_passes - 1) {
                        for (const auto& step : ep.steps) {
                            reward_sum += step.reward;
                            ++reward_count;
                        }
                    }
                    batch.emplace_back(&conv, std::move(ep));
                }
                if (!batch.empty()) {
                    reinforce_update(session_params, batch, config.rl_lr, config.reward, &baseline,
                                     &rl_opt);
                    ++batches_done;
                    if (select_on_dev &&
                        batches_done % static_cast<std::size_t>(config.rl_eval_every) == 0) {
                        const double score = dev_shen_f();
                        if (score > best_dev) {
                            best_dev = score;
                            best_enc = session_params.enc.data;
                        }
                    }
                }
                done = end;
            }
        }
        if (select_on_dev) {
            const double score = dev_shen_f();
            if (score > best_dev) {
                best_dev = score;
                best_enc = session_params.enc.data;
            }
            session_params.enc.data = best_enc;
        }
        report.mean_reward = reward_count ? reward_sum / static_cast<double>(reward_count) : 0.0;

        // (2) Disentangle the training corpus with the updated F_t.
        std::vector<std::pair<const Conversation*, Partition>> predicted;
        predicted.reserve(train.conversations.size());
        for (const auto& conv : train.conversations) {
            if (conv.messages.empty()) continue;
            predicted.emplace_back(&conv, disentangle_e2e(session_params, conv, DecodeMode::argmax));
        }

        // (3) Harvest new pseudo pairs.
        PairDataset harvested = harvest_pairs(predicted, config.harvest);
        report.harvested_pairs = harvested.instances.size();

        // (4) Retrain F_m on D_m plus the harvested pairs.
        PairDataset combined = d_m;
        combined.instances.insert(combined.instances.end(), harvested.instances.begin(),
                                  harvested.instances.end());
        train_pair(pair_params, combined, config.pair_epochs, config.pair_lr,
                   config.seed + static_cast<std::uint64_t>(iter) * 31, 64);

        double monitor = report.mean_reward;
        if (dev_has_gold) {
            std::vector<Partition> preds, golds;
            for (const auto& conv : dev->conversations) {
                if (conv.messages.empty()) continue;
                preds.push_back(disentangle_e2e(session_params, conv, DecodeMode::argmax));
                golds.push_back(*conv.gold);
            }
            report.metrics = evaluate_partitions(preds, golds);
            report.pair_f1 = eval_pair_f1(pair_params, eval_pairs).f1;
            monitor = report.metrics->shen_f;
        }

        result.reports.push_back(report);
        const bool stop = config.early_stop && iter > 1 && monitor < best_monitor;
        if (monitor > best_monitor || best_session_enc.empty()) {
            best_monitor = monitor;
            best_session_enc = session_params.enc.data;
            best_pair_enc = pair_params.enc.data;
        }
        if (stop) break;
    }
    // Early stopping keeps the iteration that scored best on the monitor.
    if (config.early_stop && !best_session_enc.empty()) {
        session_params.enc.data = best_session_enc;
        pair_params.enc.data = best_pair_enc;
    }
    return result;
}

}  // namespace disent
