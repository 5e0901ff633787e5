#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "disent/corpus.hpp"
#include "disent/metrics.hpp"
#include "disent/pair_model.hpp"
#include "disent/session_model.hpp"

namespace disent {

struct RewardConfig {
    double gamma = 0.6;    // weight of the pair-model reward
    bool baseline = true;  // running-mean baseline
};

struct HarvestConfig {
    int lookback = 3;     // preceding session-mates per message
    int min_overlap = 2;  // non-stopword token overlap threshold
};

// Disentanglement step state: message at `position`, its preceding context,
// and the sessions detached so far (message positions per session).
struct StepState {
    const Conversation* conv = nullptr;
    int position = 0;
    const std::vector<std::vector<int>>* sessions = nullptr;
};

// a_new == 0: negative mean pair probability against the whole context.
// a_new == 1, a_t == k: mean pair probability against session k's members.
double message_reward(const PairModelParams& pair_params, const StepState& state,
                      int a_new, int a_t);

// -1 when a new session opens but the speaker already appeared; +1 when the
// chosen session already contains the speaker; 0 otherwise.
int speaker_reward(const StepState& state, int a_new, int a_t);

double total_reward(double r_m, int r_s, const RewardConfig& config);

// Samples a trajectory through the end-to-end disentangler and attaches
// per-step rewards.
Episode run_episode(const SessionModelParams& session_params, const PairModelParams& pair_params,
                    const Conversation& conv, const RewardConfig& config, std::uint64_t seed,
                    Partition* out_partition = nullptr);

struct ReinforceBaseline {
    double momentum = 0.95;
    double mean = 0.0;
    bool initialized = false;

    void observe(double reward);
    double value() const { return initialized ? mean : 0.0; }
};

// One gradient-ascent step on the REINFORCE surrogate over the given episodes.
// When opt is null a plain SGD step with the given lr is taken.
void reinforce_update(SessionModelParams& params,
                      const std::vector<std::pair<const Conversation*, Episode>>& episodes,
                      double lr, const RewardConfig& config, ReinforceBaseline* baseline,
                      Adam* opt = nullptr);

// Positive pairs from predicted sessions: each message with up to
// `lookback` preceding session-mates, filtered by non-stopword overlap.
PairDataset harvest_pairs(const std::vector<std::pair<const Conversation*, Partition>>& partitions,
                          const HarvestConfig& config);

struct CotrainConfig {
    int iterations = 3;
    RewardConfig reward;
    HarvestConfig harvest;
    int rl_passes = 2;
    int episode_batch = 16;
    double rl_lr = 1e-5;
    double session_init_lr = 1e-4;
    int session_init_epochs = 5;
    double pair_lr = 1e-5;
    int pair_epochs = 2;
    std::uint64_t seed = 1;
    bool early_stop = true;  // on dev Shen-F when dev gold exists
    // When > 0 and a labeled dev corpus is given, dev Shen-F is evaluated
    // every this many episode batches during REINFORCE and the best session
    // parameters seen are kept (tuning on dev, as for the iteration-level
    // early stop). 0 disables the mid-iteration selection.
    int rl_eval_every = 0;
};

struct IterationReport {
    int iteration = 0;
    double mean_reward = 0.0;
    std::size_t harvested_pairs = 0;
    std::optional<double> pair_f1;
    std::optional<MetricReport> metrics;
};

struct CotrainResult {
    std::vector<IterationReport> reports;
};

// Full outer loop: re-init F_t on D_t, REINFORCE with rewards from F_m,
// disentangle, harvest pairs, retrain F_m on the grown dataset. When a dev
// corpus with gold is given, per-iteration metrics and pair F1 are reported
// and early stopping watches dev Shen-F.
CotrainResult cotrain_loop(const Corpus& train, const Corpus* dev, PairModelParams& pair_params,
                           SessionModelParams& session_params, const SessionDataset& d_t,
                           const PairDataset& d_m, const CotrainConfig& config);

// Gold same/different-session pairs from a labeled corpus, for pair F1
// reporting (all within-conversation pairs up to a cap per conversation).
std::vector<PairInstance> gold_eval_pairs(const Corpus& corpus, std::size_t max_per_conv,
                                          std::uint64_t seed);

}  // namespace disent
