#pragma once

#include <vector>

#include "disent/corpus.hpp"

namespace disent {

struct MetricReport {
    double nmi = 0.0;         // x100
    double one_to_one = 0.0;  // x100
    double loc3 = 0.0;        // x100
    double shen_f = 0.0;      // x100
    double mse = 0.0;
    std::size_t conversations = 0;
    std::size_t messages = 0;
};

// I(pred; gold) normalized by the arithmetic mean of the entropies.
// Conventions: both partitions single-cluster -> 1; exactly one side with
// zero entropy -> 0.
double nmi(const Partition& pred, const Partition& gold);

// Best one-to-one pairing of predicted and gold sessions by message overlap,
// as a percentage of messages.
double one_to_one(const Partition& pred, const Partition& gold);

// Pairwise same/different-session agreement over pairs within distance 3.
double loc3(const Partition& pred, const Partition& gold);

// Size-weighted best-match F score per gold session.
double shen_f(const Partition& pred, const Partition& gold);

double session_count_mse(const std::vector<Partition>& preds, const std::vector<Partition>& golds);

// Aggregates all partition metrics, averaging per-conversation scores
// weighted equally, MSE over session counts.
MetricReport evaluate_partitions(const std::vector<Partition>& preds,
                                 const std::vector<Partition>& golds);

// Each entry is the 0-based rank at which the gold candidate appeared.
double hits_at_k(const std::vector<int>& gold_ranks, int k);
double mrr(const std::vector<int>& gold_ranks);

// Minimum-cost assignment on a square matrix; returns column chosen per row.
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost);

}  // namespace disent
