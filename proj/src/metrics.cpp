#include "disent/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace disent {

namespace {

void check_same_size(const Partition& pred, const Partition& gold) {
    if (pred.assignment.size() != gold.assignment.size()) {
        throw std::invalid_argument("metrics: partitions cover different message sets");
    }
    if (pred.assignment.empty()) {
        throw std::invalid_argument("metrics: empty partitions");
    }
}

std::vector<std::vector<std::size_t>> contingency(const Partition& pred, const Partition& gold) {
    const std::size_t kp = static_cast<std::size_t>(pred.session_count());
    const std::size_t kg = static_cast<std::size_t>(gold.session_count());
    std::vector<std::vector<std::size_t>> table(kp, std::vector<std::size_t>(kg, 0));
    for (std::size_t i = 0; i < pred.assignment.size(); ++i) {
        table[static_cast<std::size_t>(pred.assignment[i] - 1)]
             [static_cast<std::size_t>(gold.assignment[i] - 1)]++;
    }
    return table;
}

double entropy(const std::vector<std::size_t>& sizes, std::size_t n) {
    double h = 0.0;
    for (std::size_t s : sizes) {
        if (s == 0) continue;
        const double p = static_cast<double>(s) / static_cast<double>(n);
        h -= p * std::log(p);
    }
    return h;
}

}  // namespace

double nmi(const Partition& pred, const Partition& gold) {
    check_same_size(pred, gold);
    const std::size_t n = pred.assignment.size();
    const auto table = contingency(pred, gold);
    std::vector<std::size_t> row_sum(table.size(), 0), col_sum(table[0].size(), 0);
    for (std::size_t i = 0; i < table.size(); ++i) {
        for (std::size_t j = 0; j < table[i].size(); ++j) {
            row_sum[i] += table[i][j];
            col_sum[j] += table[i][j];
        }
    }
    const double hp = entropy(row_sum, n);
    const double hg = entropy(col_sum, n);
    if (hp == 0.0 && hg == 0.0) return 1.0;
    if (hp == 0.0 || hg == 0.0) return 0.0;
    double mi = 0.0;
    for (std::size_t i = 0; i < table.size(); ++i) {
        for (std::size_t j = 0; j < table[i].size(); ++j) {
            if (table[i][j] == 0) continue;
            const double pij = static_cast<double>(table[i][j]) / static_cast<double>(n);
            const double pi = static_cast<double>(row_sum[i]) / static_cast<double>(n);
            const double pj = static_cast<double>(col_sum[j]) / static_cast<double>(n);
            // Split logs so identical partitions accumulate exactly the
            // entropy terms and the ratio comes out as exactly 1.
            mi += pij * (std::log(pij) - std::log(pi) - std::log(pj));
        }
    }
    return mi / ((hp + hg) / 2.0);
}

std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
    // O(n^3) potentials formulation (Jonker-Volgenant style row augmentation).
    const int n = static_cast<int>(cost.size());
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n) + 1, std::numeric_limits<double>::infinity());
        std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const int i0 = p[static_cast<std::size_t>(j0)];
            double delta = std::numeric_limits<double>::infinity();
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = cost[static_cast<std::size_t>(i0 - 1)][static_cast<std::size_t>(j - 1)] -
                                   u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> assignment(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= n; ++j) {
        assignment[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
    }
    return assignment;
}

double one_to_one(const Partition& pred, const Partition& gold) {
    check_same_size(pred, gold);
    const std::size_t n = pred.assignment.size();
    const auto table = contingency(pred, gold);
    const std::size_t dim = std::max(table.size(), table[0].size());
    std::vector<std::vector<double>> cost(dim, std::vector<double>(dim, 0.0));
    for (std::size_t i = 0; i < table.size(); ++i) {
        for (std::size_t j = 0; j < table[i].size(); ++j) {
            cost[i][j] = -static_cast<double>(table[i][j]);
        }
    }
    const auto match = hungarian(cost);
    std::size_t overlap = 0;
    for (std::size_t i = 0; i < table.size(); ++i) {
        const std::size_t j = static_cast<std::size_t>(match[i]);
        if (j < table[i].size()) overlap += table[i][j];
    }
    return 100.0 * static_cast<double>(overlap) / static_cast<double>(n);
}

double loc3(const Partition& pred, const Partition& gold) {
    check_same_size(pred, gold);
    const std::size_t n = pred.assignment.size();
    std::size_t agree = 0, total = 0;
    for (std::size_t i = 1; i < n; ++i) {
        for (std::size_t d = 1; d <= 3 && d <= i; ++d) {
            const std::size_t j = i - d;
            const bool same_pred = pred.assignment[i] == pred.assignment[j];
            const bool same_gold = gold.assignment[i] == gold.assignment[j];
            ++total;
            if (same_pred == same_gold) ++agree;
        }
    }
    if (total == 0) return 100.0;  // single-message conversation
    return 100.0 * static_cast<double>(agree) / static_cast<double>(total);
}

double shen_f(const Partition& pred, const Partition& gold) {
    check_same_size(pred, gold);
    const std::size_t n = pred.assignment.size();
    const auto table = contingency(pred, gold);
    std::vector<std::size_t> pred_size(table.size(), 0), gold_size(table[0].size(), 0);
    for (std::size_t i = 0; i < table.size(); ++i) {
        for (std::size_t j = 0; j < table[i].size(); ++j) {
            pred_size[i] += table[i][j];
            gold_size[j] += table[i][j];
        }
    }
    double score = 0.0;
    for (std::size_t j = 0; j < gold_size.size(); ++j) {
        double best = 0.0;
        for (std::size_t i = 0; i < pred_size.size(); ++i) {
            const double f = 2.0 * static_cast<double>(table[i][j]) /
                             static_cast<double>(gold_size[j] + pred_size[i]);
            best = std::max(best, f);
        }
        // Weight by raw counts and divide once so a perfect match sums to
        // exactly n and scores exactly 100.
        score += static_cast<double>(gold_size[j]) * best;
    }
    return 100.0 * score / static_cast<double>(n);
}

double session_count_mse(const std::vector<Partition>& preds, const std::vector<Partition>& golds) {
    if (preds.size() != golds.size()) throw std::invalid_argument("session_count_mse: length mismatch");
    if (preds.empty()) throw std::invalid_argument("session_count_mse: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double d = static_cast<double>(preds[i].session_count() - golds[i].session_count());
        sum += d * d;
    }
    return sum / static_cast<double>(preds.size());
}

MetricReport evaluate_partitions(const std::vector<Partition>& preds,
                                 const std::vector<Partition>& golds) {
    if (preds.size() != golds.size()) throw std::invalid_argument("evaluate_partitions: length mismatch");
    if (preds.empty()) throw std::invalid_argument("evaluate_partitions: empty input");
    MetricReport report;
    report.conversations = preds.size();
    for (std::size_t i = 0; i < preds.size(); ++i) {
        report.nmi += 100.0 * nmi(preds[i], golds[i]);
        report.one_to_one += one_to_one(preds[i], golds[i]);
        report.loc3 += loc3(preds[i], golds[i]);
        report.shen_f += shen_f(preds[i], golds[i]);
        report.messages += preds[i].assignment.size();
    }
    const double inv = 1.0 / static_cast<double>(preds.size());
    report.nmi *= inv;
    report.one_to_one *= inv;
    report.loc3 *= inv;
    report.shen_f *= inv;
    report.mse = session_count_mse(preds, golds);
    return report;
}

double hits_at_k(const std::vector<int>& gold_ranks, int k) {
    if (gold_ranks.empty()) throw std::invalid_argument("hits_at_k: no instances");
    std::size_t hits = 0;
    for (int r : gold_ranks) {
        if (r < k) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(gold_ranks.size());
}

double mrr(const std::vector<int>& gold_ranks) {
    if (gold_ranks.empty()) throw std::invalid_argument("mrr: no instances");
    double sum = 0.0;
    for (int r : gold_ranks) sum += 1.0 / static_cast<double>(r + 1);
    return 100.0 * sum / static_cast<double>(gold_ranks.size());
}

}  // namespace disent
