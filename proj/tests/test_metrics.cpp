#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "disent/metrics.hpp"

using namespace disent;

namespace {

Partition part(std::initializer_list<int> labels) { return Partition::from_labels(labels); }

Partition random_partition(std::mt19937_64& rng, int n, int max_k) {
    std::uniform_int_distribution<int> lab(1, max_k);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (auto& l : labels) l = lab(rng);
    return Partition::from_labels(labels);
}

// Brute-force one-to-one: try every injective mapping of the smaller side.
double brute_one_to_one(const Partition& pred, const Partition& gold) {
    const int kp = pred.session_count();
    const int kg = gold.session_count();
    const int n = static_cast<int>(pred.assignment.size());
    std::vector<std::vector<int>> overlap(static_cast<std::size_t>(kp),
                                          std::vector<int>(static_cast<std::size_t>(kg), 0));
    for (int i = 0; i < n; ++i) {
        overlap[static_cast<std::size_t>(pred.assignment[static_cast<std::size_t>(i)] - 1)]
               [static_cast<std::size_t>(gold.assignment[static_cast<std::size_t>(i)] - 1)]++;
    }
    const int dim = std::max(kp, kg);
    std::vector<int> perm(static_cast<std::size_t>(dim));
    std::iota(perm.begin(), perm.end(), 0);
    int best = 0;
    do {
        int total = 0;
        for (int i = 0; i < kp; ++i) {
            const int j = perm[static_cast<std::size_t>(i)];
            if (j < kg) total += overlap[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
        best = std::max(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return 100.0 * static_cast<double>(best) / static_cast<double>(n);
}

double brute_loc3(const Partition& pred, const Partition& gold) {
    const int n = static_cast<int>(pred.assignment.size());
    int agree = 0, total = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const int d = i - j;
            if (d < 1 || d > 3) continue;
            ++total;
            const bool sp = pred.assignment[static_cast<std::size_t>(i)] ==
                            pred.assignment[static_cast<std::size_t>(j)];
            const bool sg = gold.assignment[static_cast<std::size_t>(i)] ==
                            gold.assignment[static_cast<std::size_t>(j)];
            if (sp == sg) ++agree;
        }
    }
    if (total == 0) return 100.0;
    return 100.0 * agree / total;
}

double brute_shen_f(const Partition& pred, const Partition& gold) {
    const int n = static_cast<int>(pred.assignment.size());
    auto gold_sessions = gold.sessions();
    auto pred_sessions = pred.sessions();
    double score = 0.0;
    for (const auto& gs : gold_sessions) {
        double best = 0.0;
        for (const auto& ps : pred_sessions) {
            int ov = 0;
            for (int a : gs) {
                for (int b : ps) {
                    if (a == b) ++ov;
                }
            }
            best = std::max(best, 2.0 * ov / static_cast<double>(gs.size() + ps.size()));
        }
        score += static_cast<double>(gs.size()) / n * best;
    }
    return 100.0 * score;
}

// Direct contingency-table NMI, independent arithmetic path.
double direct_nmi(const Partition& pred, const Partition& gold) {
    const int n = static_cast<int>(pred.assignment.size());
    const int kp = pred.session_count(), kg = gold.session_count();
    std::vector<int> cp(static_cast<std::size_t>(kp), 0), cg(static_cast<std::size_t>(kg), 0);
    std::vector<std::vector<int>> cj(static_cast<std::size_t>(kp),
                                     std::vector<int>(static_cast<std::size_t>(kg), 0));
    for (int i = 0; i < n; ++i) {
        const auto a = static_cast<std::size_t>(pred.assignment[static_cast<std::size_t>(i)] - 1);
        const auto b = static_cast<std::size_t>(gold.assignment[static_cast<std::size_t>(i)] - 1);
        cp[a]++;
        cg[b]++;
        cj[a][b]++;
    }
    // integer counts first: a trivial partition must get exactly zero entropy
    std::vector<double> pp, pg;
    for (int c : cp) pp.push_back(static_cast<double>(c) / n);
    for (int c : cg) pg.push_back(static_cast<double>(c) / n);
    std::vector<std::vector<double>> pj(static_cast<std::size_t>(kp),
                                        std::vector<double>(static_cast<std::size_t>(kg), 0.0));
    for (std::size_t a = 0; a < pj.size(); ++a) {
        for (std::size_t b = 0; b < pj[a].size(); ++b) pj[a][b] = static_cast<double>(cj[a][b]) / n;
    }
    double hp = 0.0, hg = 0.0, mi = 0.0;
    for (double x : pp) {
        if (x > 0) hp -= x * std::log(x);
    }
    for (double x : pg) {
        if (x > 0) hg -= x * std::log(x);
    }
    for (std::size_t a = 0; a < pj.size(); ++a) {
        for (std::size_t b = 0; b < pj[a].size(); ++b) {
            if (pj[a][b] > 0) mi += pj[a][b] * std::log(pj[a][b] / (pp[a] * pg[b]));
        }
    }
    if (hp == 0.0 && hg == 0.0) return 1.0;
    if (hp == 0.0 || hg == 0.0) return 0.0;
    return mi / (0.5 * (hp + hg));
}

}  // namespace

TEST_CASE("identical partitions hit maxima") {
    auto p = part({1, 1, 2, 3, 2, 1});
    CHECK(nmi(p, p) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(one_to_one(p, p) == doctest::Approx(100.0));
    CHECK(loc3(p, p) == doctest::Approx(100.0));
    CHECK(shen_f(p, p) == doctest::Approx(100.0));
    CHECK(session_count_mse({p}, {p}) == 0.0);
}

TEST_CASE("degenerate NMI conventions") {
    auto single = part({1, 1, 1, 1});
    auto singletons = part({1, 2, 3, 4});
    CHECK(nmi(single, single) == 1.0);
    CHECK(nmi(singletons, single) == 0.0);
    CHECK(nmi(single, singletons) == 0.0);
}

TEST_CASE("independent partitions have zero NMI") {
    CHECK(nmi(part({1, 1, 2, 2}), part({1, 2, 1, 2})) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("one_to_one hand case") {
    CHECK(one_to_one(part({1, 1, 2, 2}), part({1, 1, 1, 2})) == doctest::Approx(75.0));
}

TEST_CASE("loc3 is label-permutation invariant") {
    auto gold = part({1, 1, 2, 2, 1});
    auto pred = part({2, 2, 1, 1, 2});  // same partition, labels swapped
    CHECK(loc3(Partition::from_labels(pred.assignment), gold) == doctest::Approx(100.0));
}

TEST_CASE("loc3 hand case matches brute force") {
    auto pred = part({1, 2, 1, 2});
    auto gold = part({1, 1, 2, 2});
    CHECK(loc3(pred, gold) == doctest::Approx(brute_loc3(pred, gold)));
}

TEST_CASE("shen_f closed-form case") {
    // pred: one big session; gold: two sessions of size 3 each -> 2/3.
    auto pred = part({1, 1, 1, 1, 1, 1});
    auto gold = part({1, 1, 1, 2, 2, 2});
    CHECK(shen_f(pred, gold) == doctest::Approx(100.0 * 2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("session_count_mse") {
    CHECK(session_count_mse({part({1, 1, 2}), part({1, 2})}, {part({1, 2, 2}), part({1, 2})}) ==
          doctest::Approx(0.0));
    CHECK(session_count_mse({part({1, 2, 3}), part({1, 2})}, {part({1, 2, 2}), part({1, 2})}) ==
          doctest::Approx(0.5));
    CHECK_THROWS(session_count_mse({part({1})}, {}));
}

TEST_CASE("metrics match brute-force oracles on random cases") {
    std::mt19937_64 rng(314159);
    std::uniform_int_distribution<int> n_dist(2, 10), k_dist(1, 4);
    for (int trial = 0; trial < 1500; ++trial) {
        const int n = n_dist(rng);
        auto pred = random_partition(rng, n, k_dist(rng));
        auto gold = random_partition(rng, n, k_dist(rng));
        CHECK(one_to_one(pred, gold) == doctest::Approx(brute_one_to_one(pred, gold)).epsilon(1e-12));
        CHECK(loc3(pred, gold) == doctest::Approx(brute_loc3(pred, gold)).epsilon(1e-12));
        CHECK(shen_f(pred, gold) == doctest::Approx(brute_shen_f(pred, gold)).epsilon(1e-12));
        CHECK(std::abs(nmi(pred, gold) - direct_nmi(pred, gold)) < 1e-9);
    }
}

TEST_CASE("metrics are invariant under label permutation of either side") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        std::uniform_int_distribution<int> n_dist(2, 12), k_dist(1, 4);
        const int n = n_dist(rng);
        auto pred = random_partition(rng, n, k_dist(rng));
        auto gold = random_partition(rng, n, k_dist(rng));
        // Relabel pred by reversing label ids, then renumber.
        const int kp = pred.session_count();
        std::vector<int> relabeled;
        for (int l : pred.assignment) relabeled.push_back(kp - l + 1);
        auto pred2 = Partition::from_labels(relabeled);
        CHECK(nmi(pred2, gold) == doctest::Approx(nmi(pred, gold)).epsilon(1e-12));
        CHECK(one_to_one(pred2, gold) == doctest::Approx(one_to_one(pred, gold)).epsilon(1e-12));
        CHECK(loc3(pred2, gold) == doctest::Approx(loc3(pred, gold)).epsilon(1e-12));
        CHECK(shen_f(pred2, gold) == doctest::Approx(shen_f(pred, gold)).epsilon(1e-12));
    }
}

TEST_CASE("mismatched message sets rejected") {
    CHECK_THROWS(nmi(part({1, 2}), part({1, 2, 3})));
    CHECK_THROWS(one_to_one(part({1}), part({1, 1})));
}

TEST_CASE("hits and mrr") {
    CHECK(hits_at_k({0, 0, 0}, 1) == doctest::Approx(100.0));
    CHECK(mrr({0, 0}) == doctest::Approx(100.0));
    // gold always ranked second of 10
    std::vector<int> second(20, 1);
    CHECK(hits_at_k(second, 1) == doctest::Approx(0.0));
    CHECK(hits_at_k(second, 2) == doctest::Approx(100.0));
    CHECK(mrr(second) == doctest::Approx(50.0));
    CHECK_THROWS(hits_at_k({}, 1));
}

TEST_CASE("hungarian solves small known instances") {
    // cost matrix with obvious optimum on the diagonal
    std::vector<std::vector<double>> cost = {{1, 5, 9}, {5, 2, 7}, {9, 7, 3}};
    auto m = hungarian(cost);
    CHECK(m == std::vector<int>{0, 1, 2});
    std::vector<std::vector<double>> cost2 = {{10, 1}, {1, 10}};
    CHECK(hungarian(cost2) == std::vector<int>{1, 0});
}
