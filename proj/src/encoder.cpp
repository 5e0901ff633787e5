#include "disent/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace disent {

int Vocab::lookup(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? 0 : it->second;
}

std::vector<int> Vocab::lookup_all(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(lookup(t));
    return ids;
}

Vocab Vocab::build(const Corpus& corpus) {
    std::vector<std::string> uniq;
    {
        std::unordered_map<std::string, bool> seen;
        for (const auto& conv : corpus.conversations) {
            for (const auto& m : conv.messages) {
                for (const auto& t : m.tokens) {
                    if (!seen[t]) {
                        seen[t] = true;
                        uniq.push_back(t);
                    }
                }
            }
        }
    }
    std::sort(uniq.begin(), uniq.end());
    Vocab v;
    v.words.reserve(uniq.size() + 1);
    v.words.push_back("<unk>");
    for (auto& w : uniq) v.words.push_back(std::move(w));
    for (int i = 0; i < static_cast<int>(v.words.size()); ++i) v.index[v.words[static_cast<std::size_t>(i)]] = i;
    return v;
}

EncoderParams EncoderParams::init(int vocab_size, int dim, std::uint64_t seed) {
    if (vocab_size < 1 || dim < 1) throw std::invalid_argument("encoder: vocab_size and dim must be positive");
    EncoderParams p;
    p.vocab_size = vocab_size;
    p.dim = dim;
    p.data.assign(p.size(), 0.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> emb_dist(-0.1, 0.1);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    std::uniform_real_distribution<double> proj_dist(-scale, scale);
    for (std::size_t i = p.emb_off(); i < p.proj_off(); ++i) p.data[i] = emb_dist(rng);
    for (std::size_t i = p.proj_off(); i < p.bias_off(); ++i) p.data[i] = proj_dist(rng);
    // biases zero
    for (std::size_t i = p.attn_w_off(); i < p.attn_b_off(); ++i) p.data[i] = proj_dist(rng);
    return p;
}

void encode_message(const EncoderParams& p, const std::vector<int>& ids, MessageCache& cache) {
    if (ids.empty()) throw std::invalid_argument("encode_message: empty token list");
    const int d = p.dim;
    cache.ids = ids;
    cache.mean.assign(static_cast<std::size_t>(d), 0.0);
    for (int tok : ids) {
        const double* e = p.emb(tok);
        for (int i = 0; i < d; ++i) cache.mean[static_cast<std::size_t>(i)] += e[i];
    }
    const double inv = 1.0 / static_cast<double>(ids.size());
    for (int i = 0; i < d; ++i) cache.mean[static_cast<std::size_t>(i)] *= inv;
    cache.out.assign(static_cast<std::size_t>(d), 0.0);
    const double* bias = p.bias();
    for (int i = 0; i < d; ++i) {
        const double* row = p.proj_row(i);
        double z = bias[i];
        for (int j = 0; j < d; ++j) z += row[j] * cache.mean[static_cast<std::size_t>(j)];
        cache.out[static_cast<std::size_t>(i)] = std::tanh(z);
    }
}

void encode_message_backward(const EncoderParams& p, const MessageCache& cache,
                             const double* dout, Grad& g) {
    const int d = p.dim;
    std::vector<double> dpre(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        const double o = cache.out[static_cast<std::size_t>(i)];
        dpre[static_cast<std::size_t>(i)] = dout[i] * (1.0 - o * o);
    }
    double* gbias = g.data.data() + p.bias_off();
    double* gproj = g.data.data() + p.proj_off();
    std::vector<double> dmean(static_cast<std::size_t>(d), 0.0);
    for (int i = 0; i < d; ++i) {
        gbias[i] += dpre[static_cast<std::size_t>(i)];
        const double* row = p.proj_row(i);
        double* grow = gproj + static_cast<std::size_t>(i) * d;
        const double dp = dpre[static_cast<std::size_t>(i)];
        for (int j = 0; j < d; ++j) {
            grow[j] += dp * cache.mean[static_cast<std::size_t>(j)];
            dmean[static_cast<std::size_t>(j)] += dp * row[j];
        }
    }
    const double inv = 1.0 / static_cast<double>(cache.ids.size());
    for (int tok : cache.ids) {
        double* ge = g.data.data() + p.emb_off() + static_cast<std::size_t>(tok) * d;
        for (int j = 0; j < d; ++j) ge[j] += dmean[static_cast<std::size_t>(j)] * inv;
    }
}

void encode_session(const EncoderParams& p, const std::vector<Vec>& vecs, SessionCache& cache) {
    if (vecs.empty()) throw std::invalid_argument("encode_session: empty session");
    const int d = p.dim;
    const std::size_t n = vecs.size();
    cache.u.resize(n);
    cache.alpha.resize(n);
    const double* w = p.attn_w();
    const double b = p.attn_b();
    double umax = -1e300;
    for (std::size_t j = 0; j < n; ++j) {
        double a = b;
        for (int i = 0; i < d; ++i) a += w[i] * vecs[j][static_cast<std::size_t>(i)];
        cache.u[j] = std::tanh(a);
        umax = std::max(umax, cache.u[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        cache.alpha[j] = std::exp(cache.u[j] - umax);
        denom += cache.alpha[j];
    }
    for (std::size_t j = 0; j < n; ++j) cache.alpha[j] /= denom;
    cache.out.assign(static_cast<std::size_t>(d), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const double a = cache.alpha[j];
        for (int i = 0; i < d; ++i) cache.out[static_cast<std::size_t>(i)] += a * vecs[j][static_cast<std::size_t>(i)];
    }
}

void encode_session_backward(const EncoderParams& p, const std::vector<Vec>& vecs,
                             const SessionCache& cache, const Vec& dout, Grad& g,
                             std::vector<Vec>& dvecs) {
    const int d = p.dim;
    const std::size_t n = vecs.size();
    std::vector<double> dalpha(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (int i = 0; i < d; ++i) s += dout[static_cast<std::size_t>(i)] * vecs[j][static_cast<std::size_t>(i)];
        dalpha[j] = s;
        const double a = cache.alpha[j];
        for (int i = 0; i < d; ++i) dvecs[j][static_cast<std::size_t>(i)] += a * dout[static_cast<std::size_t>(i)];
    }
    double mix = 0.0;
    for (std::size_t j = 0; j < n; ++j) mix += cache.alpha[j] * dalpha[j];
    const double* w = p.attn_w();
    double* gw = g.data.data() + p.attn_w_off();
    double* gb = g.data.data() + p.attn_b_off();
    for (std::size_t j = 0; j < n; ++j) {
        const double du = cache.alpha[j] * (dalpha[j] - mix);
        const double da = du * (1.0 - cache.u[j] * cache.u[j]);  // through tanh
        *gb += da;
        for (int i = 0; i < d; ++i) {
            gw[i] += da * vecs[j][static_cast<std::size_t>(i)];
            dvecs[j][static_cast<std::size_t>(i)] += da * w[i];
        }
    }
}

double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double bce_loss(double logit, int label) {
    // softplus(logit) - label * logit, stable for large |logit|
    const double sp = logit > 0.0 ? logit + std::log1p(std::exp(-logit)) : std::log1p(std::exp(logit));
    return sp - static_cast<double>(label) * logit;
}

double bce_dlogit(double logit, int label) {
    return sigmoid(logit) - static_cast<double>(label);
}

void Adam::step(std::vector<double>& w, const std::vector<double>& g) {
    if (m.size() != w.size()) {
        m.assign(w.size(), 0.0);
        v.assign(w.size(), 0.0);
        t = 0;
    }
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
}

void sgd_step(std::vector<double>& w, const std::vector<double>& g, double lr) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
}

void save_checkpoint(const std::string& path, const Vocab& vocab, const EncoderParams& params) {
    nlohmann::json j;
    j["version"] = 1;
    j["numeric_width"] = "float64";
    j["dim"] = params.dim;
    j["vocab"] = vocab.words;
    j["data"] = params.data;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    out << j.dump();
}

void load_checkpoint(const std::string& path, Vocab& vocab, EncoderParams& params) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    nlohmann::json j;
    in >> j;
    if (j.at("version").get<int>() != 1) throw std::runtime_error("unsupported checkpoint version");
    vocab.words = j.at("vocab").get<std::vector<std::string>>();
    vocab.index.clear();
    for (int i = 0; i < static_cast<int>(vocab.words.size()); ++i) {
        vocab.index[vocab.words[static_cast<std::size_t>(i)]] = i;
    }
    params.dim = j.at("dim").get<int>();
    params.vocab_size = static_cast<int>(vocab.words.size());
    params.data = j.at("data").get<std::vector<double>>();
    if (params.data.size() != params.size()) throw std::runtime_error("checkpoint: parameter size mismatch");
}

}  // namespace disent
