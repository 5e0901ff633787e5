#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "disent/corpus.hpp"

namespace disent {

using Vec = std::vector<double>;

// Token index 0 is reserved for unknown words.
struct Vocab {
    std::vector<std::string> words;  // words[0] == "<unk>"
    std::unordered_map<std::string, int> index;

    int size() const { return static_cast<int>(words.size()); }
    int lookup(const std::string& token) const;
    std::vector<int> lookup_all(const std::vector<std::string>& tokens) const;

    static Vocab build(const Corpus& corpus);
};

// Flat parameter block: embedding table (V x d), message projection (d x d),
// projection bias (d), attention vector w (d), attention bias b (scalar).
struct EncoderParams {
    int vocab_size = 0;
    int dim = 0;
    std::vector<double> data;

    std::size_t emb_off() const { return 0; }
    std::size_t proj_off() const { return static_cast<std::size_t>(vocab_size) * dim; }
    std::size_t bias_off() const { return proj_off() + static_cast<std::size_t>(dim) * dim; }
    std::size_t attn_w_off() const { return bias_off() + static_cast<std::size_t>(dim); }
    std::size_t attn_b_off() const { return attn_w_off() + static_cast<std::size_t>(dim); }
    std::size_t size() const { return attn_b_off() + 1; }

    const double* emb(int tok) const { return data.data() + emb_off() + static_cast<std::size_t>(tok) * dim; }
    double* emb(int tok) { return data.data() + emb_off() + static_cast<std::size_t>(tok) * dim; }
    const double* proj_row(int i) const { return data.data() + proj_off() + static_cast<std::size_t>(i) * dim; }
    const double* bias() const { return data.data() + bias_off(); }
    const double* attn_w() const { return data.data() + attn_w_off(); }
    double attn_b() const { return data[attn_b_off()]; }

    // Embeddings uniform in [-0.1, 0.1], projection scaled by 1/sqrt(d),
    // biases and attention weights zero-ish.
    static EncoderParams init(int vocab_size, int dim, std::uint64_t seed);
};

// Gradient accumulator, same layout as EncoderParams::data.
struct Grad {
    std::vector<double> data;

    explicit Grad(const EncoderParams& p) : data(p.size(), 0.0) {}
    void zero() { std::fill(data.begin(), data.end(), 0.0); }
};

struct MessageCache {
    std::vector<int> ids;
    Vec mean;  // mean embedding
    Vec out;   // tanh output
};

struct SessionCache {
    std::vector<double> u;      // tanh attention scores
    std::vector<double> alpha;  // softmax weights
    Vec out;
};

// v = tanh(P * mean(embeddings) + bias). Throws on empty token list.
void encode_message(const EncoderParams& p, const std::vector<int>& ids, MessageCache& cache);
void encode_message_backward(const EncoderParams& p, const MessageCache& cache,
                             const double* dout, Grad& g);

// Self-attention pooling: u_j = tanh(w . v_j + b), alpha = softmax(u),
// out = sum alpha_j v_j. Throws on empty input.
void encode_session(const EncoderParams& p, const std::vector<Vec>& vecs, SessionCache& cache);
// dvecs must be pre-sized to vecs' shape; gradients are accumulated.
void encode_session_backward(const EncoderParams& p, const std::vector<Vec>& vecs,
                             const SessionCache& cache, const Vec& dout, Grad& g,
                             std::vector<Vec>& dvecs);

double dot(const Vec& a, const Vec& b);
double sigmoid(double z);
// Numerically stable binary cross-entropy on a logit.
double bce_loss(double logit, int label);
double bce_dlogit(double logit, int label);

struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::vector<double> m, v;
    long t = 0;

    explicit Adam(double lr_) : lr(lr_) {}
    void step(std::vector<double>& w, const std::vector<double>& g);
};

void sgd_step(std::vector<double>& w, const std::vector<double>& g, double lr);

// Checkpoint container: vocabulary + parameters, JSON, exact double round-trip.
void save_checkpoint(const std::string& path, const Vocab& vocab, const EncoderParams& params);
void load_checkpoint(const std::string& path, Vocab& vocab, EncoderParams& params);

}  // namespace disent
