// Command-line front end: corpus generation, pseudo-data construction,
// training, co-training, inference, and evaluation as independent
// subcommands. Every run writes a manifest with the effective config, the
// seeds, and an FNV-1a hash of each artifact it produced.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "disent/corpus.hpp"
#include "disent/cotrain.hpp"
#include "disent/encoder.hpp"
#include "disent/metrics.hpp"
#include "disent/pair_model.hpp"
#include "disent/respsel.hpp"
#include "disent/session_model.hpp"
#include "disent/two_step.hpp"

using nlohmann::json;
using nlohmann::ordered_json;
using namespace disent;

namespace {

// ---------------------------------------------------------------------------
// Run configuration: one JSON document, every flag maps onto a field.
// Flags given on the command line win over values from --config.
// ---------------------------------------------------------------------------

struct RunConfig {
    int dim = 32;
    double pair_lr = 1e-5;          // message-pair classifier
    double session_init_lr = 1e-4;  // session classifier initialization
    double rl_lr = 1e-5;            // session classifier policy gradient
    double gamma = 0.6;             // pair-reward weight in the mixed reward
    int iterations = 3;             // co-training outer iterations
    int lookback = 3;               // preceding session-mates harvested per message
    int min_overlap = 2;            // non-stopword overlap filter for harvested pairs
    int session_init_epochs = 5;
    int pair_epochs = 2;
    int rl_passes = 2;
    int episode_batch = 16;
    int rl_eval_every = 0;
    bool early_stop = true;
    double pair_neg_ratio = 2.33;
    double session_neg_ratio = 2.5;
    double threshold = 0.5;
    int window = 0;  // 0 = unlimited lookback for the greedy decoder
    int epochs = 5;
    int batch_size = 64;
    int candidates = 10;
    std::uint64_t seed = 1;
};

ordered_json config_to_json(const RunConfig& c) {
    ordered_json j;
    j["dim"] = c.dim;
    j["pair_lr"] = c.pair_lr;
    j["session_init_lr"] = c.session_init_lr;
    j["rl_lr"] = c.rl_lr;
    j["gamma"] = c.gamma;
    j["iterations"] = c.iterations;
    j["lookback"] = c.lookback;
    j["min_overlap"] = c.min_overlap;
    j["session_init_epochs"] = c.session_init_epochs;
    j["pair_epochs"] = c.pair_epochs;
    j["rl_passes"] = c.rl_passes;
    j["episode_batch"] = c.episode_batch;
    j["rl_eval_every"] = c.rl_eval_every;
    j["early_stop"] = c.early_stop;
    j["pair_neg_ratio"] = c.pair_neg_ratio;
    j["session_neg_ratio"] = c.session_neg_ratio;
    j["threshold"] = c.threshold;
    j["window"] = c.window;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["candidates"] = c.candidates;
    j["seed"] = c.seed;
    return j;
}

void config_from_json(RunConfig& c, const json& j) {
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("dim", c.dim);
    get("pair_lr", c.pair_lr);
    get("session_init_lr", c.session_init_lr);
    get("rl_lr", c.rl_lr);
    get("gamma", c.gamma);
    get("iterations", c.iterations);
    get("lookback", c.lookback);
    get("min_overlap", c.min_overlap);
    get("session_init_epochs", c.session_init_epochs);
    get("pair_epochs", c.pair_epochs);
    get("rl_passes", c.rl_passes);
    get("episode_batch", c.episode_batch);
    get("rl_eval_every", c.rl_eval_every);
    get("early_stop", c.early_stop);
    get("pair_neg_ratio", c.pair_neg_ratio);
    get("session_neg_ratio", c.session_neg_ratio);
    get("threshold", c.threshold);
    get("window", c.window);
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("candidates", c.candidates);
    get("seed", c.seed);
}

void validate_config(const RunConfig& c) {
    if (c.dim <= 0) throw std::runtime_error("config: dim must be > 0");
    if (c.pair_lr < 0 || c.session_init_lr < 0 || c.rl_lr < 0) {
        throw std::runtime_error("config: learning rates must be >= 0");
    }
    if (c.gamma < 0.0 || c.gamma > 1.0) throw std::runtime_error("config: gamma must lie in [0,1]");
    if (c.iterations < 0) throw std::runtime_error("config: iterations must be >= 0");
    if (c.candidates < 2) throw std::runtime_error("config: candidates must be >= 2");
}

// ---------------------------------------------------------------------------
// Manifest: config snapshot + seed + FNV-1a 64 hash per artifact.
// ---------------------------------------------------------------------------

std::string fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot hash file: " + path);
    std::uint64_t h = 1469598103934665603ull;
    char buf[1 << 15];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

struct Manifest {
    std::string command;
    const RunConfig* config = nullptr;
    std::vector<std::string> artifacts;
    std::string path;  // empty: derive from the first artifact

    void add(const std::string& artifact) { artifacts.push_back(artifact); }

    void write() const {
        ordered_json j;
        j["command"] = command;
        j["config"] = config_to_json(*config);
        j["artifacts"] = ordered_json::object();
        for (const auto& a : artifacts) j["artifacts"][a] = fnv1a64_file(a);
        std::string dest = path;
        if (dest.empty()) {
            dest = artifacts.empty() ? "manifest.json" : artifacts.front() + ".manifest.json";
        }
        std::ofstream out(dest);
        if (!out) throw std::runtime_error("cannot write manifest: " + dest);
        out << j.dump(2) << '\n';
    }
};

// ---------------------------------------------------------------------------
// Shared helpers.
// ---------------------------------------------------------------------------

void write_json_report(const ordered_json& j, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report: " + path);
    out << j.dump(2) << '\n';
}

ordered_json report_to_json(const TrainReport& r) {
    ordered_json j;
    j["epoch_loss"] = r.epoch_loss;
    j["final_accuracy"] = r.final_accuracy;
    return j;
}

ordered_json metrics_to_json(const MetricReport& m) {
    ordered_json j;
    j["nmi"] = m.nmi;
    j["one_to_one"] = m.one_to_one;
    j["loc3"] = m.loc3;
    j["shen_f"] = m.shen_f;
    j["mse"] = m.mse;
    j["conversations"] = m.conversations;
    j["messages"] = m.messages;
    return j;
}

std::vector<Partition> gold_partitions(const Corpus& corpus) {
    std::vector<Partition> golds;
    for (const auto& conv : corpus.conversations) {
        if (!conv.gold) throw std::runtime_error("conversation " + conv.conv_id + " has no gold sessions");
        golds.push_back(*conv.gold);
    }
    return golds;
}

void fill_predicted(std::vector<RespSelInstance>& instances, const SessionModelParams& sp) {
    for (auto& inst : instances) {
        inst.predicted = disentangle_e2e(sp, inst.conversation, DecodeMode::argmax);
    }
}

// ---------------------------------------------------------------------------
// Subcommands.
// ---------------------------------------------------------------------------

int cmd_gen_synth(const RunConfig& cfg, const SynthConfig& synth, const std::string& out,
                  Manifest manifest) {
    Corpus corpus = generate_synthetic(synth);
    write_corpus(corpus, out);
    manifest.add(out);
    manifest.write();
    std::cerr << "wrote " << corpus.conversations.size() << " conversations to " << out << "\n";
    (void)cfg;
    return 0;
}

int cmd_build_pseudo(const RunConfig& cfg, const std::string& mode, const std::string& corpus_path,
                     const std::string& out, int generated, Manifest manifest) {
    Corpus corpus = load_corpus(corpus_path);
    if (mode == "pair") {
        PairDataset ds = build_pseudo_pairs_ret(corpus, cfg.pair_neg_ratio, cfg.seed);
        if (generated > 0) {
            augment_generated(ds, corpus, make_topic_echo_generator(cfg.seed + 1), generated,
                              cfg.seed + 2);
        }
        write_pair_dataset(ds, out);
        std::cerr << "wrote " << ds.instances.size() << " pair instances to " << out << "\n";
    } else {
        SessionDataset ds = build_pseudo_sessions(corpus, cfg.session_neg_ratio, cfg.seed);
        write_session_dataset(ds, out);
        std::cerr << "wrote " << ds.instances.size() << " session instances to " << out << "\n";
    }
    manifest.add(out);
    manifest.write();
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& mode, const std::string& corpus_path,
              const std::string& dataset_path, const std::string& out,
              const std::string& report_path, const std::string& source_str,
              const std::string& session_ckpt, Manifest manifest) {
    Corpus corpus = load_corpus(corpus_path);
    Vocab vocab = Vocab::build(corpus);
    TrainReport report;
    if (mode == "pair") {
        PairModelParams params{vocab, EncoderParams::init(vocab.size(), cfg.dim, cfg.seed)};
        PairDataset ds = load_pair_dataset(dataset_path, corpus);
        report = train_pair(params, ds, cfg.epochs, cfg.pair_lr, cfg.seed + 1, cfg.batch_size);
        save_checkpoint(out, params.vocab, params.enc);
    } else if (mode == "session") {
        SessionModelParams params{vocab, EncoderParams::init(vocab.size(), cfg.dim, cfg.seed)};
        SessionDataset ds = load_session_dataset(dataset_path, corpus);
        report = train_session_init(params, ds, cfg.epochs, cfg.session_init_lr, cfg.seed + 1,
                                    cfg.batch_size);
        save_checkpoint(out, params.vocab, params.enc);
    } else {  // respsel
        RespSelParams params{vocab, EncoderParams::init(vocab.size(), cfg.dim, cfg.seed)};
        auto instances = build_respsel_dataset(corpus, cfg.candidates, cfg.seed + 3);
        const PartitionSource source = partition_source_from_string(source_str);
        if (source == PartitionSource::predicted) {
            if (session_ckpt.empty()) {
                throw std::runtime_error(
                    "train respsel --source predicted needs --session-checkpoint");
            }
            SessionModelParams sp;
            load_checkpoint(session_ckpt, sp.vocab, sp.enc);
            fill_predicted(instances, sp);
        }
        report = train_respsel(params, instances, source, cfg.epochs, cfg.pair_lr, cfg.seed + 4);
        save_checkpoint(out, params.vocab, params.enc);
    }
    manifest.add(out);
    ordered_json j = report_to_json(report);
    if (!report_path.empty() && report_path != "-") {
        write_json_report(j, report_path);
        manifest.add(report_path);
    } else {
        write_json_report(j, "-");
    }
    manifest.write();
    return 0;
}

int cmd_cotrain(const RunConfig& cfg, const std::string& train_path, const std::string& dev_path,
                const std::string& pair_in, const std::string& session_in,
                const std::string& pair_ds_path, const std::string& session_ds_path,
                const std::string& pair_out, const std::string& session_out,
                const std::string& report_path, Manifest manifest) {
    Corpus train = load_corpus(train_path);
    std::optional<Corpus> dev;
    if (!dev_path.empty()) dev = load_corpus(dev_path);

    PairModelParams pair_params;
    load_checkpoint(pair_in, pair_params.vocab, pair_params.enc);
    SessionModelParams session_params;
    load_checkpoint(session_in, session_params.vocab, session_params.enc);

    PairDataset d_m = load_pair_dataset(pair_ds_path, train);
    SessionDataset d_t = load_session_dataset(session_ds_path, train);

    CotrainConfig cc;
    cc.iterations = cfg.iterations;
    cc.reward.gamma = cfg.gamma;
    cc.harvest.lookback = cfg.lookback;
    cc.harvest.min_overlap = cfg.min_overlap;
    cc.rl_passes = cfg.rl_passes;
    cc.episode_batch = cfg.episode_batch;
    cc.rl_lr = cfg.rl_lr;
    cc.session_init_lr = cfg.session_init_lr;
    cc.session_init_epochs = cfg.session_init_epochs;
    cc.pair_lr = cfg.pair_lr;
    cc.pair_epochs = cfg.pair_epochs;
    cc.seed = cfg.seed;
    cc.early_stop = cfg.early_stop;
    cc.rl_eval_every = cfg.rl_eval_every;

    CotrainResult result =
        cotrain_loop(train, dev ? &*dev : nullptr, pair_params, session_params, d_t, d_m, cc);

    save_checkpoint(pair_out, pair_params.vocab, pair_params.enc);
    save_checkpoint(session_out, session_params.vocab, session_params.enc);
    manifest.add(pair_out);
    manifest.add(session_out);

    ordered_json j = ordered_json::array();
    for (const auto& r : result.reports) {
        ordered_json e;
        e["iter"] = r.iteration;
        e["mean_reward"] = r.mean_reward;
        e["harvested_pairs"] = r.harvested_pairs;
        if (r.pair_f1) e["pair_f1"] = *r.pair_f1;
        if (r.metrics) e["metrics"] = metrics_to_json(*r.metrics);
        j.push_back(e);
    }
    if (!report_path.empty() && report_path != "-") {
        write_json_report(j, report_path);
        manifest.add(report_path);
    } else {
        write_json_report(j, "-");
    }
    manifest.write();
    return 0;
}

int cmd_disentangle(const RunConfig& cfg, const std::string& mode, const std::string& corpus_path,
                    const std::string& ckpt, const std::string& out, Manifest manifest) {
    Corpus corpus = load_corpus(corpus_path);
    std::vector<std::pair<std::string, Partition>> parts;
    if (mode == "two-step") {
        PairModelParams params;
        load_checkpoint(ckpt, params.vocab, params.enc);
        GreedyConfig gc;
        gc.threshold = cfg.threshold;
        if (cfg.window > 0) gc.window = cfg.window;
        for (const auto& conv : corpus.conversations) {
            parts.emplace_back(conv.conv_id, greedy_disentangle(params, conv, gc));
        }
    } else {  // e2e
        SessionModelParams params;
        load_checkpoint(ckpt, params.vocab, params.enc);
        for (const auto& conv : corpus.conversations) {
            parts.emplace_back(conv.conv_id, disentangle_e2e(params, conv, DecodeMode::argmax));
        }
    }
    write_partitions(parts, out);
    manifest.add(out);
    manifest.write();
    std::cerr << "wrote " << parts.size() << " partitions to " << out << "\n";
    return 0;
}

int cmd_evaluate(const std::string& pred_path, const std::string& gold_path,
                 const std::string& corpus_path, const std::string& report_path,
                 Manifest manifest) {
    auto preds_named = load_partitions(pred_path);
    std::vector<std::pair<std::string, Partition>> golds_named;
    if (!gold_path.empty()) {
        golds_named = load_partitions(gold_path);
    } else if (!corpus_path.empty()) {
        Corpus corpus = load_corpus(corpus_path);
        for (const auto& conv : corpus.conversations) {
            if (!conv.gold) {
                throw std::runtime_error("conversation " + conv.conv_id + " has no gold sessions");
            }
            golds_named.emplace_back(conv.conv_id, *conv.gold);
        }
    } else {
        throw std::runtime_error("evaluate needs --gold or --corpus");
    }
    std::unordered_map<std::string, const Partition*> gold_index;
    for (const auto& [id, p] : golds_named) gold_index[id] = &p;
    std::vector<Partition> preds, golds;
    for (const auto& [id, p] : preds_named) {
        auto it = gold_index.find(id);
        if (it == gold_index.end()) {
            throw std::runtime_error("no gold partition for conversation " + id);
        }
        preds.push_back(p);
        golds.push_back(*it->second);
    }
    MetricReport m = evaluate_partitions(preds, golds);

    ordered_json j = metrics_to_json(m);
    if (!report_path.empty() && report_path != "-") {
        write_json_report(j, report_path);
        manifest.add(report_path);
    } else {
        write_json_report(j, "-");
    }
    std::printf("%-14s %10s\n", "metric", "value");
    std::printf("%-14s %10.2f\n", "NMI", m.nmi);
    std::printf("%-14s %10.2f\n", "1-1", m.one_to_one);
    std::printf("%-14s %10.2f\n", "Loc3", m.loc3);
    std::printf("%-14s %10.2f\n", "Shen-F", m.shen_f);
    std::printf("%-14s %10.4f\n", "MSE", m.mse);
    manifest.write();
    return 0;
}

int cmd_respsel_eval(const RunConfig& cfg, const std::string& corpus_path, const std::string& ckpt,
                     const std::string& source_str, const std::string& session_ckpt,
                     const std::string& report_path, Manifest manifest) {
    Corpus corpus = load_corpus(corpus_path);
    RespSelParams params;
    load_checkpoint(ckpt, params.vocab, params.enc);
    auto instances = build_respsel_dataset(corpus, cfg.candidates, cfg.seed + 3);
    const PartitionSource source = partition_source_from_string(source_str);
    if (source == PartitionSource::predicted) {
        if (session_ckpt.empty()) {
            throw std::runtime_error("respsel-eval --source predicted needs --session-checkpoint");
        }
        SessionModelParams sp;
        load_checkpoint(session_ckpt, sp.vocab, sp.enc);
        fill_predicted(instances, sp);
    }
    RespSelEval eval = eval_respsel(params, instances, source);
    ordered_json j;
    j["hits1"] = eval.hits1;
    j["hits2"] = eval.hits2;
    j["hits5"] = eval.hits5;
    j["mrr"] = eval.mrr;
    j["instances"] = instances.size();
    if (!report_path.empty() && report_path != "-") {
        write_json_report(j, report_path);
        manifest.add(report_path);
    } else {
        write_json_report(j, "-");
    }
    manifest.write();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    RunConfig cfg;
    // Pre-scan for --config so file values become defaults that explicit
    // flags then override.
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            std::ifstream in(argv[i + 1]);
            if (!in) {
                std::cerr << "error: cannot open config file " << argv[i + 1] << "\n";
                return 1;
            }
            try {
                config_from_json(cfg, json::parse(in));
            } catch (const std::exception& e) {
                std::cerr << "error: bad config file: " << e.what() << "\n";
                return 1;
            }
        }
    }

    CLI::App app{"Unsupervised conversation disentanglement toolkit"};
    app.require_subcommand(1);
    std::string config_path, manifest_path;
    app.add_option("--config", config_path, "JSON run-config file; flags override its values");
    app.add_option("--manifest", manifest_path,
                   "manifest output path (default: first artifact + .manifest.json)");

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", cfg.seed, "RNG seed");
        sub->add_option("--dim", cfg.dim, "encoder dimension");
    };

    // gen-synth
    SynthConfig synth;
    std::string out, corpus_path, dataset_path, report_path;
    auto* gen = app.add_subcommand("gen-synth", "generate a synthetic labeled corpus");
    gen->add_option("--out", out, "corpus JSONL output")->required();
    gen->add_option("--n", synth.n_conversations, "number of conversations");
    gen->add_option("--vocab", synth.vocab_size, "topic vocabulary size");
    gen->add_option("--sessions-min", synth.session_count_min, "min sessions per conversation");
    gen->add_option("--sessions-max", synth.session_count_max, "max sessions per conversation");
    gen->add_option("--msgs-min", synth.messages_per_session_min, "min messages per session");
    gen->add_option("--msgs-max", synth.messages_per_session_max, "max messages per session");
    gen->add_option("--topic-words", synth.topic_words_per_session, "topic words per session");
    gen->add_option("--speakers", synth.speakers_per_session, "speakers per session");
    gen->add_option("--violation-rate", synth.speaker_violation_rate,
                    "rate of speakers crossing sessions");
    gen->add_option("--gen-seed", synth.seed, "corpus RNG seed (defaults to --seed)");
    add_common(gen);

    // build-pseudo
    std::string mode;
    int generated = 0;
    auto* bp = app.add_subcommand("build-pseudo", "build pseudo-labeled training data");
    bp->add_option("mode", mode, "pair | session")
        ->required()
        ->check(CLI::IsMember({"pair", "session"}));
    bp->add_option("--corpus", corpus_path, "corpus JSONL")->required();
    bp->add_option("--out", out, "dataset JSONL output")->required();
    bp->add_option("--pair-neg-ratio", cfg.pair_neg_ratio, "negatives per positive (pair)");
    bp->add_option("--session-neg-ratio", cfg.session_neg_ratio, "negatives per positive (session)");
    bp->add_option("--generated", generated, "extra generator-backed positive pairs");
    add_common(bp);

    // train
    std::string source_str = "none", session_ckpt;
    auto* tr = app.add_subcommand("train", "train a model from a dataset");
    tr->add_option("mode", mode, "pair | session | respsel")
        ->required()
        ->check(CLI::IsMember({"pair", "session", "respsel"}));
    tr->add_option("--corpus", corpus_path, "corpus JSONL (vocabulary + message resolution)")
        ->required();
    tr->add_option("--dataset", dataset_path, "dataset JSONL (pair/session modes)");
    tr->add_option("--out", out, "checkpoint output")->required();
    tr->add_option("--report", report_path, "training report JSON ('-' = stdout)");
    tr->add_option("--epochs", cfg.epochs, "training epochs");
    tr->add_option("--pair-lr", cfg.pair_lr, "pair / respsel learning rate");
    tr->add_option("--session-init-lr", cfg.session_init_lr, "session learning rate");
    tr->add_option("--batch", cfg.batch_size, "mini-batch size");
    tr->add_option("--source", source_str, "respsel partition source: none | predicted | gold")
        ->check(CLI::IsMember({"none", "predicted", "gold"}));
    tr->add_option("--session-checkpoint", session_ckpt,
                   "disentangler checkpoint for --source predicted");
    tr->add_option("--candidates", cfg.candidates, "respsel candidate-pool size");
    add_common(tr);

    // cotrain
    std::string train_path, dev_path, pair_in, session_in, pair_ds, session_ds, pair_out,
        session_out;
    auto* ct = app.add_subcommand("cotrain", "co-train the pair and session classifiers");
    ct->add_option("--train-corpus", train_path, "training corpus JSONL")->required();
    ct->add_option("--dev-corpus", dev_path, "labeled dev corpus JSONL (optional)");
    ct->add_option("--pair-in", pair_in, "initial pair checkpoint")->required();
    ct->add_option("--session-in", session_in, "initial session checkpoint")->required();
    ct->add_option("--pair-dataset", pair_ds, "pseudo pair dataset JSONL")->required();
    ct->add_option("--session-dataset", session_ds, "pseudo session dataset JSONL")->required();
    ct->add_option("--pair-out", pair_out, "final pair checkpoint")->required();
    ct->add_option("--session-out", session_out, "final session checkpoint")->required();
    ct->add_option("--report", report_path, "iteration report JSON ('-' = stdout)");
    ct->add_option("--iterations", cfg.iterations, "outer iterations");
    ct->add_option("--gamma", cfg.gamma, "pair-reward weight");
    ct->add_option("--lookback", cfg.lookback, "harvest lookback M");
    ct->add_option("--min-overlap", cfg.min_overlap, "harvest overlap threshold");
    ct->add_option("--rl-passes", cfg.rl_passes, "policy-gradient passes per iteration");
    ct->add_option("--episode-batch", cfg.episode_batch, "episodes per update");
    ct->add_option("--rl-lr", cfg.rl_lr, "policy-gradient learning rate");
    ct->add_option("--session-init-lr", cfg.session_init_lr, "session re-init learning rate");
    ct->add_option("--session-init-epochs", cfg.session_init_epochs, "session re-init epochs");
    ct->add_option("--pair-lr", cfg.pair_lr, "pair retraining learning rate");
    ct->add_option("--pair-epochs", cfg.pair_epochs, "pair retraining epochs");
    ct->add_option("--rl-eval-every", cfg.rl_eval_every,
                   "dev evaluations per N episode batches (0 = off)");
    ct->add_flag("--early-stop,!--no-early-stop", cfg.early_stop, "stop on dev Shen-F decline");
    add_common(ct);

    // disentangle
    std::string ckpt;
    auto* dis = app.add_subcommand("disentangle", "split conversations into sessions");
    dis->add_option("mode", mode, "two-step | e2e")
        ->required()
        ->check(CLI::IsMember({"two-step", "e2e"}));
    dis->add_option("--corpus", corpus_path, "corpus JSONL")->required();
    dis->add_option("--checkpoint", ckpt, "model checkpoint")->required();
    dis->add_option("--out", out, "partition JSONL output")->required();
    dis->add_option("--threshold", cfg.threshold, "greedy attach threshold (two-step)");
    dis->add_option("--window", cfg.window, "greedy lookback window, 0 = unlimited (two-step)");
    add_common(dis);

    // evaluate
    std::string pred_path, gold_path;
    auto* ev = app.add_subcommand("evaluate", "score predicted partitions against gold");
    ev->add_option("--pred", pred_path, "predicted partition JSONL")->required();
    ev->add_option("--gold", gold_path, "gold partition JSONL");
    ev->add_option("--corpus", corpus_path, "labeled corpus JSONL (alternative gold source)");
    ev->add_option("--report", report_path, "metric report JSON ('-' = stdout)");

    // respsel-eval
    auto* rs = app.add_subcommand("respsel-eval", "evaluate response selection");
    rs->add_option("--corpus", corpus_path, "labeled corpus JSONL")->required();
    rs->add_option("--checkpoint", ckpt, "response-selection checkpoint")->required();
    rs->add_option("--source", source_str, "partition source: none | predicted | gold")
        ->check(CLI::IsMember({"none", "predicted", "gold"}));
    rs->add_option("--session-checkpoint", session_ckpt,
                   "disentangler checkpoint for --source predicted");
    rs->add_option("--candidates", cfg.candidates, "candidate-pool size");
    rs->add_option("--report", report_path, "eval report JSON ('-' = stdout)");
    add_common(rs);

    CLI11_PARSE(app, argc, argv);

    try {
        validate_config(cfg);
        Manifest manifest;
        manifest.config = &cfg;
        manifest.path = manifest_path;
        if (gen->parsed()) {
            manifest.command = "gen-synth";
            if (gen->count("--gen-seed") == 0) synth.seed = cfg.seed;
            return cmd_gen_synth(cfg, synth, out, std::move(manifest));
        }
        if (bp->parsed()) {
            manifest.command = "build-pseudo " + mode;
            return cmd_build_pseudo(cfg, mode, corpus_path, out, generated, std::move(manifest));
        }
        if (tr->parsed()) {
            manifest.command = "train " + mode;
            if (mode != "respsel" && dataset_path.empty()) {
                throw std::runtime_error("train " + mode + " needs --dataset");
            }
            return cmd_train(cfg, mode, corpus_path, dataset_path, out, report_path, source_str,
                             session_ckpt, std::move(manifest));
        }
        if (ct->parsed()) {
            manifest.command = "cotrain";
            return cmd_cotrain(cfg, train_path, dev_path, pair_in, session_in, pair_ds, session_ds,
                               pair_out, session_out, report_path, std::move(manifest));
        }
        if (dis->parsed()) {
            manifest.command = "disentangle " + mode;
            return cmd_disentangle(cfg, mode, corpus_path, ckpt, out, std::move(manifest));
        }
        if (ev->parsed()) {
            manifest.command = "evaluate";
            return cmd_evaluate(pred_path, gold_path, corpus_path, report_path,
                                std::move(manifest));
        }
        if (rs->parsed()) {
            manifest.command = "respsel-eval";
            return cmd_respsel_eval(cfg, corpus_path, ckpt, source_str, session_ckpt, report_path,
                                    std::move(manifest));
        }
        std::cerr << "error: no subcommand\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
