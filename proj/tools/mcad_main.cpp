// mcad: sketch-and-extrude sequence modeling pipeline.
// Subcommands cover dataset tooling (synth/filter/split), autoencoder
// pre-training, latent-GAN training, generation, reconstruction/completion
// inference, metric reports, and geometry export.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mcad/corpus.hpp"
#include "mcad/geometry.hpp"
#include "mcad/io.hpp"
#include "mcad/metrics.hpp"
#include "mcad/model/gan.hpp"
#include "mcad/threads.hpp"
#include "mcad/version.hpp"

using namespace mcad;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDiverged = 4;

model::ModelConfig model_config_from(const io::Config& cfg) {
    model::ModelConfig m;
    m.d_e = cfg.get_int("model.d_e", m.d_e);
    m.n_blocks = cfg.get_int("model.n_blocks", m.n_blocks);
    m.d_state = cfg.get_int("model.d_state", m.d_state);
    m.conv_width = cfg.get_int("model.conv_width", m.conv_width);
    m.expand = cfg.get_int("model.expand", m.expand);
    m.latent_ch = cfg.get_int("model.latent_channels", m.latent_ch);
    m.compress_mid = cfg.get_int("model.compress_mid", m.compress_mid);
    m.n_heads = cfg.get_int("model.n_heads", m.n_heads);
    m.block_type = cfg.get_str("model.block_type", m.block_type);
    m.compress_type = cfg.get_str("model.compress_type", m.compress_type);
    m.bottleneck = cfg.get_bool("model.bottleneck", m.bottleneck);
    m.bottleneck_dim = cfg.get_int("model.bottleneck_dim", m.bottleneck_dim);
    m.scan = cfg.get_str("model.scan", m.scan);
    if (m.block_type != "mamba" && m.block_type != "attention")
        throw ConfigError("model.block_type must be mamba or attention");
    if (m.compress_type != "conv" && m.compress_type != "mlp")
        throw ConfigError("model.compress_type must be conv or mlp");
    return m;
}

json model_config_json(const model::ModelConfig& m) {
    return json{{"d_e", m.d_e},
                {"n_blocks", m.n_blocks},
                {"d_state", m.d_state},
                {"conv_width", m.conv_width},
                {"expand", m.expand},
                {"latent_channels", m.latent_ch},
                {"compress_mid", m.compress_mid},
                {"seq_len", m.seq_len},
                {"n_heads", m.n_heads},
                {"block_type", m.block_type},
                {"compress_type", m.compress_type},
                {"bottleneck", m.bottleneck},
                {"bottleneck_dim", m.bottleneck_dim},
                {"scan", m.scan}};
}

model::ModelConfig model_config_from_json(const json& j) {
    model::ModelConfig m;
    m.d_e = j.value("d_e", m.d_e);
    m.n_blocks = j.value("n_blocks", m.n_blocks);
    m.d_state = j.value("d_state", m.d_state);
    m.conv_width = j.value("conv_width", m.conv_width);
    m.expand = j.value("expand", m.expand);
    m.latent_ch = j.value("latent_channels", m.latent_ch);
    m.compress_mid = j.value("compress_mid", m.compress_mid);
    m.seq_len = j.value("seq_len", m.seq_len);
    m.n_heads = j.value("n_heads", m.n_heads);
    m.block_type = j.value("block_type", m.block_type);
    m.compress_type = j.value("compress_type", m.compress_type);
    m.bottleneck = j.value("bottleneck", m.bottleneck);
    m.bottleneck_dim = j.value("bottleneck_dim", m.bottleneck_dim);
    m.scan = j.value("scan", m.scan);
    return m;
}

model::GanConfig gan_config_from(const io::Config& cfg) {
    model::GanConfig g;
    g.noise_dim = cfg.get_int("gan.noise_dim", g.noise_dim);
    g.lr = cfg.get_num("gan.lr", g.lr);
    g.beta1 = cfg.get_num("gan.beta1", g.beta1);
    g.beta2 = cfg.get_num("gan.beta2", g.beta2);
    g.critic_steps = cfg.get_int("gan.critic_steps", g.critic_steps);
    g.lambda_gp = cfg.get_num("gan.lambda_gp", g.lambda_gp);
    g.dropout = cfg.get_num("gan.dropout", g.dropout);
    g.steps = cfg.get_int("gan.steps", g.steps);
    g.batch = cfg.get_int("gan.batch", g.batch);
    g.seed = cfg.get_u64("gan.seed", g.seed);
    return g;
}

/// Parse, normalize, quantize one corpus file; returns sequences in file order.
std::vector<QuantizedSequence> load_quantized_corpus(const std::string& path) {
    auto lines = io::read_lines(path);
    std::vector<QuantizedSequence> out;
    out.reserve(lines.size());
    for (size_t i = 0; i < lines.size(); ++i) {
        try {
            out.push_back(quantize(normalize(sequence_from_record(lines[i]))));
        } catch (const Error& e) {
            throw MalformedRecord("record " + std::to_string(i) + " in " + path + ": " +
                                  e.what());
        }
    }
    if (out.empty()) throw MalformedRecord("no records in " + path);
    return out;
}

struct ResultRecord {
    std::string id;
    QuantizedSequence tokens;
    bool valid = false;
    std::string reason;
    std::vector<int> masked_positions;
    bool has_mask = false;
};

json result_to_json(const ResultRecord& r) {
    json j;
    j["id"] = r.id;
    j["valid"] = r.valid;
    if (!r.reason.empty()) j["reason"] = r.reason;
    j["command_ids"] = std::vector<int>(r.tokens.command_ids.begin(), r.tokens.command_ids.end());
    j["param_bins"] = std::vector<int>(r.tokens.param_bins.begin(), r.tokens.param_bins.end());
    if (r.has_mask) j["masked_positions"] = r.masked_positions;
    return j;
}

ResultRecord result_from_json(const std::string& line) {
    json j = json::parse(line);
    ResultRecord r;
    r.id = j.value("id", "");
    r.valid = j.value("valid", false);
    r.reason = j.value("reason", "");
    auto ids = j["command_ids"].get<std::vector<int>>();
    auto bins = j["param_bins"].get<std::vector<int>>();
    if (int(ids.size()) != kMaxSeqLen || int(bins.size()) != kMaxSeqLen * kNumSlots)
        throw MalformedRecord("bad result record sizes for id " + r.id);
    for (int t = 0; t < kMaxSeqLen; ++t) r.tokens.command_ids[size_t(t)] = uint8_t(ids[size_t(t)]);
    for (size_t i = 0; i < bins.size(); ++i) r.tokens.param_bins[i] = uint16_t(bins[i]);
    return r;
}

/// Grammar+geometry validity of a token sequence; fills reason on failure.
bool check_validity(const QuantizedSequence& q, std::string& reason, CadSequence* seq_out) {
    try {
        CadSequence seq = dequantize(q);
        geom::SolidScene scene = geom::build_scene(seq);
        auto grid = geom::evaluate_grid(scene, 24);
        bool first = grid.values[0] < 0, mixed = false;
        for (double v : grid.values)
            if ((v < 0) != first) {
                mixed = true;
                break;
            }
        if (!mixed) throw EmptySolid();
        if (seq_out) *seq_out = seq;
        return true;
    } catch (const Error& e) {
        reason = e.what();
        return false;
    }
}

std::string record_id(const std::string& line) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("id")) return "";
    return j["id"].get<std::string>();
}

void run_inference(const std::string& corpus_path, const std::string& ckpt,
                   const std::string& out_path, double mask_ratio, uint64_t mask_seed,
                   bool dump_mask, int batch) {
    auto [arrays, meta] = io::read_checkpoint(ckpt);
    (void)arrays;
    model::ModelConfig mc = model_config_from_json(json::parse(meta).at("model"));
    model::Autoencoder<float> net(mc, 0);
    io::load_state(io::StateMap<float>(net.state()), ckpt);

    auto lines = io::read_lines(corpus_path);
    auto gt = load_quantized_corpus(corpus_path);

    std::vector<std::string> out_lines;
    for (size_t at = 0; at < gt.size(); at += size_t(batch)) {
        std::vector<QuantizedSequence> inputs;
        std::vector<ResultRecord> partial;
        for (size_t i = at; i < std::min(gt.size(), at + size_t(batch)); ++i) {
            ResultRecord r;
            r.id = record_id(lines[i]);
            if (mask_ratio > 0) {
                inputs.push_back(mask_sequence(gt[i], mask_ratio, mask_seed + i,
                                               dump_mask ? &r.masked_positions : nullptr));
                r.has_mask = dump_mask;
            } else {
                inputs.push_back(gt[i]);
            }
            partial.push_back(std::move(r));
        }
        std::vector<const QuantizedSequence*> ptrs;
        for (const auto& q : inputs) ptrs.push_back(&q);
        auto preds = net.reconstruct_batch(ptrs);
        for (size_t k = 0; k < preds.size(); ++k) {
            partial[k].tokens = preds[k];
            partial[k].valid = check_validity(preds[k], partial[k].reason, nullptr);
            out_lines.push_back(result_to_json(partial[k]).dump());
        }
        std::fprintf(stderr, "  %zu / %zu\r", std::min(gt.size(), at + size_t(batch)), gt.size());
    }
    std::fprintf(stderr, "\n");
    io::write_lines(out_path, out_lines);
}

}  // namespace

int main(int argc, char** argv) {
    configure_threads();
    CLI::App app{"mcad: parametric sketch-extrude sequence modeling pipeline"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    std::string config_path, corpus_path, out_path, in_path, stats_path, ckpt_path, gan_path,
        log_path, gt_path, results_path, train_path, ref_path, task, format = "obj",
        dist = "paper", out_dir = ".", variant, ply_dir;
    int count = 100, min_len = 10, max_len = 128, points = 2000, batch_override = 0,
        steps_override = 0, epochs_override = 0, ref_limit = 200;
    uint64_t seed = 1;
    double mask = 0.4, lr_override = 0, frac_train = 0.8, frac_val = 0.1;
    bool dump_mask = false, seed_given = false;

    auto add_train_flags = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "TOML-style config file");
        cmd->add_option("--seed", seed, "override seed")->each([&](const std::string&) {
            seed_given = true;
        });
        cmd->add_option("--batch", batch_override, "override batch size");
        cmd->add_option("--steps", steps_override, "override max steps");
        cmd->add_option("--epochs", epochs_override, "override epochs");
        cmd->add_option("--lr", lr_override, "override learning rate");
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    synth->add_option("--out", out_path, "output corpus (JSONL)")->required();
    synth->add_option("--count", count, "number of records");
    synth->add_option("--min-len", min_len, "minimum sequence length");
    synth->add_option("--max-len", max_len, "maximum sequence length");
    synth->add_option("--seed", seed, "rng seed");
    synth->add_option("--dist", dist, "length distribution: paper|uniform");

    auto* filter = app.add_subcommand("filter", "length/grammar filtering");
    filter->add_option("--in", in_path, "input corpus")->required();
    filter->add_option("--out", out_path, "output corpus")->required();
    filter->add_option("--min-len", min_len, "minimum length (default 10)");
    filter->add_option("--max-len", max_len, "maximum length (default 128)");
    filter->add_option("--stats", stats_path, "write bucket stats JSON");

    auto* split_cmd = app.add_subcommand("split", "deterministic 0.8/0.1/0.1 split");
    split_cmd->add_option("--in", in_path, "input corpus")->required();
    split_cmd->add_option("--out-prefix", out_path, "output prefix")->required();
    split_cmd->add_option("--seed", seed, "shuffle seed");
    split_cmd->add_option("--train-frac", frac_train, "train fraction");
    split_cmd->add_option("--val-frac", frac_val, "val fraction");

    auto* pretrain_cmd = app.add_subcommand("pretrain", "autoencoder pre-training");
    pretrain_cmd->add_option("--corpus", corpus_path, "training corpus")->required();
    pretrain_cmd->add_option("--out", ckpt_path, "output checkpoint")->required();
    pretrain_cmd->add_option("--log", log_path, "training log CSV");
    add_train_flags(pretrain_cmd);

    auto* ablate = app.add_subcommand("ablate", "pretrain an ablation variant");
    ablate->add_option("--variant", variant, "A|B|C")->required();
    ablate->add_option("--corpus", corpus_path, "training corpus")->required();
    ablate->add_option("--out", ckpt_path, "output checkpoint")->required();
    ablate->add_option("--log", log_path, "training log CSV");
    add_train_flags(ablate);

    auto* gan_cmd = app.add_subcommand("train-gan", "latent adversarial training");
    gan_cmd->add_option("--corpus", corpus_path, "training corpus")->required();
    gan_cmd->add_option("--ae", ckpt_path, "autoencoder checkpoint")->required();
    gan_cmd->add_option("--out", gan_path, "output GAN checkpoint")->required();
    gan_cmd->add_option("--log", log_path, "training log CSV");
    add_train_flags(gan_cmd);

    auto* gen = app.add_subcommand("generate", "sample sequences from the GAN");
    gen->add_option("--count", count, "samples to draw")->required();
    gen->add_option("--seed", seed, "noise seed");
    gen->add_option("--ae", ckpt_path, "autoencoder checkpoint")->required();
    gen->add_option("--gan", gan_path, "GAN checkpoint")->required();
    gen->add_option("--out", out_path, "output prefix")->required();
    gen->add_option("--ply-dir", ply_dir, "also write PLY point clouds here");
    gen->add_option("--points", points, "points per cloud for PLY export");

    auto* recon = app.add_subcommand("reconstruct", "reconstruct a corpus");
    recon->add_option("--corpus", corpus_path, "input corpus")->required();
    recon->add_option("--ae", ckpt_path, "autoencoder checkpoint")->required();
    recon->add_option("--out", out_path, "results JSONL")->required();
    recon->add_option("--batch", batch_override, "inference batch");

    auto* comp = app.add_subcommand("complete", "complete masked sequences");
    comp->add_option("--corpus", corpus_path, "input corpus")->required();
    comp->add_option("--ae", ckpt_path, "autoencoder checkpoint")->required();
    comp->add_option("--out", out_path, "results JSONL")->required();
    comp->add_option("--mask", mask, "mask ratio (default 0.4)");
    comp->add_option("--seed", seed, "mask seed");
    comp->add_flag("--dump-mask", dump_mask, "record masked positions");
    comp->add_option("--batch", batch_override, "inference batch");

    auto* eval = app.add_subcommand("eval", "metric report for a task");
    eval->add_option("--task", task, "recon|complete|gen")->required();
    eval->add_option("--results", results_path, "results JSONL")->required();
    eval->add_option("--out", out_path, "report JSON")->required();
    eval->add_option("--gt", gt_path, "ground-truth corpus (recon/complete)");
    eval->add_option("--train", train_path, "training corpus (novelty)");
    eval->add_option("--ref", ref_path, "reference corpus (gen metrics)");
    eval->add_option("--ref-limit", ref_limit, "max reference models");
    eval->add_option("--points", points, "points per cloud");
    eval->add_option("--seed", seed, "sampling seed");

    auto* exp = app.add_subcommand("export", "export geometry");
    exp->add_option("--format", format, "obj|ply")->required();
    exp->add_option("--in", in_path, "input corpus")->required();
    exp->add_option("--out-dir", out_dir, "output directory")->required();
    exp->add_option("--points", points, "points per cloud (ply)");
    exp->add_option("--seed", seed, "sampling seed (ply)");

    auto* quant = app.add_subcommand("quantize", "normalize + quantize a corpus to MCAD1 binary");
    quant->add_option("--in", in_path, "input corpus")->required();
    quant->add_option("--out", out_path, "output .mcad1 file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        io::Config cfg;
        if (!config_path.empty()) cfg = io::Config::load(config_path);

        if (synth->parsed()) {
            corpus::SynthConfig sc;
            sc.count = count;
            sc.min_len = min_len;
            sc.max_len = max_len;
            sc.seed = seed;
            sc.paper_length_distribution = dist == "paper";
            if (dist != "paper" && dist != "uniform")
                throw ConfigError("--dist must be paper or uniform");
            auto recs = corpus::synthesize(sc);
            io::write_lines(out_path, recs);
            io::write_meta(out_path, "synth", cfg.hash(), seed);
            std::printf("wrote %zu records to %s\n", recs.size(), out_path.c_str());
        } else if (filter->parsed()) {
            auto lines = io::read_lines(in_path);
            auto result = corpus::filter_corpus(lines, min_len, max_len);
            io::write_lines(out_path, result.records);
            io::write_meta(out_path, "filter", cfg.hash(), 0);
            std::string stats = corpus::stats_to_json(result.stats);
            if (!stats_path.empty()) {
                std::ofstream s(stats_path);
                s << stats << '\n';
            }
            std::printf("%s\n", stats.c_str());
        } else if (split_cmd->parsed()) {
            auto lines = io::read_lines(in_path);
            auto r = corpus::split(int(lines.size()), frac_train, frac_val, seed);
            auto pick = [&](const std::vector<int>& idx) {
                std::vector<std::string> out;
                for (int i : idx) out.push_back(lines[size_t(i)]);
                return out;
            };
            io::write_lines(out_path + "train.jsonl", pick(r.train));
            io::write_lines(out_path + "val.jsonl", pick(r.val));
            io::write_lines(out_path + "test.jsonl", pick(r.test));
            io::write_meta(out_path + "split", "split", cfg.hash(), seed);
            std::printf("split %zu -> %zu / %zu / %zu\n", lines.size(), r.train.size(),
                        r.val.size(), r.test.size());
        } else if (pretrain_cmd->parsed() || ablate->parsed()) {
            model::ModelConfig mc = model_config_from(cfg);
            if (ablate->parsed()) {
                if (variant == "A") mc.block_type = "attention";
                else if (variant == "B") mc.compress_type = "mlp";
                else if (variant == "C") mc.bottleneck = true;
                else throw ConfigError("--variant must be A, B, or C");
            }
            model::TrainConfig tc;
            tc.lr = cfg.get_num("train.lr", tc.lr);
            tc.warmup_steps = cfg.get_int("train.warmup_steps", tc.warmup_steps);
            tc.clip_norm = cfg.get_num("train.clip_norm", tc.clip_norm);
            tc.epochs = cfg.get_int("train.epochs", tc.epochs);
            tc.max_steps = cfg.get_int("train.steps", tc.max_steps);
            tc.batch = cfg.get_int("train.batch", tc.batch);
            tc.seed = cfg.get_u64("train.seed", tc.seed);
            tc.eval_every = cfg.get_int("train.eval_every", tc.eval_every);
            tc.target_ac = cfg.get_num("train.target_ac", tc.target_ac);
            tc.target_ap = cfg.get_num("train.target_ap", tc.target_ap);
            if (batch_override > 0) tc.batch = batch_override;
            if (steps_override > 0) tc.max_steps = steps_override;
            if (epochs_override > 0) tc.epochs = epochs_override;
            if (lr_override > 0) tc.lr = lr_override;
            if (seed_given) tc.seed = seed;

            auto corpus_q = load_quantized_corpus(corpus_path);
            model::Autoencoder<float> net(mc, tc.seed);
            std::ofstream log;
            if (!log_path.empty()) {
                log.open(log_path);
                log << "step,loss_cmd,loss_param,lr,grad_norm\n";
            }
            auto result = model::pretrain(net, corpus_q, tc, [&](const model::StepLog& l) {
                if (log.is_open())
                    log << l.step << ',' << l.loss_cmd << ',' << l.loss_par << ',' << l.lr << ','
                        << l.grad_norm << '\n';
                if (l.step % 50 == 0)
                    std::printf("step %d loss=%.4f lr=%.5f\n", l.step, l.loss_cmd + l.loss_par,
                                l.lr);
            });
            json meta;
            meta["model"] = model_config_json(mc);
            meta["config_hash"] = cfg.hash();
            meta["seed"] = tc.seed;
            meta["steps_run"] = result.steps_run;
            io::save_state(io::StateMap<float>(net.state()), ckpt_path, meta.dump());
            io::write_meta(ckpt_path, ablate->parsed() ? "ablate" : "pretrain", cfg.hash(),
                           tc.seed);
            std::printf("checkpoint written to %s (%d steps)\n", ckpt_path.c_str(),
                        result.steps_run);
        } else if (gan_cmd->parsed()) {
            auto [arrays, meta] = io::read_checkpoint(ckpt_path);
            (void)arrays;
            model::ModelConfig mc = model_config_from_json(json::parse(meta).at("model"));
            model::Autoencoder<float> net(mc, 0);
            io::load_state(io::StateMap<float>(net.state()), ckpt_path);

            model::GanConfig gc = gan_config_from(cfg);
            gc.latent_ch = mc.latent_ch;
            gc.seq_len = mc.seq_len;
            if (batch_override > 0) gc.batch = batch_override;
            if (steps_override > 0) gc.steps = steps_override;
            if (lr_override > 0) gc.lr = lr_override;
            if (seed_given) gc.seed = seed;
            if (gc.latent_ch != 64)
                std::fprintf(stderr, "note: GAN running at latent width %d\n", gc.latent_ch);

            auto corpus_q = load_quantized_corpus(corpus_path);
            std::vector<nn::Tensor<float>> codes;
            for (size_t at = 0; at < corpus_q.size(); at += 16) {
                std::vector<const QuantizedSequence*> chunk;
                for (size_t i = at; i < std::min(corpus_q.size(), at + 16); ++i)
                    chunk.push_back(&corpus_q[i]);
                auto z = net.encode_batch(chunk);  // frozen encoder
                int64_t per = int64_t(mc.seq_len) * mc.latent_ch;
                for (size_t i = 0; i < chunk.size(); ++i) {
                    nn::Tensor<float> c(nn::Shape{mc.seq_len, mc.latent_ch});
                    for (int64_t k = 0; k < per; ++k) c[k] = z[int64_t(i) * per + k];
                    codes.push_back(std::move(c));
                }
            }

            model::GeneratorParams<float> g(gc, gc.seed);
            model::CriticParams<float> d(gc, gc.seed + 1);
            std::ofstream log;
            if (!log_path.empty()) {
                log.open(log_path);
                log << "step,d_loss,g_loss,wasserstein,gp\n";
            }
            model::train_gan(g, d, codes, gc, [&](const model::GanStepLog& l) {
                if (log.is_open())
                    log << l.step << ',' << l.d_loss << ',' << l.g_loss << ',' << l.wasserstein
                        << ',' << l.gp << '\n';
                if (l.step % 50 == 0)
                    std::printf("step %d W=%.3f gp=%.3f\n", l.step, l.wasserstein, l.gp);
            });
            io::StateMap<float> state = g.state();
            for (auto& kv : d.state()) state.push_back(kv);
            json gmeta;
            gmeta["gan"] = {{"noise_dim", gc.noise_dim}, {"latent_channels", gc.latent_ch},
                            {"seq_len", gc.seq_len},     {"dropout", gc.dropout},
                            {"leak", gc.leak},           {"seed", gc.seed}};
            gmeta["config_hash"] = cfg.hash();
            io::save_state(state, gan_path, gmeta.dump());
            io::write_meta(gan_path, "train-gan", cfg.hash(), gc.seed);
            std::printf("GAN checkpoint written to %s\n", gan_path.c_str());
        } else if (gen->parsed()) {
            auto [aarrays, ameta] = io::read_checkpoint(ckpt_path);
            (void)aarrays;
            model::ModelConfig mc = model_config_from_json(json::parse(ameta).at("model"));
            model::Autoencoder<float> net(mc, 0);
            io::load_state(io::StateMap<float>(net.state()), ckpt_path);

            auto [garrays, gmeta] = io::read_checkpoint(gan_path);
            (void)garrays;
            json gj = json::parse(gmeta).at("gan");
            model::GanConfig gc;
            gc.noise_dim = gj.value("noise_dim", gc.noise_dim);
            gc.latent_ch = gj.value("latent_channels", gc.latent_ch);
            gc.seq_len = gj.value("seq_len", gc.seq_len);
            gc.dropout = gj.value("dropout", gc.dropout);
            gc.leak = gj.value("leak", gc.leak);
            model::GeneratorParams<float> g(gc, 0);
            io::StateMap<float> gstate = g.state();
            io::load_state(gstate, gan_path);  // generator half only
            auto samples = model::sample_sequences(g, net, count, seed, gc);

            std::vector<std::string> results, records;
            int valid = 0;
            for (size_t i = 0; i < samples.size(); ++i) {
                ResultRecord r;
                r.id = "gen-" + std::to_string(i);
                r.tokens = samples[i].tokens;
                r.valid = samples[i].valid;
                r.reason = samples[i].reason;
                results.push_back(result_to_json(r).dump());
                if (samples[i].valid) {
                    ++valid;
                    records.push_back(sequence_to_record(samples[i].sequence, r.id));
                    if (!ply_dir.empty()) {
                        std::filesystem::create_directories(ply_dir);
                        auto scene = geom::build_scene(samples[i].sequence);
                        auto cloud = geom::sample_surface(scene, points, seed + i);
                        geom::write_ply(cloud, ply_dir + "/" + r.id + ".ply");
                    }
                }
            }
            io::write_lines(out_path + ".results.jsonl", results);
            io::write_lines(out_path + ".jsonl", records);
            io::write_meta(out_path, "generate", cfg.hash(), seed);
            std::printf("generated %d samples, %d valid\n", count, valid);
        } else if (recon->parsed()) {
            run_inference(corpus_path, ckpt_path, out_path, 0.0, 0, false,
                          batch_override > 0 ? batch_override : 16);
            io::write_meta(out_path, "reconstruct", cfg.hash(), 0);
        } else if (comp->parsed()) {
            run_inference(corpus_path, ckpt_path, out_path, mask, seed, dump_mask,
                          batch_override > 0 ? batch_override : 16);
            io::write_meta(out_path, "complete", cfg.hash(), seed);
        } else if (eval->parsed()) {
            auto result_lines = io::read_lines(results_path);
            std::vector<ResultRecord> results;
            for (const auto& l : result_lines) results.push_back(result_from_json(l));

            metrics::Task t;
            if (task == "recon") t = metrics::Task::Reconstruction;
            else if (task == "complete") t = metrics::Task::Completion;
            else if (task == "gen") t = metrics::Task::Generation;
            else throw ConfigError("--task must be recon|complete|gen");

            std::vector<QuantizedSequence> gt;
            if (t != metrics::Task::Generation) {
                if (gt_path.empty()) throw ConfigError("--gt required for recon/complete");
                gt = load_quantized_corpus(gt_path);
                if (gt.size() != results.size())
                    throw MalformedRecord("results/gt size mismatch");
            }

            std::vector<metrics::SampleOutcome> outcomes;
            std::vector<geom::PointCloud> gen_clouds;
            for (size_t i = 0; i < results.size(); ++i) {
                metrics::SampleOutcome o;
                o.pred = results[i].tokens;
                o.pred_raw_length = o.pred.raw_length();
                CadSequence pred_seq;
                std::string reason;
                o.valid = check_validity(o.pred, reason, &pred_seq);
                if (t != metrics::Task::Generation) {
                    o.has_gt = true;
                    o.gt = gt[i];
                    o.gt_raw_length = gt[i].raw_length();
                }
                if (o.valid) {
                    try {
                        auto scene = geom::build_scene(pred_seq);
                        auto cloud = geom::sample_surface(scene, points, seed + i);
                        auto mesh = geom::extract_mesh(scene);
                        o.exported = !mesh.triangles.empty();
                        if (o.has_gt) {
                            auto gt_scene = geom::build_scene(dequantize(gt[i]));
                            auto gt_cloud = geom::sample_surface(gt_scene, points, seed + i);
                            o.cd = metrics::chamfer(cloud, gt_cloud);
                        } else {
                            gen_clouds.push_back(cloud);
                        }
                    } catch (const Error&) {
                        o.valid = false;
                    }
                }
                outcomes.push_back(std::move(o));
                std::fprintf(stderr, "  %zu / %zu\r", i + 1, results.size());
            }
            std::fprintf(stderr, "\n");

            metrics::MetricReport report = metrics::run_report(t, outcomes);
            if (t == metrics::Task::Generation) {
                if (!ref_path.empty() && !gen_clouds.empty()) {
                    auto ref_q = load_quantized_corpus(ref_path);
                    std::vector<geom::PointCloud> ref_clouds;
                    for (size_t i = 0; i < ref_q.size() && int(i) < ref_limit; ++i) {
                        auto scene = geom::build_scene(dequantize(ref_q[i]));
                        ref_clouds.push_back(geom::sample_surface(scene, points, seed + 777 + i));
                    }
                    auto gm = metrics::generation_metrics(gen_clouds, ref_clouds);
                    report.cov = gm.cov;
                    report.mmd = gm.mmd;
                    report.jsd = gm.jsd;
                }
                std::vector<QuantizedSequence> all_tokens;
                for (const auto& r : results) all_tokens.push_back(r.tokens);
                std::vector<QuantizedSequence> train_q;
                if (!train_path.empty()) train_q = load_quantized_corpus(train_path);
                auto [uniq, novel] = metrics::uniqueness_novelty(all_tokens, train_q);
                report.unique_frac = uniq;
                report.novel_frac = novel;
            }
            std::ofstream out(out_path);
            out << metrics::report_to_json(report) << '\n';
            io::write_meta(out_path, "eval", cfg.hash(), seed);
            std::printf("%s\n", metrics::report_to_json(report).c_str());
        } else if (exp->parsed()) {
            auto lines = io::read_lines(in_path);
            std::filesystem::create_directories(out_dir);
            int ok = 0, failed = 0;
            for (size_t i = 0; i < lines.size(); ++i) {
                std::string id = record_id(lines[i]);
                if (id.empty()) id = "model-" + std::to_string(i);
                try {
                    auto seq = sequence_from_record(lines[i]);
                    auto scene = geom::build_scene(seq);
                    if (format == "obj") {
                        geom::export_mesh(scene, out_dir + "/" + id + ".obj");
                    } else if (format == "ply") {
                        auto cloud = geom::sample_surface(scene, points, seed + i);
                        geom::write_ply(cloud, out_dir + "/" + id + ".ply");
                    } else {
                        throw ConfigError("--format must be obj or ply");
                    }
                    ++ok;
                } catch (const ConfigError&) {
                    throw;
                } catch (const Error& e) {
                    ++failed;
                    std::fprintf(stderr, "%s: %s\n", id.c_str(), e.what());
                }
            }
            std::printf("exported %d, failed %d (export ratio %.3f)\n", ok, failed,
                        lines.empty() ? 0.0 : double(ok) / double(lines.size()));
        } else if (quant->parsed()) {
            auto seqs = load_quantized_corpus(in_path);
            io::write_quantized(out_path, seqs);
            io::write_meta(out_path, "quantize", cfg.hash(), 0);
            std::printf("wrote %zu quantized sequences to %s\n", seqs.size(), out_path.c_str());
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const DivergedLoss& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDiverged;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return 0;
}
