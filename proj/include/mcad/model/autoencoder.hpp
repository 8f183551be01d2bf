#pragma once

// End-to-end sequence autoencoder: fusion embedding, four-block encoder,
// convolutional Compress Block producing the (latent_ch x L) code, Scale Block
// decoder with BatchNorm, dual command/parameter heads, cross-entropy
// pre-training, and reconstruction/completion inference.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mcad/codec.hpp"
#include "mcad/model/blocks.hpp"
#include "mcad/nn/optim.hpp"

namespace mcad::model {

struct ModelConfig {
    int d_e = 256;
    int n_blocks = 4;
    int d_state = 16;
    int conv_width = 4;
    int expand = 2;
    int latent_ch = 64;
    int compress_mid = 128;
    int seq_len = 128;
    int n_heads = 4;
    std::string block_type = "mamba";     // mamba | attention  (ablation A)
    std::string compress_type = "conv";   // conv | mlp         (ablation B)
    bool bottleneck = false;              //                    (ablation C)
    int bottleneck_dim = 256;
    std::string scan = "parallel";        // parallel | sequential

    nn::ScanMode scan_mode() const {
        return scan == "sequential" ? nn::ScanMode::Sequential : nn::ScanMode::Parallel;
    }
};

/// Integer token batch ready for the network.
struct Batch {
    std::shared_ptr<std::vector<int32_t>> cmds;  // B*L
    std::shared_ptr<std::vector<int32_t>> bins;  // B*L*16
    int b = 0, l = 0;
};

inline Batch make_batch(const std::vector<const QuantizedSequence*>& seqs, int seq_len) {
    Batch batch;
    batch.b = int(seqs.size());
    batch.l = seq_len;
    batch.cmds = std::make_shared<std::vector<int32_t>>();
    batch.bins = std::make_shared<std::vector<int32_t>>();
    batch.cmds->reserve(size_t(batch.b) * seq_len);
    batch.bins->reserve(size_t(batch.b) * seq_len * kNumSlots);
    for (const auto* q : seqs) {
        for (int t = 0; t < seq_len; ++t) {
            batch.cmds->push_back(q->command_ids[size_t(t)]);
            for (int j = 0; j < kNumSlots; ++j) batch.bins->push_back(q->bin(t, j));
        }
    }
    return batch;
}

template <typename T>
class Autoencoder {
public:
    Autoencoder(ModelConfig cfg, uint64_t seed) : cfg_(cfg) {
        Rng rng(seed);
        int dE = cfg.d_e;
        w_cmd_embed_ = Parameter<T>("embed.cmd", Shape{kCommandKinds, dE});
        w_par_a_ = Parameter<T>("embed.par_a", Shape{dE, kNumSlots * dE});
        w_par_b_ = Parameter<T>("embed.par_b", Shape{kParamVocab, dE});
        nn::init_linear(w_cmd_embed_, rng);
        nn::init_uniform(w_par_a_, rng, 1.0 / std::sqrt(double(kNumSlots) * dE));
        nn::init_linear(w_par_b_, rng);
        pos_ = std::make_shared<nn::Tensor<T>>(nn::sinusoidal_positions<T>(cfg.seq_len, dE));

        for (int i = 0; i < cfg.n_blocks; ++i) {
            std::string prefix = "encoder.block" + std::to_string(i);
            if (cfg.block_type == "attention") {
                attn_blocks_.emplace_back(prefix, dE, cfg.n_heads);
                attn_blocks_.back().init(rng);
            } else {
                mamba_blocks_.emplace_back(prefix, dE, cfg.expand, cfg.d_state, cfg.conv_width);
                mamba_blocks_.back().init(rng);
            }
        }

        int mid = cfg.compress_mid, lat = cfg.latent_ch;
        if (cfg.compress_type == "mlp") {
            compress1_w_ = Parameter<T>("compress.m1_w", Shape{mid, dE});
            compress2_w_ = Parameter<T>("compress.m2_w", Shape{lat, mid});
            scale1_w_ = Parameter<T>("scale.m1_w", Shape{mid, lat});
            scale2_w_ = Parameter<T>("scale.m2_w", Shape{dE, mid});
        } else {
            compress1_w_ = Parameter<T>("compress.c1_w", Shape{3, dE, mid});
            compress2_w_ = Parameter<T>("compress.c2_w", Shape{3, mid, lat});
            scale1_w_ = Parameter<T>("scale.t1_w", Shape{3, lat, mid});
            scale2_w_ = Parameter<T>("scale.t2_w", Shape{3, mid, dE});
        }
        compress1_b_ = Parameter<T>("compress.b1", Shape{mid});
        compress2_b_ = Parameter<T>("compress.b2", Shape{lat});
        scale1_b_ = Parameter<T>("scale.b1", Shape{mid});
        scale2_b_ = Parameter<T>("scale.b2", Shape{dE});
        for (auto* p : {&compress1_w_, &compress2_w_, &scale1_w_, &scale2_w_}) {
            if (cfg.compress_type == "mlp") nn::init_linear(*p, rng);
            else nn::init_conv(*p, rng);
        }

        bn1_gamma_ = Parameter<T>("scale.bn1_gamma", Shape{mid});
        bn1_beta_ = Parameter<T>("scale.bn1_beta", Shape{mid});
        bn2_gamma_ = Parameter<T>("scale.bn2_gamma", Shape{dE});
        bn2_beta_ = Parameter<T>("scale.bn2_beta", Shape{dE});
        nn::init_const(bn1_gamma_, T(1));
        nn::init_const(bn2_gamma_, T(1));
        bn1_state_ = nn::BnState<T>(mid);
        bn2_state_ = nn::BnState<T>(dE);

        if (cfg.bottleneck) {
            int flat = lat * cfg.seq_len;
            bottleneck1_w_ = Parameter<T>("bottleneck.w1", Shape{cfg.bottleneck_dim, flat});
            bottleneck1_b_ = Parameter<T>("bottleneck.b1", Shape{cfg.bottleneck_dim});
            bottleneck2_w_ = Parameter<T>("bottleneck.w2", Shape{flat, cfg.bottleneck_dim});
            bottleneck2_b_ = Parameter<T>("bottleneck.b2", Shape{flat});
            nn::init_linear(bottleneck1_w_, rng);
            nn::init_linear(bottleneck2_w_, rng);
        }

        head_cmd_w_ = Parameter<T>("head.cmd_w", Shape{kCommandKinds, dE});
        head_cmd_b_ = Parameter<T>("head.cmd_b", Shape{kCommandKinds});
        head_par_w_ = Parameter<T>("head.par_w", Shape{kNumSlots * kParamVocab, dE});
        head_par_b_ = Parameter<T>("head.par_b", Shape{kNumSlots * kParamVocab});
        nn::init_linear(head_cmd_w_, rng);
        nn::init_linear(head_par_w_, rng);
    }

    const ModelConfig& config() const { return cfg_; }

    int embed(Tape<T>& tp, const Batch& batch) {
        return nn::fusion_embed(tp, tp.param(w_cmd_embed_), tp.param(w_par_a_),
                                tp.param(w_par_b_), batch.cmds, batch.bins, pos_, batch.b,
                                batch.l, kNumSlots);
    }

    /// Four blocks then the Compress Block; output (B, L, latent_ch).
    int encode(Tape<T>& tp, int emb) {
        int h = emb;
        if (cfg_.block_type == "attention") {
            for (auto& blk : attn_blocks_) h = attention_block(tp, blk, h);
        } else {
            for (auto& blk : mamba_blocks_) h = mamba_block(tp, blk, h, cfg_.scan_mode());
        }
        if (cfg_.compress_type == "mlp") {
            int m = nn::silu(tp, nn::linear(tp, h, tp.param(compress1_w_), tp.param(compress1_b_)));
            return nn::linear(tp, m, tp.param(compress2_w_), tp.param(compress2_b_));
        }
        int c1 = nn::silu(tp, nn::conv1d(tp, h, tp.param(compress1_w_), tp.param(compress1_b_), 1, 1));
        return nn::conv1d(tp, c1, tp.param(compress2_w_), tp.param(compress2_b_), 1, 1);
    }

    struct DecoderOut {
        int cmd_logits;  // (B, L, 6)
        int par_logits;  // (B, L, 16, 257)
    };

    /// Scale Block (+ optional bottleneck) and the two linear heads.
    DecoderOut decode(Tape<T>& tp, int z, bool training) {
        const auto& Z = tp.val(z);
        int B = Z.shape[0];
        int h = z;
        if (cfg_.bottleneck) {
            int flat = nn::reshape(tp, h, Shape{B, cfg_.latent_ch * cfg_.seq_len});
            int b1 = nn::silu(tp, nn::linear(tp, flat, tp.param(bottleneck1_w_), tp.param(bottleneck1_b_)));
            int b2 = nn::linear(tp, b1, tp.param(bottleneck2_w_), tp.param(bottleneck2_b_));
            h = nn::reshape(tp, b2, Shape{B, cfg_.seq_len, cfg_.latent_ch});
        }
        int s1, s2;
        if (cfg_.compress_type == "mlp") {
            s1 = nn::linear(tp, h, tp.param(scale1_w_), tp.param(scale1_b_));
            s1 = nn::batchnorm1d(tp, s1, tp.param(bn1_gamma_), tp.param(bn1_beta_), bn1_state_, training);
            s1 = nn::silu(tp, s1);
            s2 = nn::linear(tp, s1, tp.param(scale2_w_), tp.param(scale2_b_));
            s2 = nn::batchnorm1d(tp, s2, tp.param(bn2_gamma_), tp.param(bn2_beta_), bn2_state_, training);
        } else {
            s1 = nn::conv1d_transpose(tp, h, tp.param(scale1_w_), tp.param(scale1_b_), 1, 1);
            s1 = nn::batchnorm1d(tp, s1, tp.param(bn1_gamma_), tp.param(bn1_beta_), bn1_state_, training);
            s1 = nn::silu(tp, s1);
            s2 = nn::conv1d_transpose(tp, s1, tp.param(scale2_w_), tp.param(scale2_b_), 1, 1);
            s2 = nn::batchnorm1d(tp, s2, tp.param(bn2_gamma_), tp.param(bn2_beta_), bn2_state_, training);
        }
        int cmd = nn::linear(tp, s2, tp.param(head_cmd_w_), tp.param(head_cmd_b_));
        int par = nn::linear(tp, s2, tp.param(head_par_w_), tp.param(head_par_b_));
        int B2 = tp.val(par).shape[0];
        par = nn::reshape(tp, par, Shape{B2, cfg_.seq_len, kNumSlots, kParamVocab});
        return {cmd, par};
    }

    /// Mean command CE plus mean parameter CE, weighted 1:1. Padding positions
    /// and unused slots (bin 256) are supervised like everything else.
    struct LossOut {
        int total, cmd, par;
    };
    LossOut loss(Tape<T>& tp, const DecoderOut& out, const Batch& targets) {
        int lc = nn::softmax_cross_entropy(tp, out.cmd_logits, targets.cmds);
        int lp = nn::softmax_cross_entropy(tp, out.par_logits, targets.bins);
        return {nn::add(tp, lc, lp), lc, lp};
    }

    std::vector<Parameter<T>*> parameters() {
        std::vector<Parameter<T>*> ps = {&w_cmd_embed_, &w_par_a_, &w_par_b_};
        for (auto& b : mamba_blocks_)
            for (auto* p : b.parameters()) ps.push_back(p);
        for (auto& b : attn_blocks_)
            for (auto* p : b.parameters()) ps.push_back(p);
        for (auto* p : {&compress1_w_, &compress1_b_, &compress2_w_, &compress2_b_, &scale1_w_,
                        &scale1_b_, &scale2_w_, &scale2_b_, &bn1_gamma_, &bn1_beta_, &bn2_gamma_,
                        &bn2_beta_})
            ps.push_back(p);
        if (cfg_.bottleneck)
            for (auto* p : {&bottleneck1_w_, &bottleneck1_b_, &bottleneck2_w_, &bottleneck2_b_})
                ps.push_back(p);
        for (auto* p : {&head_cmd_w_, &head_cmd_b_, &head_par_w_, &head_par_b_}) ps.push_back(p);
        return ps;
    }

    /// Parameters plus BatchNorm running statistics, for checkpointing.
    std::vector<std::pair<std::string, nn::Tensor<T>*>> state() {
        std::vector<std::pair<std::string, nn::Tensor<T>*>> out;
        for (auto* p : parameters()) out.emplace_back(p->name, &p->value);
        out.emplace_back("scale.bn1_running_mean", &bn1_state_.running_mean);
        out.emplace_back("scale.bn1_running_var", &bn1_state_.running_var);
        out.emplace_back("scale.bn2_running_mean", &bn2_state_.running_mean);
        out.emplace_back("scale.bn2_running_var", &bn2_state_.running_var);
        return out;
    }

    /// Greedy decode of a batch of quantized sequences (eval mode, no grad).
    std::vector<QuantizedSequence> reconstruct_batch(
        const std::vector<const QuantizedSequence*>& seqs) {
        Batch batch = make_batch(seqs, cfg_.seq_len);
        Tape<T> tp;
        int emb = embed(tp, batch);
        int z = encode(tp, emb);
        DecoderOut out = decode(tp, z, /*training=*/false);
        return extract_predictions(tp, out, batch.b);
    }

    std::vector<QuantizedSequence> extract_predictions(Tape<T>& tp, const DecoderOut& out, int B) {
        const auto& C = tp.val(out.cmd_logits);
        const auto& P = tp.val(out.par_logits);
        std::vector<QuantizedSequence> result;
        result.reserve(size_t(B));
        std::vector<int> ids(size_t(cfg_.seq_len));
        std::vector<int> bins(size_t(cfg_.seq_len) * kNumSlots);
        for (int b = 0; b < B; ++b) {
            for (int t = 0; t < cfg_.seq_len; ++t) {
                const T* row = C.data() + (int64_t(b) * cfg_.seq_len + t) * kCommandKinds;
                int best = 0;
                for (int k = 1; k < kCommandKinds; ++k)
                    if (row[k] > row[best]) best = k;
                ids[size_t(t)] = best;
                for (int j = 0; j < kNumSlots; ++j) {
                    const T* prow = P.data() + ((int64_t(b) * cfg_.seq_len + t) * kNumSlots + j) *
                                                   kParamVocab;
                    int pb = 0;
                    for (int k = 1; k < kParamVocab; ++k)
                        if (prow[k] > prow[pb]) pb = k;
                    bins[size_t(t) * kNumSlots + j] = pb;
                }
            }
            result.push_back(canonicalize_prediction(ids, bins));
        }
        return result;
    }

    /// Encoder pass only, eval mode; returns (B, L, latent_ch) values.
    nn::Tensor<T> encode_batch(const std::vector<const QuantizedSequence*>& seqs) {
        Batch batch = make_batch(seqs, cfg_.seq_len);
        Tape<T> tp;
        int z = encode(tp, embed(tp, batch));
        return tp.val(z);
    }

    /// Decoder pass from raw latent values (the generation path, Eq. 9 style).
    std::vector<QuantizedSequence> decode_latents(const nn::Tensor<T>& z) {
        Tape<T> tp;
        int zn = tp.constant(z);
        DecoderOut out = decode(tp, zn, /*training=*/false);
        return extract_predictions(tp, out, z.shape[0]);
    }

    nn::BnState<T>& bn1_state() { return bn1_state_; }
    nn::BnState<T>& bn2_state() { return bn2_state_; }

private:
    ModelConfig cfg_;
    Parameter<T> w_cmd_embed_, w_par_a_, w_par_b_;
    std::shared_ptr<nn::Tensor<T>> pos_;
    std::vector<MambaBlockParams<T>> mamba_blocks_;
    std::vector<AttentionBlockParams<T>> attn_blocks_;
    Parameter<T> compress1_w_, compress1_b_, compress2_w_, compress2_b_;
    Parameter<T> scale1_w_, scale1_b_, scale2_w_, scale2_b_;
    Parameter<T> bn1_gamma_, bn1_beta_, bn2_gamma_, bn2_beta_;
    nn::BnState<T> bn1_state_, bn2_state_;
    Parameter<T> bottleneck1_w_, bottleneck1_b_, bottleneck2_w_, bottleneck2_b_;
    Parameter<T> head_cmd_w_, head_cmd_b_, head_par_w_, head_par_b_;
};

// --- pre-training -----------------------------------------------------------------

struct TrainConfig {
    double lr = 1e-3;
    int warmup_steps = 500;
    double clip_norm = 1.0;
    int epochs = 10;
    int max_steps = 0;  // 0: derived from epochs
    int batch = 32;
    uint64_t seed = 1;
    int eval_every = 0;        // 0: no in-training eval
    double target_ac = -1;     // early stop once both targets reached
    double target_ap = -1;
};

struct StepLog {
    int step;
    double loss_cmd, loss_par, lr, grad_norm;
};

struct TrainResult {
    std::vector<StepLog> log;
    int steps_run = 0;
    bool reached_targets = false;
    double final_ac = 0, final_ap = 0;
};

/// Training-set token accuracies (A_c over all positions; A_p over used slots
/// of correctly predicted commands, |bin diff| < eta, sentinel treated as -1).
template <typename T>
std::pair<double, double> token_accuracy(Autoencoder<T>& model,
                                         const std::vector<QuantizedSequence>& corpus,
                                         int batch_size) {
    double ac_sum = 0;
    int64_t ap_hits = 0, ap_total = 0;
    for (size_t at = 0; at < corpus.size(); at += size_t(batch_size)) {
        std::vector<const QuantizedSequence*> chunk;
        for (size_t i = at; i < std::min(corpus.size(), at + size_t(batch_size)); ++i)
            chunk.push_back(&corpus[i]);
        auto preds = model.reconstruct_batch(chunk);
        for (size_t i = 0; i < chunk.size(); ++i) {
            const QuantizedSequence& gt = *chunk[i];
            const QuantizedSequence& pr = preds[i];
            int match = 0;
            for (int t = 0; t < kMaxSeqLen; ++t) {
                if (gt.command_ids[size_t(t)] != pr.command_ids[size_t(t)]) continue;
                ++match;
                auto kind = CommandKind(gt.command_ids[size_t(t)]);
                for (int j = 0; j < kNumSlots; ++j) {
                    if (!slot_used(kind, j)) continue;
                    ++ap_total;
                    int a = gt.bin(t, j) == kUnusedBin ? -1 : gt.bin(t, j);
                    int bqv = pr.bin(t, j) == kUnusedBin ? -1 : pr.bin(t, j);
                    if (std::abs(a - bqv) < 3) ++ap_hits;
                }
            }
            ac_sum += double(match) / kMaxSeqLen;
        }
    }
    double ac = corpus.empty() ? 0 : ac_sum / double(corpus.size());
    double ap = ap_total == 0 ? 0 : double(ap_hits) / double(ap_total);
    return {ac, ap};
}

/// Adam with linear warm-up and global-norm clipping; deterministic per seed.
/// Aborts with DivergedLoss on a non-finite loss. progress(step, total) may be
/// null.
template <typename T>
TrainResult pretrain(Autoencoder<T>& model, const std::vector<QuantizedSequence>& corpus,
                     const TrainConfig& cfg,
                     const std::function<void(const StepLog&)>& on_step = nullptr) {
    if (corpus.empty()) throw ConfigError("pretrain: empty corpus");
    auto params = model.parameters();
    nn::Adam<T> opt(params);
    Rng rng(cfg.seed);
    int n = int(corpus.size());
    int steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
    int total = cfg.max_steps > 0 ? cfg.max_steps : cfg.epochs * steps_per_epoch;

    TrainResult result;
    int step = 0;
    while (step < total) {
        auto perm = rng.permutation(n);
        for (int at = 0; at < n && step < total; at += cfg.batch) {
            std::vector<const QuantizedSequence*> chunk;
            for (int i = at; i < std::min(n, at + cfg.batch); ++i)
                chunk.push_back(&corpus[size_t(perm[size_t(i)])]);
            Batch batch = make_batch(chunk, model.config().seq_len);

            Tape<T> tp;
            int emb = model.embed(tp, batch);
            int z = model.encode(tp, emb);
            auto out = model.decode(tp, z, /*training=*/true);
            auto lo = model.loss(tp, out, batch);
            double lc = double(tp.val(lo.cmd)[0]), lp = double(tp.val(lo.par)[0]);
            if (!std::isfinite(lc) || !std::isfinite(lp)) throw DivergedLoss(step);

            opt.zero_grad();
            tp.backward(lo.total);
            double norm = nn::clip_global_norm(params, cfg.clip_norm);
            double lr = nn::warmup_lr(cfg.lr, step, cfg.warmup_steps);
            opt.step(lr);

            StepLog entry{step, lc, lp, lr, norm};
            result.log.push_back(entry);
            if (on_step) on_step(entry);
            ++step;

            if (cfg.eval_every > 0 && step % cfg.eval_every == 0 && cfg.target_ac >= 0) {
                auto [ac, ap] = token_accuracy(model, corpus, cfg.batch);
                result.final_ac = ac;
                result.final_ap = ap;
                if (ac >= cfg.target_ac && ap >= cfg.target_ap) {
                    result.reached_targets = true;
                    result.steps_run = step;
                    return result;
                }
            }
        }
    }
    result.steps_run = step;
    if (cfg.target_ac >= 0) {
        auto [ac, ap] = token_accuracy(model, corpus, cfg.batch);
        result.final_ac = ac;
        result.final_ap = ap;
        result.reached_targets = ac >= cfg.target_ac && ap >= cfg.target_ap;
    }
    return result;
}

/// Reconstruction through the frozen model; completion masks the input first.
template <typename T>
QuantizedSequence reconstruct(Autoencoder<T>& model, const QuantizedSequence& q) {
    return model.reconstruct_batch({&q})[0];
}

template <typename T>
QuantizedSequence complete(Autoencoder<T>& model, const QuantizedSequence& q, double mask_ratio,
                           uint64_t seed, std::vector<int>* masked = nullptr) {
    QuantizedSequence masked_q = mask_sequence(q, mask_ratio, seed, masked);
    return reconstruct(model, masked_q);
}

}  // namespace mcad::model
