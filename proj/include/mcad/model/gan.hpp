#pragma once

// 1-D latent adversarial model over (L x latent_ch) codes from the frozen
// encoder: upsampling convolutional generator, strided convolutional critic
// (no BatchNorm on the critic path; it would couple samples inside the
// per-sample gradient penalty), WGAN-GP training, and decoding of sampled
// codes through the frozen decoder.

#include "mcad/geometry.hpp"
#include "mcad/model/autoencoder.hpp"

namespace mcad::model {

struct GanConfig {
    int noise_dim = 64;
    int latent_ch = 64;
    int seq_len = 128;
    double lr = 1e-4;
    double beta1 = 0.5, beta2 = 0.9;  // WGAN-GP recipe
    int critic_steps = 5;
    double lambda_gp = 10.0;
    double dropout = 0.25;
    double leak = 0.2;
    int steps = 5000;  // generator cycles; each runs critic_steps critic updates
    int batch = 64;
    uint64_t seed = 1;
};

/// Noise projection to (8 x 256), then four blocks of nearest-neighbor x2
/// upsampling, k3 convolution, BatchNorm, Dropout, LeakyReLU;
/// channels 256 -> 128 -> 128 -> 64 -> 64, lengths 8 -> 16 -> 32 -> 64 -> 128.
template <typename T>
struct GeneratorParams {
    static constexpr int kBlocks = 4;
    Parameter<T> w_noise, b_noise;
    Parameter<T> conv_w[kBlocks], conv_b[kBlocks];
    Parameter<T> bn_gamma[kBlocks], bn_beta[kBlocks];
    nn::BnState<T> bn_state[kBlocks];
    int noise_dim, base_len = 8, base_ch = 256;
    std::array<int, kBlocks + 1> chans{256, 128, 128, 64, 64};

    explicit GeneratorParams(const GanConfig& cfg, uint64_t seed)
        : w_noise("gen.noise_w", Shape{8 * 256, cfg.noise_dim}),
          b_noise("gen.noise_b", Shape{8 * 256}),
          noise_dim(cfg.noise_dim) {
        Rng rng(seed);
        nn::init_linear(w_noise, rng);
        for (int i = 0; i < kBlocks; ++i) {
            std::string p = "gen.block" + std::to_string(i);
            conv_w[i] = Parameter<T>(p + ".conv_w", Shape{3, chans[size_t(i)], chans[size_t(i) + 1]});
            conv_b[i] = Parameter<T>(p + ".conv_b", Shape{chans[size_t(i) + 1]});
            bn_gamma[i] = Parameter<T>(p + ".bn_gamma", Shape{chans[size_t(i) + 1]});
            bn_beta[i] = Parameter<T>(p + ".bn_beta", Shape{chans[size_t(i) + 1]});
            nn::init_conv(conv_w[i], rng);
            nn::init_const(bn_gamma[i], T(1));
            bn_state[i] = nn::BnState<T>(chans[size_t(i) + 1]);
        }
    }

    std::vector<Parameter<T>*> parameters() {
        std::vector<Parameter<T>*> ps = {&w_noise, &b_noise};
        for (int i = 0; i < kBlocks; ++i) {
            ps.push_back(&conv_w[i]);
            ps.push_back(&conv_b[i]);
            ps.push_back(&bn_gamma[i]);
            ps.push_back(&bn_beta[i]);
        }
        return ps;
    }

    std::vector<std::pair<std::string, nn::Tensor<T>*>> state() {
        std::vector<std::pair<std::string, nn::Tensor<T>*>> out;
        for (auto* p : parameters()) out.emplace_back(p->name, &p->value);
        for (int i = 0; i < kBlocks; ++i) {
            std::string p = "gen.block" + std::to_string(i);
            out.emplace_back(p + ".bn_running_mean", &bn_state[i].running_mean);
            out.emplace_back(p + ".bn_running_var", &bn_state[i].running_var);
        }
        return out;
    }
};

template <typename T>
int generator_forward(Tape<T>& tp, GeneratorParams<T>& g, int noise, bool training, Rng& rng,
                      const GanConfig& cfg) {
    const auto& N = tp.val(noise);
    int B = N.shape[0];
    int h = nn::linear(tp, noise, tp.param(g.w_noise), tp.param(g.b_noise));
    h = nn::reshape(tp, h, Shape{B, g.base_len, g.base_ch});
    for (int i = 0; i < GeneratorParams<T>::kBlocks; ++i) {
        h = nn::upsample2(tp, h);
        h = nn::conv1d(tp, h, tp.param(g.conv_w[i]), tp.param(g.conv_b[i]), 1, 1);
        h = nn::batchnorm1d(tp, h, tp.param(g.bn_gamma[i]), tp.param(g.bn_beta[i]), g.bn_state[i],
                            training);
        h = nn::dropout(tp, h, cfg.dropout, rng, training);
        h = nn::leaky_relu(tp, h, T(cfg.leak));
    }
    return h;  // (B, 128, 64)
}

/// Deterministic eval-mode sampling of fake codes (dropout off, BN running
/// statistics).
template <typename T>
nn::Tensor<T> generate_latent(GeneratorParams<T>& g, const nn::Tensor<T>& noise,
                              const GanConfig& cfg) {
    Tape<T> tp;
    Rng unused(0);
    int out = generator_forward(tp, g, tp.constant(noise), /*training=*/false, unused, cfg);
    return tp.val(out);
}

/// Mirror of the generator: four stride-2 k3 convolutions 64 -> 64 -> 128 ->
/// 128 -> 256 with LeakyReLU (no BatchNorm), then a linear map to one score.
template <typename T>
struct CriticParams {
    static constexpr int kBlocks = 4;
    Parameter<T> conv_w[kBlocks], conv_b[kBlocks];
    Parameter<T> w_out, b_out;
    std::array<int, kBlocks + 1> chans{64, 64, 128, 128, 256};
    std::array<int, kBlocks + 1> lens{128, 64, 32, 16, 8};

    explicit CriticParams(const GanConfig& cfg, uint64_t seed)
        : w_out("critic.out_w", Shape{1, 8 * 256}), b_out("critic.out_b", Shape{1}) {
        (void)cfg;
        Rng rng(seed);
        for (int i = 0; i < kBlocks; ++i) {
            std::string p = "critic.block" + std::to_string(i);
            conv_w[i] = Parameter<T>(p + ".conv_w", Shape{3, chans[size_t(i)], chans[size_t(i) + 1]});
            conv_b[i] = Parameter<T>(p + ".conv_b", Shape{chans[size_t(i) + 1]});
            nn::init_conv(conv_w[i], rng);
        }
        nn::init_linear(w_out, rng);
    }

    std::vector<Parameter<T>*> parameters() {
        std::vector<Parameter<T>*> ps;
        for (int i = 0; i < kBlocks; ++i) {
            ps.push_back(&conv_w[i]);
            ps.push_back(&conv_b[i]);
        }
        ps.push_back(&w_out);
        ps.push_back(&b_out);
        return ps;
    }

    std::vector<std::pair<std::string, nn::Tensor<T>*>> state() {
        std::vector<std::pair<std::string, nn::Tensor<T>*>> out;
        for (auto* p : parameters()) out.emplace_back(p->name, &p->value);
        return out;
    }
};

/// Critic score graph: (B, 128, 64) -> (B, 1).
template <typename T>
int critic_score(Tape<T>& tp, CriticParams<T>& c, int x, double leak) {
    int h = x;
    for (int i = 0; i < CriticParams<T>::kBlocks; ++i) {
        h = nn::conv1d(tp, h, tp.param(c.conv_w[i]), tp.param(c.conv_b[i]), 2, 1);
        h = nn::leaky_relu(tp, h, T(leak));
    }
    const auto& H = tp.val(h);
    int flat = nn::reshape(tp, h, Shape{H.shape[0], H.shape[1] * H.shape[2]});
    return nn::linear(tp, flat, tp.param(c.w_out), tp.param(c.b_out));
}

/// Anything that can build the graph of its own input gradient at a fixed
/// input batch. For piecewise-linear critics the activation masks are locally
/// constant, so differentiating this graph w.r.t. the weights gives the exact
/// parameter gradient of the penalty almost everywhere.
template <typename T>
struct CriticGradGraph {
    virtual ~CriticGradGraph() = default;
    virtual int input_grad(Tape<T>& tp, const nn::Tensor<T>& xhat) = 0;
};

template <typename T>
struct ConvCriticGraph : CriticGradGraph<T> {
    CriticParams<T>& c;
    double leak;
    ConvCriticGraph(CriticParams<T>& c_, double leak_) : c(c_), leak(leak_) {}

    int input_grad(Tape<T>& tp, const nn::Tensor<T>& xhat) override {
        constexpr int NB = CriticParams<T>::kBlocks;
        int B = xhat.shape[0];
        // Plain forward pass to record LeakyReLU masks.
        nn::Tensor<T> masks[NB];
        {
            Tape<T> fwd;
            int h = fwd.constant(xhat);
            for (int i = 0; i < NB; ++i) {
                h = nn::conv1d(fwd, h, fwd.constant(c.conv_w[i].value),
                               fwd.constant(c.conv_b[i].value), 2, 1);
                const auto& Z = fwd.val(h);
                masks[i] = nn::Tensor<T>(Z.shape);
                for (int64_t k = 0; k < Z.size(); ++k)
                    masks[i][k] = Z[k] > 0 ? T(1) : T(leak);
                h = nn::leaky_relu(fwd, h, T(leak));
            }
        }
        // ds/d(flat) = w_out row, tiled per sample; chain back through masks
        // and conv adjoints.
        int g = nn::tile_rows(tp, tp.param(c.w_out), B);
        g = nn::reshape(tp, g, Shape{B, c.lens[NB], c.chans[NB]});
        for (int i = NB - 1; i >= 0; --i) {
            g = nn::mul(tp, g, tp.constant(masks[i]));
            g = nn::conv1d_adjoint(tp, g, tp.param(c.conv_w[i]), 2, 1, c.lens[size_t(i)]);
        }
        return g;  // (B, 128, 64)
    }
};

/// lambda * mean_b (||grad_x D(xhat_b)|| - 1)^2 at fixed interpolates xhat.
template <typename T>
int gradient_penalty_at(Tape<T>& tp, CriticGradGraph<T>& graph, const nn::Tensor<T>& xhat,
                        double lambda) {
    int g = graph.input_grad(tp, xhat);
    int ss = nn::sumsq_per_row(tp, g);
    int norm = nn::sqrt_el(tp, ss);
    int d = nn::add_const(tp, norm, T(-1));
    int p = nn::mul(tp, d, d);
    return nn::scale(tp, nn::mean_all(tp, p), T(lambda));
}

/// Draws xhat = eps x_real + (1-eps) x_fake, eps uniform per sample, then the
/// penalty at those interpolates.
template <typename T>
int gradient_penalty(Tape<T>& tp, CriticGradGraph<T>& graph, const nn::Tensor<T>& real,
                     const nn::Tensor<T>& fake, Rng& rng, double lambda) {
    nn::check_shape(real.shape == fake.shape, "gradient_penalty batches");
    int B = real.shape[0];
    int64_t per = real.size() / B;
    nn::Tensor<T> xhat(real.shape);
    for (int b = 0; b < B; ++b) {
        T eps = T(rng.uniform());
        for (int64_t i = 0; i < per; ++i) {
            int64_t k = int64_t(b) * per + i;
            xhat[k] = eps * real[k] + (T(1) - eps) * fake[k];
        }
    }
    return gradient_penalty_at(tp, graph, xhat, lambda);
}

// --- training ----------------------------------------------------------------------

struct GanStepLog {
    int step;
    double d_loss, g_loss, wasserstein, gp;
};

struct GanTrainResult {
    std::vector<GanStepLog> log;
};

/// Alternating WGAN-GP updates: critic_steps critic updates per generator
/// update. codes (n, L, C) from the frozen encoder. Deterministic per seed.
template <typename T>
GanTrainResult train_gan(GeneratorParams<T>& gen, CriticParams<T>& critic,
                         const std::vector<nn::Tensor<T>>& codes, const GanConfig& cfg,
                         const std::function<void(const GanStepLog&)>& on_step = nullptr) {
    if (codes.empty()) throw ConfigError("train_gan: no codes");
    nn::Adam<T> opt_g(gen.parameters(), cfg.beta1, cfg.beta2);
    nn::Adam<T> opt_d(critic.parameters(), cfg.beta1, cfg.beta2);
    Rng rng(cfg.seed);
    ConvCriticGraph<T> graph(critic, cfg.leak);
    GanTrainResult result;

    auto sample_real = [&](int b) {
        nn::Tensor<T> batch(Shape{b, cfg.seq_len, cfg.latent_ch});
        for (int i = 0; i < b; ++i) {
            const auto& c = codes[size_t(rng.uniform_int(int(codes.size())))];
            std::memcpy(batch.data() + int64_t(i) * c.size(), c.data(),
                        sizeof(T) * size_t(c.size()));
        }
        return batch;
    };
    auto sample_noise = [&](int b) {
        nn::Tensor<T> z(Shape{b, cfg.noise_dim});
        for (int64_t i = 0; i < z.size(); ++i) z[i] = T(rng.normal());
        return z;
    };
    auto fake_batch = [&](int b) {
        Tape<T> tg;
        int out = generator_forward(tg, gen, tg.constant(sample_noise(b)), true, rng, cfg);
        return tg.val(out);
    };

    for (int step = 0; step < cfg.steps; ++step) {
        double d_loss = 0, wass = 0, gp_v = 0;
        for (int k = 0; k < cfg.critic_steps; ++k) {
            nn::Tensor<T> real = sample_real(cfg.batch);
            nn::Tensor<T> fake = fake_batch(cfg.batch);
            Tape<T> tp;
            int sr = nn::mean_all(tp, critic_score(tp, critic, tp.constant(real), cfg.leak));
            int sf = nn::mean_all(tp, critic_score(tp, critic, tp.constant(fake), cfg.leak));
            int gp = gradient_penalty(tp, graph, real, fake, rng, cfg.lambda_gp);
            int loss = nn::add(tp, nn::linear_combo(tp, sf, T(1), sr, T(-1)), gp);
            d_loss = double(tp.val(loss)[0]);
            wass = double(tp.val(sr)[0] - tp.val(sf)[0]);
            gp_v = double(tp.val(gp)[0]);
            if (!std::isfinite(d_loss)) throw DivergedLoss(step);
            opt_d.zero_grad();
            tp.backward(loss);
            opt_d.step(cfg.lr);
        }
        // generator update: maximize E[D(G(z))]
        Tape<T> tp;
        int fake = generator_forward(tp, gen, tp.constant(sample_noise(cfg.batch)), true, rng,
                                     cfg);
        int sf = nn::mean_all(tp, critic_score(tp, critic, fake, cfg.leak));
        int loss = nn::scale(tp, sf, T(-1));
        double g_loss = double(tp.val(loss)[0]);
        if (!std::isfinite(g_loss)) throw DivergedLoss(step);
        opt_g.zero_grad();
        opt_d.zero_grad();  // critic grads from this pass are discarded
        tp.backward(loss);
        opt_g.step(cfg.lr);
        opt_d.zero_grad();

        GanStepLog entry{step, d_loss, g_loss, wass, gp_v};
        result.log.push_back(entry);
        if (on_step) on_step(entry);
    }
    return result;
}

// --- sampling -----------------------------------------------------------------------

struct GeneratedSample {
    QuantizedSequence tokens;
    bool valid = false;       // grammar-valid and geometry-valid
    std::string reason;       // failure reason when invalid
    CadSequence sequence;     // only meaningful when grammar-valid
    bool grammar_ok = false;
};

/// count noise draws -> fake codes -> frozen decoder -> argmax -> dequantize ->
/// geometry validity. Output count always equals the request.
template <typename T>
std::vector<GeneratedSample> sample_sequences(GeneratorParams<T>& gen, Autoencoder<T>& model,
                                              int count, uint64_t seed, const GanConfig& cfg) {
    std::vector<GeneratedSample> out;
    out.reserve(size_t(count));
    Rng rng(seed);
    int bs = 16;
    for (int at = 0; at < count; at += bs) {
        int b = std::min(bs, count - at);
        nn::Tensor<T> noise(Shape{b, cfg.noise_dim});
        for (int64_t i = 0; i < noise.size(); ++i) noise[i] = T(rng.normal());
        nn::Tensor<T> codes = generate_latent(gen, noise, cfg);
        auto tokens = model.decode_latents(codes);
        for (auto& q : tokens) {
            GeneratedSample s;
            s.tokens = q;
            try {
                s.sequence = dequantize(q);
                s.grammar_ok = true;
                geom::SolidScene scene = geom::build_scene(s.sequence);
                auto grid = geom::evaluate_grid(scene, 24);
                bool mixed = false, first = grid.values[0] < 0;
                for (double v : grid.values)
                    if ((v < 0) != first) {
                        mixed = true;
                        break;
                    }
                if (!mixed) throw EmptySolid();
                s.valid = true;
            } catch (const Error& e) {
                s.reason = e.what();
            }
            out.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace mcad::model
