// Acceptance suite: one pass/fail line per criterion. Run everything or a
// single criterion with --criterion N. Criterion 8 drives the CLI binary
// given via --mcad.

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "helpers_geom.hpp"
#include "helpers_nn.hpp"
#include "mcad/corpus.hpp"
#include "mcad/io.hpp"
#include "mcad/metrics.hpp"
#include "mcad/model/gan.hpp"
#include "mcad/threads.hpp"

using namespace mcad;
using mcad::nn::ScanMode;
using mcad::nn::Shape;
using mcad::nn::Tape;
using mcad::nn::Tensor;
using mcad::testing::gradcheck;
using nlohmann::json;

namespace {

std::string g_mcad_path;
std::string g_workdir = "/tmp/mcad_acceptance";

struct Outcome {
    bool pass;
    std::string detail;
};

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

// --- criterion 1: scan equivalence ------------------------------------------------

Outcome criterion_scan_equivalence() {
    double t0 = now_s();
    Rng rng(1001);
    float worst = 0;
    const int runs = 1000;
    for (int rep = 0; rep < runs; ++rep) {
        int L = 1 + rng.uniform_int(256);
        int D = 1 + rng.uniform_int(32);
        int N = 16;
        Tensor<float> x(Shape{1, L, D}), dt(Shape{1, L, D}), bs(Shape{1, L, N}),
            cs(Shape{1, L, N}), la(Shape{D, N});
        for (int64_t i = 0; i < x.size(); ++i) x[i] = float(rng.uniform(-1, 1));
        for (int64_t i = 0; i < dt.size(); ++i) dt[i] = float(rng.uniform(-2, 1));
        for (int64_t i = 0; i < bs.size(); ++i) bs[i] = float(rng.uniform(-1, 1));
        for (int64_t i = 0; i < cs.size(); ++i) cs[i] = float(rng.uniform(-1, 1));
        for (int64_t i = 0; i < la.size(); ++i) la[i] = float(rng.uniform(-3, 1));
        auto run = [&](ScanMode m) {
            Tape<float> tp;
            int y = nn::ssm_scan(tp, tp.constant(x), tp.constant(dt), tp.constant(bs),
                                 tp.constant(cs), tp.constant(la), m);
            return tp.val(y);
        };
        Tensor<float> ys = run(ScanMode::Sequential);
        Tensor<float> yp = run(ScanMode::Parallel);
        float max_abs = 1e-6f;
        for (int64_t i = 0; i < ys.size(); ++i) max_abs = std::max(max_abs, std::abs(ys[i]));
        for (int64_t i = 0; i < ys.size(); ++i)
            worst = std::max(worst, std::abs(ys[i] - yp[i]) / max_abs);
    }
    double dt_s = now_s() - t0;
    bool pass = worst < 1e-5f && dt_s < 60.0;
    return {pass, fmt("%d runs, max rel dev %.2e, %.1fs", runs, double(worst), dt_s)};
}

// --- criterion 2: gradient correctness ---------------------------------------------

Outcome criterion_gradients() {
    double worst = 0;
    int checked = 0;
    auto track = [&](const mcad::testing::GradCheckResult& r) {
        worst = std::max(worst, r.max_rel_err);
        checked += r.checked;
    };
    Rng rng(2002);

    // discretize, both phi branches, against analytic derivatives
    for (double za : {-1e-5, 1e-5, -0.5, 0.7}) {
        double a = -0.8, delta = -za / 0.8;  // delta*a == za
        if (delta <= 0) {
            a = 0.8;
            delta = za / 0.8;
        }
        double h = 1e-7;
        auto bbar_of = [&](double dd) {
            double ab, bb;
            nn::discretize(a, 1.3, dd, ab, bb);
            return bb;
        };
        auto abar_of = [&](double dd) {
            double ab, bb;
            nn::discretize(a, 1.3, dd, ab, bb);
            return ab;
        };
        double ab, bb;
        nn::discretize(a, 1.3, delta, ab, bb);
        double z = delta * a;
        double dA_dd = a * ab;
        double dB_dd = 1.3 * (nn::dphi_of(z, ab) * a * delta + nn::phi_of(z, ab));
        double nA = (abar_of(delta + h) - abar_of(delta - h)) / (2 * h);
        double nB = (bbar_of(delta + h) - bbar_of(delta - h)) / (2 * h);
        worst = std::max(worst, std::abs(nA - dA_dd) / std::max(1e-6, std::abs(nA)));
        worst = std::max(worst, std::abs(nB - dB_dd) / std::max(1e-6, std::abs(nB)));
        checked += 2;
    }

    // scan (both evaluation routes, dt spanning the series boundary)
    {
        int B = 1, L = 5, D = 2, N = 3;
        nn::Parameter<double> x("x", Shape{B, L, D}), dt("dt", Shape{B, L, D}),
            bs("bs", Shape{B, L, N}), cs("cs", Shape{B, L, N}), la("la", Shape{D, N});
        mcad::testing::fill_random(x, rng);
        mcad::testing::fill_random(bs, rng);
        mcad::testing::fill_random(cs, rng);
        for (int64_t i = 0; i < dt.value.size(); ++i)
            dt.value[i] = (i % 2 == 0) ? -12.0 + rng.uniform(-0.5, 0.5) : rng.uniform(-1, 1);
        for (int64_t i = 0; i < la.value.size(); ++i) la.value[i] = rng.uniform(-2, 0.5);
        for (ScanMode mode : {ScanMode::Sequential, ScanMode::Parallel}) {
            track(gradcheck({&x, &dt, &bs, &cs, &la}, [&](Tape<double>& t) {
                int y = nn::ssm_scan(t, t.param(x), t.param(dt), t.param(bs), t.param(cs),
                                     t.param(la), mode);
                return nn::mean_all(t, nn::mul(t, y, y));
            }, 1e-5));
        }
    }

    // one Mamba block
    {
        model::MambaBlockParams<double> blk("blk", 6, 2, 3, 4);
        blk.init(rng);
        nn::Parameter<double> x("x", Shape{1, 10, 6});
        mcad::testing::fill_random(x, rng);
        std::vector<nn::Parameter<double>*> params = {&x};
        for (auto* p : blk.parameters()) params.push_back(p);
        track(gradcheck(params, [&](Tape<double>& tp) {
            int y = model::mamba_block(tp, blk, tp.param(x), ScanMode::Sequential);
            return nn::mean_all(tp, nn::mul(tp, y, y));
        }));
    }

    // the fusion embedding
    {
        int B = 2, L = 5, dE = 8;
        nn::Parameter<double> wc("wc", Shape{6, dE}), wpa("wpa", Shape{dE, 16 * dE}),
            wpb("wpb", Shape{257, dE});
        mcad::testing::fill_random(wc, rng);
        mcad::testing::fill_random(wpa, rng);
        mcad::testing::fill_random(wpb, rng);
        auto pos = std::make_shared<Tensor<double>>(nn::sinusoidal_positions<double>(L, dE));
        auto cmds = std::make_shared<std::vector<int32_t>>();
        auto bins = std::make_shared<std::vector<int32_t>>();
        for (int i = 0; i < B * L; ++i) {
            cmds->push_back(rng.uniform_int(6));
            for (int j = 0; j < 16; ++j) bins->push_back(rng.uniform_int(257));
        }
        track(gradcheck({&wc, &wpa, &wpb}, [&](Tape<double>& tp) {
            int e = nn::fusion_embed(tp, tp.param(wc), tp.param(wpa), tp.param(wpb), cmds, bins,
                                     pos, B, L, 16);
            return nn::mean_all(tp, nn::mul(tp, e, e));
        }, 1e-4, 600));
    }

    // full tiny autoencoder, d_e = 16, L = 8; stride-sampled on the two
    // largest head/embedding matrices, dense elsewhere
    {
        model::ModelConfig mc;
        mc.d_e = 16;
        mc.n_blocks = 1;
        mc.d_state = 4;
        mc.latent_ch = 4;
        mc.compress_mid = 8;
        mc.seq_len = 8;
        mc.scan = "sequential";
        model::Autoencoder<double> net(mc, 11);
        model::Batch batch;
        batch.b = 2;
        batch.l = 8;
        batch.cmds = std::make_shared<std::vector<int32_t>>();
        batch.bins = std::make_shared<std::vector<int32_t>>();
        for (int i = 0; i < 16; ++i) {
            batch.cmds->push_back(rng.uniform_int(6));
            for (int j = 0; j < 16; ++j) batch.bins->push_back(rng.uniform_int(257));
        }
        auto params = net.parameters();
        track(gradcheck(params, [&](Tape<double>& tp) {
            auto out = net.decode(tp, net.encode(tp, net.embed(tp, batch)), true);
            return net.loss(tp, out, batch).total;
        }, 1e-4, 2048, 23));
    }

    bool pass = worst < 1e-3;
    return {pass, fmt("%d entries checked, max rel err %.2e", checked, worst)};
}

// --- criterion 3: codec round trip ---------------------------------------------------

Outcome criterion_codec_round_trip() {
    Rng rng(3003);
    int count = 10000;
    for (int i = 0; i < count; ++i) {
        CadSequence seq = mcad::testing::random_valid_sequence(rng, 3, 128);
        QuantizedSequence q = quantize(seq);
        CadSequence back = dequantize(q);
        if (back.raw_length != seq.raw_length)
            return {false, fmt("raw_length mismatch at case %d", i)};
        for (int t = 0; t < seq.raw_length; ++t) {
            if (back.at(t).kind != seq.at(t).kind)
                return {false, fmt("command mismatch at case %d pos %d", i, t)};
            for (int j = 0; j < kNumSlots; ++j) {
                double a = seq.at(t).slots[size_t(j)], b = back.at(t).slots[size_t(j)];
                bool used = slot_used(seq.at(t).kind, j);
                if (!used || slot_discrete(j)) {
                    if (a != b) return {false, fmt("discrete slot drift at case %d", i)};
                } else if (std::abs(a - b) > 1.0 / 255.0 + 1e-12) {
                    return {false, fmt("slot error > 1/255 at case %d", i)};
                }
            }
        }
        if (!(quantize(back) == q)) return {false, fmt("bin round trip failed at case %d", i)};
    }
    return {true, fmt("%d sequences, commands exact, |slot err| <= 1/255, bins fixed-point",
                      count)};
}

// --- criterion 4: geometry oracle ---------------------------------------------------

Outcome criterion_geometry_oracle() {
    Rng rng(4004);
    int64_t points = 0;
    for (int s = 0; s < 100; ++s) {
        geom::SolidScene scene = geom::build_scene(mcad::testing::random_single_body(rng));
        for (int i = 0; i < 10000; ++i) {
            geom::Vec3 q = mcad::testing::random_point_near(scene.bounds(), rng);
            bool inside = scene.sdf(q) < 0;
            if (inside != mcad::testing::oracle_inside(scene.bodies()[0], q))
                return {false, fmt("sign mismatch, scene %d point %d", s, i)};
            ++points;
        }
    }
    // CSG sign identities
    for (int s = 0; s < 40; ++s) {
        CadSequence a = mcad::testing::random_single_body(rng);
        CadSequence b = mcad::testing::random_single_body(rng);
        std::vector<Command> cmds;
        for (int t = 0; t < a.raw_length; ++t) cmds.push_back(a.at(t));
        for (int t = 0; t < b.raw_length; ++t) cmds.push_back(b.at(t));
        bool cut = s % 2 == 0;
        cmds.back().slots[slot::Bool] = cut ? 2 : 3;
        geom::SolidScene scene = geom::build_scene(mcad::testing::make_sequence(cmds));
        for (int i = 0; i < 1000; ++i) {
            geom::Vec3 q = mcad::testing::random_point_near(scene.bounds(), rng);
            bool in_a = scene.body_sdf(0, q) < 0;
            bool in_b = scene.body_sdf(1, q) < 0;
            bool in_scene = scene.sdf(q) < 0;
            bool expect = cut ? (in_a && !in_b) : (in_a && in_b);
            if (in_scene != expect) return {false, fmt("CSG identity failed, scene %d", s)};
            ++points;
        }
    }
    return {true, fmt("100 scenes x 10k points sign-exact, CSG identities at %lld points",
                      (long long)points)};
}

// --- criterion 5: metric oracles ------------------------------------------------------

Outcome criterion_metric_oracles() {
    Rng rng(5005);
    // chamfer accelerated == brute exactly
    for (int i = 0; i < 100; ++i) {
        geom::PointCloud p, q;
        int n = 20 + rng.uniform_int(300), m = 20 + rng.uniform_int(300);
        for (int k = 0; k < n; ++k)
            p.pts.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
        for (int k = 0; k < m; ++k)
            q.pts.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
        if (metrics::chamfer(p, q) != metrics::chamfer_brute(p, q))
            return {false, fmt("accelerated chamfer != brute at pair %d", i)};
    }
    // hand-derived examples
    {
        geom::PointCloud a, b;
        a.pts.push_back({0, 0, 0});
        b.pts.push_back({1, 0, 0});
        if (std::abs(metrics::chamfer(a, b) - 2.0) > 1e-12)
            return {false, "two-point chamfer != 2.0"};
    }
    {
        Rng r2(55);
        QuantizedSequence gt = quantize(mcad::testing::random_valid_sequence(r2, 10, 60));
        QuantizedSequence pred = gt;
        for (int t = 0; t < 32; ++t)
            pred.command_ids[size_t(t * 4)] =
                uint8_t((pred.command_ids[size_t(t * 4)] + 1) % kCommandKinds);
        if (metrics::command_accuracy(gt, pred) != 96.0 / 128.0)
            return {false, "A_c 96/128 example failed"};
        if (metrics::command_accuracy(gt, gt) != 1.0) return {false, "A_c identity failed"};
    }
    {
        // eta = 3 strict boundary
        CadSequence seq = mcad::testing::make_sequence(
            {mcad::testing::sol(), mcad::testing::line(0.25, -0.5),
             mcad::testing::extrude(mcad::testing::ExtrudeSpec{})});
        QuantizedSequence gt = quantize(seq);
        QuantizedSequence off2 = gt, off3 = gt;
        off2.bin(1, slot::X) = uint16_t(off2.bin(1, slot::X) + 2);
        off3.bin(1, slot::X) = uint16_t(off3.bin(1, slot::X) + 3);
        if (*metrics::parameter_accuracy(gt, off2, 3) != 1.0)
            return {false, "A_p off-by-2 should count correct"};
        if (*metrics::parameter_accuracy(gt, off3, 3) == 1.0)
            return {false, "A_p off-by-exactly-3 must count wrong"};
    }
    {
        std::vector<geom::PointCloud> ref;
        for (int i = 0; i < 4; ++i) {
            geom::PointCloud c;
            for (int k = 0; k < 48; ++k)
                c.pts.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
            ref.push_back(c);
        }
        auto m = metrics::generation_metrics(ref, ref);
        if (m.cov != 1.0 || m.mmd != 0.0 || m.jsd != 0.0)
            return {false, "identical-set COV/MMD/JSD identities failed"};

        geom::PointCloud c1, c2;
        for (int k = 0; k < 32; ++k) {
            c1.pts.push_back({rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), 0});
            c2.pts.push_back({10 + rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), 0});
        }
        auto m2 = metrics::generation_metrics({c1}, {c1, c2});
        if (m2.cov != 0.5) return {false, "half-coverage example failed"};

        geom::PointCloud left, right;
        for (int k = 0; k < 40; ++k) {
            left.pts.push_back({rng.uniform(-0.9, -0.5), 0, 0});
            right.pts.push_back({rng.uniform(0.5, 0.9), 0, 0});
        }
        if (std::abs(metrics::occupancy_jsd({left}, {right}) - std::log(2.0)) > 1e-12)
            return {false, "disjoint-support JSD != ln 2"};
    }
    return {true, "chamfer bit-equal x100; A_c/A_p/COV/MMD/JSD hand examples exact; eta strict"};
}

// --- criterion 6: desk-scale training smoke --------------------------------------------

Outcome criterion_training_smoke() {
    double t0 = now_s();
    corpus::SynthConfig sc;
    sc.count = 64;
    sc.seed = 9;
    sc.min_len = 10;
    sc.max_len = 96;
    auto recs = corpus::synthesize(sc);
    std::vector<QuantizedSequence> corpus_q;
    for (auto& r : recs) corpus_q.push_back(quantize(normalize(sequence_from_record(r))));

    model::ModelConfig mc;
    mc.d_e = 96;
    mc.scan = "sequential";
    model::Autoencoder<float> net(mc, 1);
    model::TrainConfig tc;
    tc.batch = 16;
    tc.lr = 1e-3;
    tc.warmup_steps = 250;
    tc.max_steps = 3000;
    tc.seed = 2;
    tc.eval_every = 50;
    tc.target_ac = 0.99;
    tc.target_ap = 0.95;

    std::vector<double> losses;
    auto res = model::pretrain(net, corpus_q, tc, [&](const model::StepLog& l) {
        losses.push_back(l.loss_cmd + l.loss_par);
    });
    double wall = now_s() - t0;

    int violations = 0;
    auto ma = [&](int i) {
        double s = 0;
        for (int k = i - 4; k <= i; ++k) s += losses[size_t(k)];
        return s / 5.0;
    };
    for (int i = 5; i < 200 && i < int(losses.size()); ++i)
        if (!(ma(i) < ma(i - 1))) ++violations;

    // identity sanity: count training samples reconstructed token-for-token
    int exact = 0;
    for (const auto& q : corpus_q)
        if (model::reconstruct(net, q) == q) ++exact;

    bool pass = res.reached_targets && res.steps_run <= 3000 && wall < 1800 && violations == 0;
    return {pass,
            fmt("A_c=%.4f A_p=%.4f at step %d, %.0fs wall, %d MA violations in first 200, "
                "%d/64 token-exact",
                res.final_ac, res.final_ap, res.steps_run, wall, violations, exact)};
}

// --- criterion 7: GAN smoke ---------------------------------------------------------------

struct LinearCriticGraph : model::CriticGradGraph<double> {
    nn::Parameter<double>* w;
    explicit LinearCriticGraph(nn::Parameter<double>* w_) : w(w_) {}
    int input_grad(Tape<double>& tp, const Tensor<double>& xhat) override {
        int g = nn::tile_rows(tp, tp.param(*w), xhat.shape[0]);
        return nn::reshape(tp, g, xhat.shape);
    }
};

Outcome criterion_gan_smoke() {
    // gradient-penalty unit identities
    Rng rng(7007);
    int L = 16, C = 4, B = 3;
    nn::Parameter<double> w("w", Shape{L * C});
    double norm2 = 0;
    for (int64_t i = 0; i < w.value.size(); ++i) {
        w.value[i] = rng.uniform(-1, 1);
        norm2 += w.value[i] * w.value[i];
    }
    for (int64_t i = 0; i < w.value.size(); ++i) w.value[i] /= std::sqrt(norm2);
    Tensor<double> xhat(Shape{B, L, C});
    for (int64_t i = 0; i < xhat.size(); ++i) xhat[i] = rng.uniform(-1, 1);

    LinearCriticGraph lin(&w);
    Tape<double> t1;
    double p_lin = t1.val(model::gradient_penalty_at(t1, lin, xhat, 10.0))[0];
    nn::Parameter<double> w0("w0", Shape{L * C});
    LinearCriticGraph zero(&w0);
    Tape<double> t2;
    double p_zero = t2.val(model::gradient_penalty_at(t2, zero, xhat, 10.0))[0];
    if (std::abs(p_lin) > 1e-10 || p_zero != 10.0)
        return {false, fmt("GP identities: linear %.2e (want ~0), zero %.4f (want 10)", p_lin,
                           p_zero)};

    // degenerate-target convergence: fixed smooth pattern + small noise.
    // Test config: batch 16, lr 1e-3 (the module default 1e-4 cannot move the
    // generator far enough within the 2000-step budget).
    model::GanConfig cfg;
    cfg.batch = 16;
    cfg.lr = 1e-3;
    cfg.steps = 2000;
    cfg.seed = 3;
    Rng prng(11);
    Tensor<float> pattern(Shape{cfg.seq_len, cfg.latent_ch});
    for (int64_t i = 0; i < pattern.size(); ++i)
        pattern[i] =
            float(0.2 * std::sin(double(i) * 0.05) + 0.1 * std::cos(double(i) * 0.013));
    std::vector<Tensor<float>> codes;
    for (int i = 0; i < 64; ++i) {
        Tensor<float> c = pattern;
        for (int64_t k = 0; k < c.size(); ++k) c[k] += float(prng.normal() * 0.02);
        codes.push_back(std::move(c));
    }
    model::GeneratorParams<float> gen(cfg, 21);
    model::CriticParams<float> critic(cfg, 22);
    auto result = model::train_gan(gen, critic, codes, cfg);

    Rng nr(99);
    Tensor<float> noise(Shape{16, cfg.noise_dim});
    for (int64_t i = 0; i < noise.size(); ++i) noise[i] = float(nr.normal());
    Tensor<float> out = model::generate_latent(gen, noise, cfg);
    double mad = 0;
    for (int b = 0; b < 16; ++b)
        for (int64_t i = 0; i < pattern.size(); ++i)
            mad += std::abs(double(out[int64_t(b) * pattern.size() + i] - pattern[i]));
    mad /= double(16 * pattern.size());

    double early = 0, late = 0;
    for (int i = 50; i < 250; ++i) early += std::abs(result.log[size_t(i)].wasserstein);
    early /= 200;
    for (size_t i = result.log.size() - 200; i < result.log.size(); ++i)
        late += std::abs(result.log[i].wasserstein);
    late /= 200;

    bool pass = mad < 0.1 && late < early;
    return {pass, fmt("GP identities exact; MAD %.4f after 2000 steps (< 0.1); |W| %.2f -> %.2f",
                      mad, early, late)};
}

// --- criterion 8: pipeline end to end -------------------------------------------------------

int run_cmd(const std::string& cmd) {
    std::fprintf(stderr, "+ %s\n", cmd.c_str());
    return std::system(cmd.c_str());
}

Outcome criterion_pipeline() {
    if (g_mcad_path.empty()) return {false, "--mcad path not provided"};
    namespace fs = std::filesystem;
    std::string dir = g_workdir + "/pipeline";
    fs::remove_all(dir);
    fs::create_directories(dir);

    std::string cfg_path = dir + "/e2e.toml";
    {
        std::ofstream cfg(cfg_path);
        cfg << "[model]\nd_e = 96\nscan = \"sequential\"\n"
            << "[train]\nlr = 0.001\nwarmup_steps = 150\nbatch = 16\nsteps = 700\nseed = 2\n"
            << "[gan]\nlr = 0.001\nbatch = 16\nsteps = 600\nseed = 5\n";
    }
    auto sh = [&](const std::string& args) { return run_cmd(g_mcad_path + " " + args); };

    if (sh("synth --out " + dir + "/corpus.jsonl --count 120 --min-len 10 --max-len 40 --seed 11"))
        return {false, "synth failed"};
    if (sh("split --in " + dir + "/corpus.jsonl --out-prefix " + dir + "/ --seed 3"))
        return {false, "split failed"};
    if (sh("pretrain --corpus " + dir + "/train.jsonl --config " + cfg_path + " --out " + dir +
           "/ae.mcpt --log " + dir + "/train.csv"))
        return {false, "pretrain failed"};
    if (sh("train-gan --corpus " + dir + "/train.jsonl --ae " + dir + "/ae.mcpt --config " +
           cfg_path + " --out " + dir + "/gan.mcpt --log " + dir + "/gan.csv"))
        return {false, "train-gan failed"};
    if (sh("generate --count 100 --seed 7 --ae " + dir + "/ae.mcpt --gan " + dir +
           "/gan.mcpt --out " + dir + "/gen"))
        return {false, "generate failed"};
    if (sh("eval --task gen --results " + dir + "/gen.results.jsonl --ref " + dir +
           "/test.jsonl --train " + dir + "/train.jsonl --points 256 --ref-limit 12 --seed 1 "
           "--out " + dir + "/report.json"))
        return {false, "eval failed"};

    auto gen_lines = io::read_lines(dir + "/gen.jsonl");
    if (gen_lines.empty()) return {false, "no valid generated sequence"};

    auto read_json = [](const std::string& path) {
        std::ifstream in(path);
        std::stringstream ss;
        ss << in.rdbuf();
        return json::parse(ss.str());
    };
    json report = read_json(dir + "/report.json");
    for (const char* key : {"mmd", "jsd", "cov", "unique", "novel", "al", "export_ratio"}) {
        if (!report.contains(key)) return {false, fmt("report missing column %s", key)};
        double v = report[key].get<double>();
        if (!std::isfinite(v)) return {false, fmt("report column %s not finite", key)};
    }

    // generate determinism: equal seeds give identical output files
    if (sh("generate --count 3 --seed 7 --ae " + dir + "/ae.mcpt --gan " + dir +
           "/gan.mcpt --out " + dir + "/gen_a") ||
        sh("generate --count 3 --seed 7 --ae " + dir + "/ae.mcpt --gan " + dir +
           "/gan.mcpt --out " + dir + "/gen_b"))
        return {false, "repeat generate failed"};
    for (const char* suffix : {".results.jsonl", ".jsonl"}) {
        auto a = io::read_lines(dir + "/gen_a" + std::string(suffix));
        auto b = io::read_lines(dir + "/gen_b" + std::string(suffix));
        if (a != b) return {false, fmt("generate not deterministic (%s)", suffix)};
    }

    // reconstruct + eval on the test split
    if (sh("reconstruct --corpus " + dir + "/test.jsonl --ae " + dir + "/ae.mcpt --out " + dir +
           "/recon.jsonl"))
        return {false, "reconstruct failed"};
    if (sh("eval --task recon --results " + dir + "/recon.jsonl --gt " + dir +
           "/test.jsonl --points 256 --seed 1 --out " + dir + "/recon_report.json"))
        return {false, "eval recon failed"};
    json rrep = read_json(dir + "/recon_report.json");
    if (!rrep.contains("a_c") || !rrep.contains("a_p") || !rrep.contains("ir"))
        return {false, "recon report missing columns"};

    // eval on a perfect self-reconstruction fixture: a_c = a_p = 1 exactly
    {
        auto gt_lines = io::read_lines(dir + "/test.jsonl");
        std::vector<std::string> fixture;
        for (const auto& line : gt_lines) {
            QuantizedSequence q = quantize(normalize(sequence_from_record(line)));
            json j;
            j["id"] = "fixture";
            j["valid"] = true;
            j["command_ids"] = std::vector<int>(q.command_ids.begin(), q.command_ids.end());
            j["param_bins"] = std::vector<int>(q.param_bins.begin(), q.param_bins.end());
            fixture.push_back(j.dump());
        }
        io::write_lines(dir + "/fixture.jsonl", fixture);
        if (sh("eval --task recon --results " + dir + "/fixture.jsonl --gt " + dir +
               "/test.jsonl --points 128 --seed 1 --out " + dir + "/fixture_report.json"))
            return {false, "eval fixture failed"};
        json frep = read_json(dir + "/fixture_report.json");
        if (frep["a_c"].get<double>() != 1.0 || frep["a_p"].get<double>() != 1.0)
            return {false, "self-reconstruction fixture a_c/a_p != 1.0"};
    }

    // complete --mask 0.4 --dump-mask: exactly floor(0.4 * raw_length) masked
    if (sh("complete --corpus " + dir + "/test.jsonl --ae " + dir + "/ae.mcpt --mask 0.4 "
           "--seed 3 --dump-mask --out " + dir + "/comp.jsonl"))
        return {false, "complete failed"};
    {
        auto gt_lines = io::read_lines(dir + "/test.jsonl");
        auto comp_lines = io::read_lines(dir + "/comp.jsonl");
        if (comp_lines.size() != gt_lines.size()) return {false, "complete output size"};
        for (size_t i = 0; i < comp_lines.size(); ++i) {
            json j = json::parse(comp_lines[i]);
            int raw = sequence_from_record(gt_lines[i]).raw_length;
            int expect = int(std::floor(0.4 * raw));
            if (int(j["masked_positions"].size()) != expect)
                return {false, fmt("mask count %zu != floor(0.4*%d) at record %zu",
                                   j["masked_positions"].size(), raw, i)};
        }
    }

    // export + quantize subcommands
    if (sh("export --format obj --in " + dir + "/test.jsonl --out-dir " + dir + "/meshes"))
        return {false, "export failed"};
    if (sh("quantize --in " + dir + "/test.jsonl --out " + dir + "/test.mcad1"))
        return {false, "quantize failed"};
    if (io::read_quantized(dir + "/test.mcad1").empty()) return {false, "mcad1 file empty"};

    // ablate runs the variant config end to end (short budget)
    if (sh("ablate --variant C --corpus " + dir + "/train.jsonl --config " + cfg_path +
           " --steps 20 --out " + dir + "/ablC.mcpt"))
        return {false, "ablate failed"};

    return {true, fmt("pipeline complete; %zu valid generated; Table-5 columns finite; "
                      "recon a_c=%.3f; fixture exact; mask counts exact",
                      gen_lines.size(), rrep["a_c"].get<double>())};
}

// --- criterion 9: dataset arithmetic ---------------------------------------------------------

Outcome criterion_dataset() {
    corpus::SynthConfig sc;
    sc.count = 77078;
    sc.seed = 123;
    sc.min_len = 10;
    sc.max_len = 16;  // short records keep the verification pass quick
    auto recs = corpus::synthesize(sc);
    auto r = corpus::split(int(recs.size()), 0.8, 0.1, 7);
    if (r.train.size() != 61662 || r.val.size() != 7707 || r.test.size() != 7709)
        return {false, fmt("split sizes %zu/%zu/%zu", r.train.size(), r.val.size(),
                           r.test.size())};

    // filter thresholds: reject raw length 9, accept raw length 128
    corpus::SynthConfig s9 = sc;
    s9.count = 1;
    s9.min_len = 9;
    s9.max_len = 9;
    corpus::SynthConfig s128 = sc;
    s128.count = 1;
    s128.min_len = 128;
    s128.max_len = 128;
    auto rec9 = corpus::synthesize(s9);
    auto rec128 = corpus::synthesize(s128);
    auto f = corpus::filter_corpus({rec9[0], rec128[0]}, 10, 128);
    if (f.stats.kept != 1 || f.stats.rejected["too_short"] != 1)
        return {false, "filter thresholds wrong"};
    if (sequence_from_record(f.records[0]).raw_length != 128)
        return {false, "length-128 record was not the one kept"};
    return {true, "77,078 -> 61,662/7,707/7,709; rejects length 9, accepts length 128"};
}

// --- criterion 10: ablation harness -----------------------------------------------------------

Outcome criterion_ablations() {
    Rng rng(1010);
    // shape + gradient suites under each variant configuration
    for (std::string variant : {"A", "B", "C"}) {
        model::ModelConfig mc;
        mc.d_e = 16;
        mc.n_blocks = 1;
        mc.d_state = 4;
        mc.latent_ch = 4;
        mc.compress_mid = 8;
        mc.seq_len = 8;
        mc.n_heads = 2;
        mc.scan = "sequential";
        if (variant == "A") mc.block_type = "attention";
        if (variant == "B") mc.compress_type = "mlp";
        if (variant == "C") {
            mc.bottleneck = true;
            mc.bottleneck_dim = 8;
        }
        model::Autoencoder<double> net(mc, 17);
        model::Batch batch;
        batch.b = 2;
        batch.l = 8;
        batch.cmds = std::make_shared<std::vector<int32_t>>();
        batch.bins = std::make_shared<std::vector<int32_t>>();
        for (int i = 0; i < 16; ++i) {
            batch.cmds->push_back(rng.uniform_int(6));
            for (int j = 0; j < 16; ++j) batch.bins->push_back(rng.uniform_int(257));
        }
        Tape<double> shapes;
        int z = net.encode(shapes, net.embed(shapes, batch));
        if (!(shapes.val(z).shape == Shape{2, 8, 4}))
            return {false, "variant " + variant + " latent shape wrong"};
        auto out = net.decode(shapes, z, false);
        if (!(shapes.val(out.par_logits).shape == Shape{2, 8, 16, 257}))
            return {false, "variant " + variant + " logits shape wrong"};
        auto params = net.parameters();
        auto res = gradcheck(params, [&](Tape<double>& tp) {
            auto o = net.decode(tp, net.encode(tp, net.embed(tp, batch)), true);
            return net.loss(tp, o, batch).total;
        }, 1e-4, 512, 101);
        if (res.max_rel_err >= 1e-3)
            return {false, fmt("variant %s gradients at %.2e", variant.c_str(),
                               res.max_rel_err)};
    }

    // directional check: equal-budget overfit, final loss mamba <= variant A
    corpus::SynthConfig sc;
    sc.count = 64;
    sc.seed = 9;
    sc.min_len = 10;
    sc.max_len = 96;
    auto recs = corpus::synthesize(sc);
    std::vector<QuantizedSequence> corpus_q;
    for (auto& r : recs) corpus_q.push_back(quantize(normalize(sequence_from_record(r))));

    auto final_loss = [&](const std::string& block) {
        model::ModelConfig mc;
        mc.d_e = 96;
        mc.scan = "sequential";
        mc.block_type = block;
        model::Autoencoder<float> net(mc, 1);
        model::TrainConfig tc;
        tc.batch = 16;
        tc.lr = 1e-3;
        tc.warmup_steps = 100;
        tc.max_steps = 400;
        tc.seed = 2;
        auto res = model::pretrain(net, corpus_q, tc);
        double s = 0;
        for (size_t i = res.log.size() - 20; i < res.log.size(); ++i)
            s += res.log[i].loss_cmd + res.log[i].loss_par;
        return s / 20.0;
    };
    double mamba_loss = final_loss("mamba");
    double attn_loss = final_loss("attention");
    bool pass = mamba_loss <= attn_loss;
    return {pass, fmt("variants A/B/C shape+grad ok; 400-step loss mamba %.4f vs attention %.4f",
                      mamba_loss, attn_loss)};
}

}  // namespace

int main(int argc, char** argv) {
    configure_threads();
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg == "--criterion" && i + 1 < argc) only = std::atoi(argv[++i]);
        else if (arg == "--mcad" && i + 1 < argc) g_mcad_path = argv[++i];
        else if (arg == "--workdir" && i + 1 < argc) g_workdir = argv[++i];
    }
    std::filesystem::create_directories(g_workdir);

    struct Entry {
        int id;
        const char* name;
        Outcome (*fn)();
    };
    const Entry entries[] = {
        {1, "scan equivalence", criterion_scan_equivalence},
        {2, "gradient correctness", criterion_gradients},
        {3, "codec round trip", criterion_codec_round_trip},
        {4, "geometry oracle", criterion_geometry_oracle},
        {5, "metric oracles", criterion_metric_oracles},
        {6, "desk-scale training smoke", criterion_training_smoke},
        {7, "GAN smoke", criterion_gan_smoke},
        {8, "pipeline end-to-end", criterion_pipeline},
        {9, "dataset arithmetic", criterion_dataset},
        {10, "ablation harness", criterion_ablations},
    };

    int failures = 0;
    for (const Entry& e : entries) {
        if (only != 0 && e.id != only) continue;
        Outcome o{false, "exception"};
        try {
            o = e.fn();
        } catch (const std::exception& ex) {
            o = {false, std::string("exception: ") + ex.what()};
        }
        std::printf("[%s] criterion %2d: %s (%s)\n", o.pass ? "PASS" : "FAIL", e.id, e.name,
                    o.detail.c_str());
        std::fflush(stdout);
        if (!o.pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
