// Benchmark of the OpenMP kernels against their serial references:
// selective scan (sequential recurrence vs Blelloch prefix combine),
// Chamfer nearest-neighbor (brute force vs bucket grid), and SDF grid
// evaluation (serial vs parallel). Each row reports times, speedup, and the
// max deviation between the two routes.

#include <chrono>
#include <cstdio>

#include "mcad/corpus.hpp"
#include "mcad/geometry.hpp"
#include "mcad/metrics.hpp"
#include "mcad/nn/ssm.hpp"
#include "mcad/threads.hpp"

using namespace mcad;
using nn::ScanMode;
using nn::Shape;
using nn::Tape;
using nn::Tensor;

namespace {

double now() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

template <class F>
double time_of(F&& f, int reps) {
    f();  // warm
    double t0 = now();
    for (int i = 0; i < reps; ++i) f();
    return (now() - t0) / reps;
}

void bench_scan() {
    std::printf("selective scan: sequential recurrence vs Blelloch prefix combine\n");
    std::printf("%8s %6s %4s | %12s %12s %8s %12s\n", "L", "D", "N", "seq (ms)", "par (ms)",
                "speedup", "max rel dev");
    Rng rng(1);
    for (auto [L, D, N] : {std::tuple{128, 256, 16}, {512, 256, 16}, {2048, 64, 16},
                           {128, 512, 16}}) {
        Tensor<float> x(Shape{1, L, D}), dt(Shape{1, L, D}), bs(Shape{1, L, N}),
            cs(Shape{1, L, N}), la(Shape{D, N});
        for (int64_t i = 0; i < x.size(); ++i) x[i] = float(rng.uniform(-1, 1));
        for (int64_t i = 0; i < dt.size(); ++i) dt[i] = float(rng.uniform(-2, 1));
        for (int64_t i = 0; i < bs.size(); ++i) bs[i] = float(rng.uniform(-1, 1));
        for (int64_t i = 0; i < cs.size(); ++i) cs[i] = float(rng.uniform(-1, 1));
        for (int64_t i = 0; i < la.size(); ++i) la[i] = float(rng.uniform(-3, 1));

        Tensor<float> ys, yp;
        auto run = [&](ScanMode mode, Tensor<float>& out) {
            Tape<float> tp;
            int y = nn::ssm_scan(tp, tp.constant(x), tp.constant(dt), tp.constant(bs),
                                 tp.constant(cs), tp.constant(la), mode);
            out = tp.val(y);
        };
        double ts = time_of([&] { run(ScanMode::Sequential, ys); }, 3);
        double tpar = time_of([&] { run(ScanMode::Parallel, yp); }, 3);
        float max_abs = 0, max_dev = 0;
        for (int64_t i = 0; i < ys.size(); ++i) max_abs = std::max(max_abs, std::abs(ys[i]));
        for (int64_t i = 0; i < ys.size(); ++i)
            max_dev = std::max(max_dev, std::abs(ys[i] - yp[i]) / std::max(1e-6f, max_abs));
        std::printf("%8d %6d %4d | %12.3f %12.3f %8.2f %12.2e\n", L, D, N, ts * 1e3, tpar * 1e3,
                    ts / tpar, double(max_dev));
    }
}

void bench_chamfer() {
    std::printf("\nchamfer: brute force vs bucket grid (exact, bit-equal)\n");
    std::printf("%8s %8s | %12s %12s %8s %8s\n", "|P|", "|Q|", "brute (ms)", "bucket (ms)",
                "speedup", "equal");
    Rng rng(2);
    for (int n : {1000, 2000, 5000, 10000}) {
        geom::PointCloud p, q;
        for (int i = 0; i < n; ++i) {
            p.pts.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
            q.pts.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
        }
        double vb = 0, vf = 0;
        double tb = time_of([&] { vb = metrics::chamfer_brute(p, q); }, 1);
        double tf = time_of([&] { vf = metrics::chamfer(p, q); }, 1);
        std::printf("%8d %8d | %12.2f %12.2f %8.1f %8s\n", n, n, tb * 1e3, tf * 1e3, tb / tf,
                    vb == vf ? "yes" : "NO");
    }
}

void bench_grid() {
    std::printf("\nSDF grid evaluation: serial vs OpenMP\n");
    std::printf("%8s %8s | %12s %12s %8s\n", "res", "bodies", "serial (ms)", "omp (ms)",
                "speedup");
    corpus::SynthConfig sc;
    sc.count = 1;
    sc.seed = 4;
    sc.min_len = 24;
    sc.max_len = 40;
    auto recs = corpus::synthesize(sc);
    auto scene = geom::build_scene(normalize(sequence_from_record(recs[0])));
    for (int res : {32, 64, 96}) {
        double ts = time_of([&] { geom::evaluate_grid(scene, res, false); }, 2);
        double tp = time_of([&] { geom::evaluate_grid(scene, res, true); }, 2);
        std::printf("%8d %8zu | %12.2f %12.2f %8.2f\n", res, scene.bodies().size(), ts * 1e3,
                    tp * 1e3, ts / tp);
    }
}

}  // namespace

int main() {
    int threads = configure_threads();
    std::printf("threads: %d\n\n", threads);
    bench_scan();
    bench_chamfer();
    bench_grid();
    return 0;
}
