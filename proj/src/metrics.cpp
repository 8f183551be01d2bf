#include "mcad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>

#include <json.hpp>

namespace mcad::metrics {

using geom::PointCloud;
using geom::Vec3;
using nlohmann::json;

double command_accuracy(const QuantizedSequence& gt, const QuantizedSequence& pred,
                        bool include_padding) {
    int n = kMaxSeqLen;
    if (!include_padding) n = std::max(gt.raw_length(), pred.raw_length());
    if (n == 0) return 1.0;
    int hits = 0;
    for (int t = 0; t < n; ++t)
        if (gt.command_ids[size_t(t)] == pred.command_ids[size_t(t)]) ++hits;
    return double(hits) / double(n);
}

std::optional<double> parameter_accuracy(const QuantizedSequence& gt,
                                         const QuantizedSequence& pred, int eta,
                                         bool include_padding) {
    int n = include_padding ? kMaxSeqLen : std::max(gt.raw_length(), pred.raw_length());
    int64_t total = 0, hits = 0;
    for (int t = 0; t < n; ++t) {
        if (gt.command_ids[size_t(t)] != pred.command_ids[size_t(t)]) continue;
        auto kind = CommandKind(gt.command_ids[size_t(t)]);
        for (int j = 0; j < kNumSlots; ++j) {
            if (!slot_used(kind, j)) continue;
            ++total;
            int a = gt.bin(t, j) == kUnusedBin ? -1 : gt.bin(t, j);
            int b = pred.bin(t, j) == kUnusedBin ? -1 : pred.bin(t, j);
            if (std::abs(a - b) < eta) ++hits;
        }
    }
    if (total == 0) return std::nullopt;
    return double(hits) / double(total);
}

// --- chamfer -------------------------------------------------------------------

namespace {

void check_nonempty(const PointCloud& p, const PointCloud& q) {
    if (p.pts.empty() || q.pts.empty()) throw UndefinedMetric("chamfer needs non-empty clouds");
}

inline double dist2(const Vec3& a, const Vec3& b) {
    double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return dx * dx + dy * dy + dz * dz;
}

// Shared final reduction so both implementations sum in the same order.
double chamfer_reduce(const std::vector<double>& min_pq, const std::vector<double>& min_qp) {
    double s1 = 0, s2 = 0;
    for (double v : min_pq) s1 += v;
    for (double v : min_qp) s2 += v;
    return s1 / double(min_pq.size()) + s2 / double(min_qp.size());
}

void nn_brute(const std::vector<Vec3>& from, const std::vector<Vec3>& to,
              std::vector<double>& out) {
    out.resize(from.size());
    for (size_t i = 0; i < from.size(); ++i) {
        double best = std::numeric_limits<double>::max();
        for (const Vec3& q : to) best = std::min(best, dist2(from[i], q));
        out[i] = best;
    }
}

/// Uniform-grid bucket index over `pts` answering exact nearest-neighbor
/// squared distances via expanding Chebyshev rings.
class BucketGrid {
public:
    explicit BucketGrid(const std::vector<Vec3>& pts) : pts_(pts) {
        lo_ = hi_ = pts[0];
        for (const Vec3& p : pts) {
            lo_.x = std::min(lo_.x, p.x); hi_.x = std::max(hi_.x, p.x);
            lo_.y = std::min(lo_.y, p.y); hi_.y = std::max(hi_.y, p.y);
            lo_.z = std::min(lo_.z, p.z); hi_.z = std::max(hi_.z, p.z);
        }
        double ext = std::max({hi_.x - lo_.x, hi_.y - lo_.y, hi_.z - lo_.z});
        if (ext <= 0) {
            degenerate_ = true;
            return;
        }
        int target = std::max(1, int(std::cbrt(double(pts.size()) / 2.0)));
        res_ = std::clamp(target, 1, 64);
        cell_ = ext / res_ * (1.0 + 1e-12);
        nx_ = int((hi_.x - lo_.x) / cell_) + 1;
        ny_ = int((hi_.y - lo_.y) / cell_) + 1;
        nz_ = int((hi_.z - lo_.z) / cell_) + 1;
        buckets_.resize(size_t(nx_) * ny_ * nz_);
        for (size_t i = 0; i < pts.size(); ++i) buckets_[index_of(pts[i])].push_back(int(i));
    }

    double min_dist2(const Vec3& q) const {
        if (degenerate_) {
            double best = std::numeric_limits<double>::max();
            for (const Vec3& p : pts_) best = std::min(best, dist2(q, p));
            return best;
        }
        int ci = cell_coord(q.x - lo_.x, nx_);
        int cj = cell_coord(q.y - lo_.y, ny_);
        int ck = cell_coord(q.z - lo_.z, nz_);
        double best = std::numeric_limits<double>::max();
        int max_ring = std::max({nx_, ny_, nz_});
        for (int r = 0; r <= max_ring; ++r) {
            // Points in ring r are at least (r-1)*cell away; once the best
            // found beats that bound the search is complete and exact.
            if (best < std::numeric_limits<double>::max() && r >= 2) {
                double lb = (double(r) - 1.0) * cell_;
                if (lb * lb > best) break;
            }
            for (int dk = -r; dk <= r; ++dk)
                for (int dj = -r; dj <= r; ++dj)
                    for (int di = -r; di <= r; ++di) {
                        if (std::max({std::abs(di), std::abs(dj), std::abs(dk)}) != r) continue;
                        int i = ci + di, j = cj + dj, k = ck + dk;
                        if (i < 0 || j < 0 || k < 0 || i >= nx_ || j >= ny_ || k >= nz_) continue;
                        for (int idx : buckets_[(size_t(k) * ny_ + j) * nx_ + i])
                            best = std::min(best, dist2(q, pts_[size_t(idx)]));
                    }
        }
        return best;
    }

private:
    size_t index_of(const Vec3& p) const {
        int i = cell_coord(p.x - lo_.x, nx_);
        int j = cell_coord(p.y - lo_.y, ny_);
        int k = cell_coord(p.z - lo_.z, nz_);
        return (size_t(k) * ny_ + j) * nx_ + i;
    }
    int cell_coord(double d, int n) const {
        int c = int(d / cell_);
        return std::clamp(c, 0, n - 1);
    }

    const std::vector<Vec3>& pts_;
    Vec3 lo_, hi_;
    double cell_ = 0;
    int res_ = 1, nx_ = 1, ny_ = 1, nz_ = 1;
    bool degenerate_ = false;
    std::vector<std::vector<int>> buckets_;
};

void nn_bucket(const std::vector<Vec3>& from, const BucketGrid& grid, std::vector<double>& out) {
    out.resize(from.size());
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < from.size(); ++i) out[i] = grid.min_dist2(from[i]);
}

}  // namespace

double chamfer_brute(const PointCloud& p, const PointCloud& q) {
    check_nonempty(p, q);
    std::vector<double> a, b;
    nn_brute(p.pts, q.pts, a);
    nn_brute(q.pts, p.pts, b);
    return chamfer_reduce(a, b);
}

double chamfer(const PointCloud& p, const PointCloud& q) {
    check_nonempty(p, q);
    BucketGrid gq(q.pts), gp(p.pts);
    std::vector<double> a, b;
    nn_bucket(p.pts, gq, a);
    nn_bucket(q.pts, gp, b);
    return chamfer_reduce(a, b);
}

GenerationMetrics generation_metrics(const std::vector<PointCloud>& gen,
                                     const std::vector<PointCloud>& ref) {
    GenerationMetrics m;
    if (gen.empty() || ref.empty()) throw UndefinedMetric("generation metrics need both sets");

    // Chamfer matrix gen x ref.
    std::vector<double> cd(gen.size() * ref.size());
#pragma omp parallel for schedule(dynamic)
    for (size_t i = 0; i < gen.size(); ++i)
        for (size_t j = 0; j < ref.size(); ++j)
            cd[i * ref.size() + j] = chamfer(gen[i], ref[j]);

    std::vector<bool> covered(ref.size(), false);
    for (size_t i = 0; i < gen.size(); ++i) {
        size_t best = 0;
        for (size_t j = 1; j < ref.size(); ++j)
            if (cd[i * ref.size() + j] < cd[i * ref.size() + best]) best = j;
        covered[best] = true;
    }
    int cov_count = 0;
    for (bool c : covered) cov_count += c ? 1 : 0;
    m.cov = double(cov_count) / double(ref.size());

    double mmd = 0;
    for (size_t j = 0; j < ref.size(); ++j) {
        double best = std::numeric_limits<double>::max();
        for (size_t i = 0; i < gen.size(); ++i) best = std::min(best, cd[i * ref.size() + j]);
        mmd += best;
    }
    m.mmd = mmd / double(ref.size());
    m.jsd = occupancy_jsd(gen, ref);
    return m;
}

double occupancy_jsd(const std::vector<PointCloud>& a, const std::vector<PointCloud>& b,
                     int grid) {
    auto histogram = [&](const std::vector<PointCloud>& set) {
        std::vector<double> h(size_t(grid) * grid * grid, 0.0);
        double total = 0;
        for (const PointCloud& c : set)
            for (const Vec3& p : c.pts) {
                auto bin = [&](double v) {
                    int i = int((v + 1.0) / 2.0 * grid);
                    return std::clamp(i, 0, grid - 1);
                };
                h[(size_t(bin(p.z)) * grid + bin(p.y)) * grid + bin(p.x)] += 1.0;
                total += 1.0;
            }
        if (total > 0)
            for (double& v : h) v /= total;
        return h;
    };
    auto P = histogram(a), Q = histogram(b);
    double jsd = 0;
    for (size_t i = 0; i < P.size(); ++i) {
        double mid = (P[i] + Q[i]) / 2.0;
        if (P[i] > 0) jsd += 0.5 * P[i] * std::log(P[i] / mid);
        if (Q[i] > 0) jsd += 0.5 * Q[i] * std::log(Q[i] / mid);
    }
    return jsd;
}

std::pair<double, double> uniqueness_novelty(const std::vector<QuantizedSequence>& gen,
                                             const std::vector<QuantizedSequence>& train) {
    auto key = [](const QuantizedSequence& q) {
        std::string k;
        k.resize(sizeof(q.command_ids) + sizeof(q.param_bins));
        std::memcpy(k.data(), q.command_ids.data(), sizeof(q.command_ids));
        std::memcpy(k.data() + sizeof(q.command_ids), q.param_bins.data(), sizeof(q.param_bins));
        return k;
    };
    std::map<std::string, int> counts;
    for (const auto& q : gen) counts[key(q)]++;
    std::map<std::string, int> train_set;
    for (const auto& q : train) train_set[key(q)]++;

    if (gen.empty()) return {0.0, 0.0};
    int unique = 0, novel = 0;
    for (const auto& q : gen) {
        std::string k = key(q);
        if (counts[k] == 1) ++unique;
        if (!train_set.count(k)) ++novel;
    }
    return {double(unique) / double(gen.size()), double(novel) / double(gen.size())};
}

// --- report --------------------------------------------------------------------

const char* task_name(Task t) {
    switch (t) {
        case Task::Reconstruction: return "reconstruction";
        case Task::Completion: return "completion";
        case Task::Generation: return "generation";
    }
    return "?";
}

MetricReport run_report(Task task, const std::vector<SampleOutcome>& outcomes) {
    MetricReport r;
    r.task = task_name(task);
    r.count = int(outcomes.size());
    if (outcomes.empty()) return r;

    double ac_sum = 0;
    int ac_n = 0;
    double ap_sum = 0;
    int ap_n = 0;
    std::vector<double> cds;
    int invalid = 0, exported = 0;
    double al_sum = 0;
    int al_n = 0;
    int l60_total = 0, l60_valid = 0;

    for (const auto& o : outcomes) {
        if (o.has_gt) {
            ac_sum += command_accuracy(o.gt, o.pred);
            ++ac_n;
            if (auto ap = parameter_accuracy(o.gt, o.pred)) {
                ap_sum += *ap;
                ++ap_n;
            }
            if (o.gt_raw_length >= 60) {
                ++l60_total;
                if (o.valid) ++l60_valid;
            }
        }
        if (!o.valid) ++invalid;
        else {
            al_sum += o.pred_raw_length;
            ++al_n;
        }
        if (o.cd) cds.push_back(*o.cd);
        if (o.exported) ++exported;
    }

    if (ac_n > 0) r.a_c = ac_sum / ac_n;
    if (ap_n > 0) r.a_p = ap_sum / ap_n;
    r.ir = double(invalid) / double(outcomes.size());
    if (al_n > 0) r.al = al_sum / al_n;
    if (l60_total > 0) r.l60 = double(l60_valid) / double(l60_total);
    r.export_ratio = double(exported) / double(outcomes.size());
    if (!cds.empty()) {
        std::sort(cds.begin(), cds.end());
        size_t n = cds.size();
        r.mcd = n % 2 == 1 ? cds[n / 2] : (cds[n / 2 - 1] + cds[n / 2]) / 2.0;
    }
    return r;
}

namespace {
void put_opt(json& j, const char* name, const std::optional<double>& v) {
    if (v) j[name] = *v;
}
std::optional<double> get_opt(const json& j, const char* name) {
    if (j.contains(name)) return j[name].get<double>();
    return std::nullopt;
}
}  // namespace

std::string report_to_json(const MetricReport& r) {
    json j;
    j["task"] = r.task;
    j["count"] = r.count;
    j["ir"] = r.ir;
    j["export_ratio"] = r.export_ratio;
    put_opt(j, "a_c", r.a_c);
    put_opt(j, "a_p", r.a_p);
    put_opt(j, "mcd", r.mcd);
    put_opt(j, "al", r.al);
    put_opt(j, "l60", r.l60);
    put_opt(j, "cov", r.cov);
    put_opt(j, "mmd", r.mmd);
    put_opt(j, "jsd", r.jsd);
    put_opt(j, "unique", r.unique_frac);
    put_opt(j, "novel", r.novel_frac);
    // paper display conventions, applied at formatting time only
    json d;
    if (r.mcd) d["mcd_x1e3"] = *r.mcd * 1e3;
    if (r.mmd) d["mmd_x1e2"] = *r.mmd * 1e2;
    if (r.jsd) d["jsd_x1e2"] = *r.jsd * 1e2;
    if (r.unique_frac) d["unique_x1e2"] = *r.unique_frac * 1e2;
    if (r.novel_frac) d["novel_x1e2"] = *r.novel_frac * 1e2;
    j["display"] = d;
    return j.dump(2);
}

MetricReport report_from_json(const std::string& text) {
    json j = json::parse(text);
    MetricReport r;
    r.task = j.value("task", "");
    r.count = j.value("count", 0);
    r.ir = j.value("ir", 0.0);
    r.export_ratio = j.value("export_ratio", 0.0);
    r.a_c = get_opt(j, "a_c");
    r.a_p = get_opt(j, "a_p");
    r.mcd = get_opt(j, "mcd");
    r.al = get_opt(j, "al");
    r.l60 = get_opt(j, "l60");
    r.cov = get_opt(j, "cov");
    r.mmd = get_opt(j, "mmd");
    r.jsd = get_opt(j, "jsd");
    r.unique_frac = get_opt(j, "unique");
    r.novel_frac = get_opt(j, "novel");
    return r;
}

}  // namespace mcad::metrics
