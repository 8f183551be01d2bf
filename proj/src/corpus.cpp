#include "mcad/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <json.hpp>

#include "mcad/geometry.hpp"
#include "mcad/rng.hpp"

namespace mcad::corpus {

using nlohmann::json;

std::string length_bucket(int raw_length) {
    if (raw_length <= 10) return "1-10";
    if (raw_length <= 25) return "11-25";
    if (raw_length <= 40) return "26-40";
    if (raw_length <= 60) return "41-60";
    return "60-128";
}

FilterResult filter_corpus(const std::vector<std::string>& lines, int min_len, int max_len) {
    FilterResult out;
    for (const std::string& line : lines) {
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        ++out.stats.seen;
        try {
            CadSequence seq = sequence_from_record(line);
            if (seq.raw_length < min_len) {
                out.stats.rejected["too_short"]++;
                continue;
            }
            if (seq.raw_length > max_len) {
                out.stats.rejected["too_long"]++;
                continue;
            }
            out.records.push_back(line);
            out.stats.kept++;
            out.stats.length_buckets[length_bucket(seq.raw_length)]++;
        } catch (const MalformedRecord& e) {
            if (std::string(e.what()).find("unsupported command kind") != std::string::npos)
                out.stats.rejected["unsupported_command"]++;
            else
                out.stats.rejected["malformed"]++;
        } catch (const GrammarError& e) {
            if (std::string(e.what()).find("exceeds N=128") != std::string::npos)
                out.stats.rejected["too_long"]++;
            else
                out.stats.rejected["invalid_grammar"]++;
        }
    }
    return out;
}

std::string stats_to_json(const FilterStats& s) {
    json j;
    j["seen"] = s.seen;
    j["kept"] = s.kept;
    j["rejected"] = s.rejected;
    j["length_buckets"] = s.length_buckets;
    return j.dump(2);
}

SplitResult split(int n, double f_train, double f_val, uint64_t seed) {
    if (n < 10) throw TooFewRecords(size_t(n));
    Rng rng(seed);
    auto perm = rng.permutation(n);
    int n_train = int(std::floor(f_train * n));
    int n_val = int(std::floor(f_val * n));
    SplitResult r;
    r.train.assign(perm.begin(), perm.begin() + n_train);
    r.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
    r.test.assign(perm.begin() + n_train + n_val, perm.end());
    return r;
}

// --- synthesis -----------------------------------------------------------------

namespace {

constexpr double kPi = std::numbers::pi;

struct Unit {
    std::vector<Command> cmds;
};

Command make_line(double x, double y) {
    Command c(CommandKind::Line);
    c.slots[slot::X] = x;
    c.slots[slot::Y] = y;
    return c;
}

Command make_arc(double x, double y, double alpha, int ccw) {
    Command c(CommandKind::Arc);
    c.slots[slot::X] = x;
    c.slots[slot::Y] = y;
    c.slots[slot::Alpha] = enc::alpha_to_slot(alpha);
    c.slots[slot::Flag] = ccw;
    return c;
}

Command make_circle(double x, double y, double r) {
    Command c(CommandKind::Circle);
    c.slots[slot::X] = x;
    c.slots[slot::Y] = y;
    c.slots[slot::Radius] = r;
    return c;
}

/// Splits `total` into `parts` pieces, each >= lo, uniformly-ish.
std::vector<int> partition(Rng& rng, int total, int parts, int lo) {
    std::vector<int> sizes(size_t(parts), lo);
    int extra = total - lo * parts;
    for (int e = 0; e < extra; ++e) sizes[size_t(rng.uniform_int(parts))]++;
    return sizes;
}

/// Loop of `size` commands (SOL + size-1 curves) closing at the origin.
std::vector<Command> outer_loop(Rng& rng, int size) {
    std::vector<Command> cmds;
    cmds.emplace_back(CommandKind::SOL);
    if (size == 2) {
        double r = rng.uniform(0.3, 0.75);
        cmds.push_back(make_circle(rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15), r));
        return cmds;
    }
    int m = size - 1;  // segments
    if (m == 4 && rng.bernoulli(0.5)) {
        double w = rng.uniform(0.4, 1.0), h = rng.uniform(0.4, 1.0);
        cmds.push_back(make_line(w, 0));
        cmds.push_back(make_line(w, h));
        cmds.push_back(make_line(0, h));
        cmds.push_back(make_line(0, 0));
        return cmds;
    }
    // Convex polygon inscribed in a circle through the origin.
    double radius = rng.uniform(0.3, 0.55);
    double dir = rng.uniform(-kPi, kPi);
    double cx = radius * std::cos(dir), cy = radius * std::sin(dir);
    double theta0 = std::atan2(-cy, -cx);
    bool ccw_poly = rng.bernoulli(0.5);
    for (int i = 1; i <= m; ++i) {
        double a = theta0 + (ccw_poly ? 1.0 : -1.0) * 2.0 * kPi * double(i % m) / double(m);
        double vx = i == m ? 0.0 : cx + radius * std::cos(a);
        double vy = i == m ? 0.0 : cy + radius * std::sin(a);
        bool force_arc = (m == 2 && i == m);  // two straight segments enclose nothing
        if (force_arc || rng.bernoulli(0.3))
            cmds.push_back(make_arc(vx, vy, rng.uniform(0.3, 0.8) * kPi, ccw_poly ? 1 : 0));
        else
            cmds.push_back(make_line(vx, vy));
    }
    return cmds;
}

struct FramePick {
    double theta, phi, gamma;
};

FramePick pick_frame(Rng& rng) {
    if (rng.bernoulli(0.6)) {
        static const FramePick canon[] = {
            {0, 0, kPi / 2}, {kPi, 0, kPi / 2}, {kPi / 2, 0, 0}, {kPi / 2, kPi / 2, 0},
            {kPi / 2, -kPi / 2, 0}, {kPi / 2, kPi, 0},
        };
        return canon[rng.uniform_int(6)];
    }
    return {rng.uniform(0.05, kPi - 0.05), rng.uniform(-kPi, kPi), rng.uniform(-kPi, kPi)};
}

CadSequence attempt_program(Rng& rng, const std::vector<std::vector<int>>& loop_plan,
                            double p_cut, double p_intersect) {
    std::vector<Command> cmds;
    geom::Vec3 anchor{0, 0, 0};
    for (size_t ui = 0; ui < loop_plan.size(); ++ui) {
        for (size_t li = 0; li < loop_plan[ui].size(); ++li) {
            int lsize = loop_plan[ui][li];
            if (li == 0) {
                auto loop = outer_loop(rng, lsize);
                cmds.insert(cmds.end(), loop.begin(), loop.end());
            } else {
                // interior circles as holes (even-odd fill)
                cmds.emplace_back(CommandKind::SOL);
                cmds.push_back(make_circle(rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25),
                                           rng.uniform(0.08, 0.22)));
            }
        }
        FramePick f = pick_frame(rng);
        Command e(CommandKind::Extrude);
        e.slots[slot::Theta] = enc::theta_to_slot(f.theta);
        e.slots[slot::Phi] = enc::phi_to_slot(f.phi);
        e.slots[slot::Gamma] = enc::phi_to_slot(f.gamma);
        geom::Vec3 p;
        if (ui == 0) {
            p = {rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)};
            anchor = p;
        } else {
            p = {anchor.x + rng.uniform(-0.45, 0.45), anchor.y + rng.uniform(-0.45, 0.45),
                 anchor.z + rng.uniform(-0.45, 0.45)};
        }
        e.slots[slot::PX] = enc::origin_to_slot(p.x);
        e.slots[slot::PY] = enc::origin_to_slot(p.y);
        e.slots[slot::PZ] = enc::origin_to_slot(p.z);
        e.slots[slot::Scale] = enc::scale_to_slot(rng.uniform(0.3, 1.1));
        int u = rng.weighted({0.6, 0.2, 0.2});
        e.slots[slot::Extent] = u;
        e.slots[slot::E1] = enc::extent_to_slot(rng.uniform(0.2, 1.2));
        e.slots[slot::E2] = enc::extent_to_slot(u == 2 ? rng.uniform(0.1, 0.8) : 0.0);
        int b = 0;
        if (ui > 0) {
            double r = rng.uniform();
            if (r < p_cut) b = 2;
            else if (r < p_cut + p_intersect) b = 3;
            else if (r < p_cut + p_intersect + 0.1) b = 0;  // occasional disjoint solid
            else b = 1;
        }
        e.slots[slot::Bool] = b;
        cmds.push_back(e);
    }
    CadSequence seq;
    seq.raw_length = int(cmds.size());
    for (size_t t = 0; t < cmds.size(); ++t) seq.commands[t] = cmds[t];
    return seq;
}

bool grid_has_material(const geom::SolidScene& scene, int res) {
    auto grid = geom::evaluate_grid(scene, res);
    bool first = grid.values[0] < 0;
    for (double v : grid.values)
        if ((v < 0) != first) return true;
    return false;
}

}  // namespace

std::vector<std::string> synthesize(const SynthConfig& cfg) {
    if (cfg.min_len < 3 || cfg.max_len > kMaxSeqLen || cfg.min_len > cfg.max_len)
        throw ConfigError("synthesize: length range must sit inside [3,128]");

    std::vector<std::string> records(size_t(cfg.count));
    std::vector<std::string> failures(size_t(cfg.count));

#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < cfg.count; ++i) {
        Rng rng(cfg.seed ^ (0x9E3779B97F4A7C15ull * uint64_t(i + 1)));

        // Target length: Table-1 bucket mix intersected with [min,max].
        int target;
        if (cfg.paper_length_distribution) {
            struct Bucket {
                int lo, hi;
                double w;
            };
            const Bucket buckets[] = {
                {11, 25, 41.25}, {26, 40, 26.60}, {41, 60, 16.13}, {61, 128, 16.02}};
            std::vector<double> w;
            for (const auto& b : buckets) {
                int lo = std::max(b.lo, cfg.min_len), hi = std::min(b.hi, cfg.max_len);
                w.push_back(lo <= hi ? b.w : 0.0);
            }
            double total = w[0] + w[1] + w[2] + w[3];
            if (total <= 0) {
                target = cfg.min_len + rng.uniform_int(cfg.max_len - cfg.min_len + 1);
            } else {
                const auto& b = buckets[rng.weighted(w)];
                int lo = std::max(b.lo, cfg.min_len), hi = std::min(b.hi, cfg.max_len);
                target = lo + rng.uniform_int(hi - lo + 1);
            }
        } else {
            target = cfg.min_len + rng.uniform_int(cfg.max_len - cfg.min_len + 1);
        }

        std::string id = "synth-" + std::to_string(100000 + i).substr(1);
        bool done = false;
        for (int attempt = 0; attempt < cfg.max_attempts && !done; ++attempt) {
            // Plan: units x loops with exact total length.
            int max_units = std::min(6, target / 3);
            int units = 1 + rng.uniform_int(max_units);
            auto unit_sizes = partition(rng, target, units, 3);
            std::vector<std::vector<int>> loop_plan;
            for (int us : unit_sizes) {
                int budget = us - 1;  // minus extrude
                int max_loops = std::min(3, budget / 2);
                int loops = 1 + rng.uniform_int(max_loops);
                // holes are circles (size 2); the outer loop absorbs the rest
                int outer = budget - 2 * (loops - 1);
                std::vector<int> plan{outer};
                for (int h = 1; h < loops; ++h) plan.push_back(2);
                loop_plan.push_back(plan);
            }

            try {
                CadSequence seq = attempt_program(rng, loop_plan, cfg.p_cut, cfg.p_intersect);
                if (seq.raw_length != target) continue;
                std::string rec = sequence_to_record(seq, id);
                // Full downstream verification on the serialized form.
                CadSequence parsed = sequence_from_record(rec);
                CadSequence norm = normalize(parsed);
                quantize(norm);
                geom::SolidScene scene = geom::build_scene(norm);
                if (!grid_has_material(scene, 16)) continue;
                records[size_t(i)] = rec;
                done = true;
            } catch (const Error& e) {
                failures[size_t(i)] = e.what();
            }
        }
        if (!done) records[size_t(i)].clear();
    }

    for (int i = 0; i < cfg.count; ++i)
        if (records[size_t(i)].empty())
            throw GenerationBudgetExceeded("record " + std::to_string(i) + " after " +
                                           std::to_string(cfg.max_attempts) +
                                           " attempts; last error: " + failures[size_t(i)]);
    return records;
}

}  // namespace mcad::corpus
