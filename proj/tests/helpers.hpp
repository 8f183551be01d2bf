#pragma once

// Shared builders and random-program generators for the test suites.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "mcad/codec.hpp"
#include "mcad/rng.hpp"

namespace mcad::testing {

inline Command sol() { return Command(CommandKind::SOL); }

inline Command line(double x, double y) {
    Command c(CommandKind::Line);
    c.slots[slot::X] = x;
    c.slots[slot::Y] = y;
    return c;
}

inline Command arc(double x, double y, double alpha, int ccw) {
    Command c(CommandKind::Arc);
    c.slots[slot::X] = x;
    c.slots[slot::Y] = y;
    c.slots[slot::Alpha] = enc::alpha_to_slot(alpha);
    c.slots[slot::Flag] = ccw;
    return c;
}

inline Command circle(double x, double y, double r) {
    Command c(CommandKind::Circle);
    c.slots[slot::X] = x;
    c.slots[slot::Y] = y;
    c.slots[slot::Radius] = r;
    return c;
}

struct ExtrudeSpec {
    double theta = 0, phi = 0, gamma = std::numbers::pi / 2;  // identity-ish frame
    double px = 0, py = 0, pz = 0;
    double s = 1.0;
    double e1 = 1.0, e2 = 0.0;
    int b = 0;  // new
    int u = 0;  // one-sided
};

inline Command extrude(const ExtrudeSpec& e) {
    Command c(CommandKind::Extrude);
    c.slots[slot::Theta] = enc::theta_to_slot(e.theta);
    c.slots[slot::Phi] = enc::phi_to_slot(e.phi);
    c.slots[slot::Gamma] = enc::phi_to_slot(e.gamma);
    c.slots[slot::PX] = enc::origin_to_slot(e.px);
    c.slots[slot::PY] = enc::origin_to_slot(e.py);
    c.slots[slot::PZ] = enc::origin_to_slot(e.pz);
    c.slots[slot::Scale] = enc::scale_to_slot(e.s);
    c.slots[slot::E1] = enc::extent_to_slot(e.e1);
    c.slots[slot::E2] = enc::extent_to_slot(e.e2);
    c.slots[slot::Bool] = e.b;
    c.slots[slot::Extent] = e.u;
    return c;
}

inline CadSequence make_sequence(const std::vector<Command>& cmds) {
    CadSequence seq;
    seq.raw_length = int(cmds.size());
    for (size_t t = 0; t < cmds.size(); ++t) seq.commands[t] = cmds[t];
    return seq;
}

/// Axis-aligned rectangular-profile extrusion unit; the loop starts at the
/// sketch origin so the body spans [px, px+s*w] x [py, py+s*h] x [pz, pz+e1].
inline std::vector<Command> rect_unit(double w, double h, ExtrudeSpec e) {
    return {sol(), line(w, 0), line(w, h), line(0, h), line(0, 0), extrude(e)};
}

inline std::vector<Command> circle_unit(double cx, double cy, double r, ExtrudeSpec e) {
    return {sol(), circle(cx, cy, r), extrude(e)};
}

/// Grammar-valid random sequence of exactly `target` commands with all
/// continuous slots in [-1,1]. Geometry validity is not guaranteed.
inline CadSequence random_valid_sequence(Rng& rng, int min_len, int max_len) {
    int target = min_len + rng.uniform_int(max_len - min_len + 1);
    std::vector<Command> cmds;

    auto random_curve = [&](bool allow_circle) -> Command {
        int pick = rng.uniform_int(allow_circle ? 3 : 2);
        double x = rng.uniform(-1, 1), y = rng.uniform(-1, 1);
        if (pick == 0) return line(x, y);
        if (pick == 1) return arc(x, y, rng.uniform(0.2, 1.8) * std::numbers::pi, rng.uniform_int(2));
        return circle(x * 0.5, y * 0.5, rng.uniform(0.05, 0.5));
    };

    while (int(cmds.size()) < target) {
        int remaining = target - int(cmds.size());
        if (remaining < 3) break;  // cannot happen with the budget below
        int unit_len = 3 + rng.uniform_int(std::min(remaining - 3 >= 3 ? remaining - 3 : 0, 17) + 1);
        if (remaining - unit_len < 3 && remaining - unit_len != 0) unit_len = remaining;
        // unit = loops + extrude
        int budget = unit_len - 1;
        while (budget > 0) {
            int loop_len;
            if (budget == 2 || (budget >= 2 && rng.bernoulli(0.4))) loop_len = 2;
            else loop_len = std::min(budget, 2 + 1 + rng.uniform_int(6));
            if (budget - loop_len == 1) loop_len = budget;  // avoid stranding 1 command
            if (loop_len == 2 && rng.bernoulli(0.5)) {
                cmds.push_back(sol());
                cmds.push_back(random_curve(true));
            } else {
                cmds.push_back(sol());
                for (int i = 1; i < loop_len; ++i) cmds.push_back(random_curve(false));
            }
            budget -= loop_len;
        }
        ExtrudeSpec e;
        e.theta = rng.uniform(0, std::numbers::pi);
        e.phi = rng.uniform(-std::numbers::pi, std::numbers::pi);
        e.gamma = rng.uniform(-std::numbers::pi, std::numbers::pi);
        e.px = rng.uniform(-2, 2);
        e.py = rng.uniform(-2, 2);
        e.pz = rng.uniform(-2, 2);
        e.s = rng.uniform(0.05, 3.9);
        e.e1 = rng.uniform(-3.9, 3.9);
        e.e2 = rng.uniform(-3.9, 3.9);
        e.b = cmds.size() <= size_t(unit_len) ? 0 : rng.uniform_int(4);
        e.u = rng.uniform_int(3);
        cmds.push_back(extrude(e));
    }
    return make_sequence(cmds);
}

/// Mutates a valid kind string into one that violates the grammar.
inline std::vector<CommandKind> corrupt_kinds(Rng& rng, const CadSequence& seq) {
    std::vector<CommandKind> kinds;
    for (int t = 0; t < seq.raw_length; ++t) kinds.push_back(seq.at(t).kind);
    switch (rng.uniform_int(5)) {
        case 0: kinds[0] = CommandKind::Extrude; break;              // before any SOL
        case 1: kinds.back() = CommandKind::Line; break;             // no final extrude
        case 2: kinds.insert(kinds.begin() + 1, CommandKind::SOL);   // SOL then SOL
                kinds[2] = CommandKind::SOL; break;
        case 3: kinds.push_back(CommandKind::SOL); break;            // trailing open loop
        default: kinds[size_t(rng.uniform_int(int(kinds.size())))] = CommandKind::EOS; break;
    }
    return kinds;
}

}  // namespace mcad::testing
