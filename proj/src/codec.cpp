#include "mcad/codec.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "mcad/geometry.hpp"
#include "mcad/rng.hpp"

namespace mcad {

using nlohmann::json;

const char* command_name(CommandKind k) {
    switch (k) {
        case CommandKind::SOL: return "SOL";
        case CommandKind::Line: return "Line";
        case CommandKind::Arc: return "Arc";
        case CommandKind::Circle: return "Circle";
        case CommandKind::Extrude: return "Extrude";
        case CommandKind::EOS: return "EOS";
    }
    return "?";
}

std::optional<CommandKind> command_from_name(const std::string& name) {
    for (int i = 0; i < kCommandKinds; ++i) {
        auto k = CommandKind(i);
        if (name == command_name(k)) return k;
    }
    return std::nullopt;
}

// --- grammar ----------------------------------------------------------------

std::optional<GrammarIssue> check_grammar(std::span<const CommandKind> kinds) {
    enum class St { ExpectSol, LoopStart, AfterCircle, Polyline, AfterExtrude };
    if (kinds.empty()) return GrammarIssue{0, "empty sequence"};
    St st = St::ExpectSol;
    for (int t = 0; t < int(kinds.size()); ++t) {
        CommandKind k = kinds[size_t(t)];
        if (k == CommandKind::EOS) return GrammarIssue{t, "EOS inside sequence"};
        switch (st) {
            case St::ExpectSol:
                if (k != CommandKind::SOL)
                    return GrammarIssue{t, std::string(command_name(k)) + " before any SOL"};
                st = St::LoopStart;
                break;
            case St::LoopStart:
                if (k == CommandKind::Circle) st = St::AfterCircle;
                else if (k == CommandKind::Line || k == CommandKind::Arc) st = St::Polyline;
                else return GrammarIssue{t, std::string(command_name(k)) + " directly after SOL"};
                break;
            case St::AfterCircle:
                if (k == CommandKind::SOL) st = St::LoopStart;
                else if (k == CommandKind::Extrude) st = St::AfterExtrude;
                else return GrammarIssue{t, "circle loop holds exactly one Circle"};
                break;
            case St::Polyline:
                if (k == CommandKind::Line || k == CommandKind::Arc) break;
                if (k == CommandKind::SOL) st = St::LoopStart;
                else if (k == CommandKind::Extrude) st = St::AfterExtrude;
                else return GrammarIssue{t, "Circle inside a line/arc loop"};
                break;
            case St::AfterExtrude:
                if (k == CommandKind::SOL) st = St::LoopStart;
                else return GrammarIssue{t, std::string(command_name(k)) + " directly after Extrude"};
                break;
        }
    }
    if (st != St::AfterExtrude)
        return GrammarIssue{int(kinds.size()) - 1, "sequence does not end with Extrude"};
    return std::nullopt;
}

void validate(const CadSequence& seq) {
    std::vector<CommandKind> kinds;
    kinds.reserve(size_t(seq.raw_length));
    for (int t = 0; t < seq.raw_length; ++t) {
        if (seq.at(t).kind == CommandKind::EOS)
            throw GrammarError("EOS before raw_length", t);
        kinds.push_back(seq.at(t).kind);
    }
    for (int t = seq.raw_length; t < kMaxSeqLen; ++t)
        if (seq.at(t).kind != CommandKind::EOS)
            throw GrammarError("non-EOS padding", t);
    if (auto issue = check_grammar(kinds))
        throw GrammarError(issue->message, issue->position);
}

// --- record parsing ---------------------------------------------------------

namespace {

struct SlotSpec {
    const char* name;
    int index;
};

std::span<const SlotSpec> kind_slots(CommandKind k) {
    static const SlotSpec line[] = {{"x", slot::X}, {"y", slot::Y}};
    static const SlotSpec arc[] = {{"x", slot::X}, {"y", slot::Y}, {"alpha", slot::Alpha}, {"f", slot::Flag}};
    static const SlotSpec circle[] = {{"x", slot::X}, {"y", slot::Y}, {"r", slot::Radius}};
    static const SlotSpec extrude[] = {
        {"theta", slot::Theta}, {"phi", slot::Phi}, {"gamma", slot::Gamma},
        {"px", slot::PX}, {"py", slot::PY}, {"pz", slot::PZ},
        {"s", slot::Scale}, {"e1", slot::E1}, {"e2", slot::E2},
        {"b", slot::Bool}, {"u", slot::Extent}};
    switch (k) {
        case CommandKind::Line: return line;
        case CommandKind::Arc: return arc;
        case CommandKind::Circle: return circle;
        case CommandKind::Extrude: return extrude;
        default: return {};
    }
}

// Geometric value -> slot encoding (identity for sketch coordinates).
double encode_slot(int index, double v) {
    switch (index) {
        case slot::Alpha: return enc::alpha_to_slot(v);
        case slot::Theta: return enc::theta_to_slot(v);
        case slot::Phi:
        case slot::Gamma: return enc::phi_to_slot(v);
        case slot::PX:
        case slot::PY:
        case slot::PZ: return enc::origin_to_slot(v);
        case slot::Scale: return enc::scale_to_slot(v);
        case slot::E1:
        case slot::E2: return enc::extent_to_slot(v);
        default: return v;
    }
}

double decode_slot(int index, double s) {
    switch (index) {
        case slot::Alpha: return enc::slot_to_alpha(s);
        case slot::Theta: return enc::slot_to_theta(s);
        case slot::Phi:
        case slot::Gamma: return enc::slot_to_phi(s);
        case slot::PX:
        case slot::PY:
        case slot::PZ: return enc::slot_to_origin(s);
        case slot::Scale: return enc::slot_to_scale(s);
        case slot::E1:
        case slot::E2: return enc::slot_to_extent(s);
        default: return s;
    }
}

void check_range(int pos, const char* name, double v, double lo, double hi) {
    if (!std::isfinite(v) || v < lo || v > hi)
        throw MalformedRecord(std::string("parameter '") + name + "' out of range at command " +
                                  std::to_string(pos),
                              pos);
}

void check_enum(int pos, const char* name, double v, int count) {
    if (!std::isfinite(v) || v != std::floor(v) || v < 0 || v >= count)
        throw MalformedRecord(std::string("parameter '") + name + "' not a valid code at command " +
                                  std::to_string(pos),
                              pos);
}

constexpr double kPi = std::numbers::pi;

}  // namespace

CadSequence sequence_from_record(const std::string& json_text) {
    json rec = json::parse(json_text, nullptr, false);
    if (rec.is_discarded()) throw MalformedRecord("invalid JSON");
    if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string())
        throw MalformedRecord("missing string field 'id'");
    if (!rec.contains("commands") || !rec["commands"].is_array())
        throw MalformedRecord("missing array field 'commands'");

    const auto& cmds = rec["commands"];
    if (int(cmds.size()) > kMaxSeqLen)
        throw GrammarError("exceeds N=128", kMaxSeqLen);

    CadSequence seq;
    seq.raw_length = int(cmds.size());
    std::vector<CommandKind> kinds;
    kinds.reserve(cmds.size());

    for (int t = 0; t < int(cmds.size()); ++t) {
        const auto& c = cmds[size_t(t)];
        if (!c.is_object() || !c.contains("kind") || !c["kind"].is_string())
            throw MalformedRecord("command missing 'kind'", t);
        auto kind = command_from_name(c["kind"].get<std::string>());
        if (!kind || *kind == CommandKind::EOS)
            throw MalformedRecord("unsupported command kind '" + c["kind"].get<std::string>() + "'", t);

        Command cmd(*kind);
        auto specs = kind_slots(*kind);
        json params = c.value("params", json::object());
        if (!params.is_object()) throw MalformedRecord("'params' must be an object", t);
        if (params.size() != specs.size())
            throw MalformedRecord("wrong parameter count for " +
                                      std::string(command_name(*kind)),
                                  t);
        for (const auto& s : specs) {
            if (!params.contains(s.name) || !params[s.name].is_number())
                throw MalformedRecord(std::string("missing numeric parameter '") + s.name + "'", t);
            double v = params[s.name].get<double>();
            switch (s.index) {
                case slot::Alpha: check_range(t, s.name, v, 1e-9, 2 * kPi); break;
                case slot::Theta: check_range(t, s.name, v, 0, kPi); break;
                case slot::Phi:
                case slot::Gamma: check_range(t, s.name, v, -kPi, kPi); break;
                case slot::Flag: check_enum(t, s.name, v, 2); break;
                case slot::Bool: check_enum(t, s.name, v, 4); break;
                case slot::Extent: check_enum(t, s.name, v, 3); break;
                case slot::Scale: check_range(t, s.name, v, 1e-12, 1e9); break;
                case slot::Radius: check_range(t, s.name, v, 1e-12, 1e9); break;
                default:
                    if (!std::isfinite(v))
                        throw MalformedRecord(std::string("non-finite parameter '") + s.name + "'", t);
            }
            cmd.slots[size_t(s.index)] = slot_discrete(s.index) ? v : encode_slot(s.index, v);
        }
        seq.at(t) = cmd;
        kinds.push_back(*kind);
    }

    if (auto issue = check_grammar(kinds))
        throw GrammarError(issue->message, issue->position);
    return seq;
}

std::string sequence_to_record(const CadSequence& seq, const std::string& id) {
    json cmds = json::array();
    for (int t = 0; t < seq.raw_length; ++t) {
        const Command& c = seq.at(t);
        json params = json::object();
        for (const auto& s : kind_slots(c.kind)) {
            double v = c.slots[size_t(s.index)];
            params[s.name] = slot_discrete(s.index) ? v : decode_slot(s.index, v);
        }
        cmds.push_back(json{{"kind", command_name(c.kind)}, {"params", params}});
    }
    json rec{{"id", id}, {"commands", cmds}};
    return rec.dump();
}

// --- normalization ----------------------------------------------------------

namespace {

// Largest |coordinate| reached by a sketch's tessellated loops.
double sketch_coord_extent(const CadSequence& seq, int begin, int end) {
    double m = 0;
    geom::Vec2 cur{0, 0};
    for (int t = begin; t < end; ++t) {
        const Command& c = seq.at(t);
        switch (c.kind) {
            case CommandKind::SOL:
                cur = {0, 0};
                break;
            case CommandKind::Line:
                cur = {c.slots[slot::X], c.slots[slot::Y]};
                m = std::max({m, std::abs(cur.x), std::abs(cur.y)});
                break;
            case CommandKind::Arc: {
                geom::Vec2 to{c.slots[slot::X], c.slots[slot::Y]};
                auto pts = geom::tessellate_arc(cur, to, enc::slot_to_alpha(c.slots[slot::Alpha]),
                                                c.slots[slot::Flag] > 0.5);
                for (auto p : pts) m = std::max({m, std::abs(p.x), std::abs(p.y)});
                cur = to;
                break;
            }
            case CommandKind::Circle: {
                double r = c.slots[slot::Radius];
                m = std::max({m, std::abs(c.slots[slot::X]) + r, std::abs(c.slots[slot::Y]) + r});
                break;
            }
            default:
                break;
        }
    }
    return m;
}

}  // namespace

bool is_normalized(const CadSequence& seq) {
    for (int t = 0; t < seq.raw_length; ++t) {
        const Command& c = seq.at(t);
        for (int j = 0; j < kNumSlots; ++j)
            if (slot_used(c.kind, j) && !slot_discrete(j) && std::abs(c.slots[size_t(j)]) > 1.0 + 1e-6)
                return false;
    }
    return true;
}

CadSequence normalize(const CadSequence& seq) {
    if (seq.raw_length == 0) throw DegenerateModel("empty sequence");
    validate(seq);

    CadSequence out = seq;

    // Per-sketch canonicalization: shrink oversized sketch coordinates into
    // [-1,1], folding the factor into the profile scale s. In-range sketches
    // are left untouched so already-normalized models pass through unchanged.
    int unit_start = 0;
    for (int t = 0; t < out.raw_length; ++t) {
        if (out.at(t).kind != CommandKind::Extrude) continue;
        double kappa = sketch_coord_extent(out, unit_start, t);
        if (kappa > 1.0 + 1e-12) {
            for (int s = unit_start; s < t; ++s) {
                Command& c = out.at(s);
                if (c.kind == CommandKind::Line || c.kind == CommandKind::Arc ||
                    c.kind == CommandKind::Circle) {
                    c.slots[slot::X] /= kappa;
                    c.slots[slot::Y] /= kappa;
                }
                if (c.kind == CommandKind::Circle) c.slots[slot::Radius] /= kappa;
            }
            Command& e = out.at(t);
            e.slots[slot::Scale] =
                enc::scale_to_slot(enc::slot_to_scale(e.slots[slot::Scale]) * kappa);
        }
        unit_start = t + 1;
    }

    geom::SolidScene scene = geom::build_scene(out);
    const geom::Aabb& box = scene.bounds();
    double extent = box.max_extent();
    if (!(extent > 1e-12)) throw DegenerateModel("zero-extent bounding box");

    double lambda = 2.0 / extent;
    geom::Vec3 c = box.center();

    for (int t = 0; t < out.raw_length; ++t) {
        Command& cmd = out.at(t);
        if (cmd.kind != CommandKind::Extrude) continue;
        double px = enc::slot_to_origin(cmd.slots[slot::PX]);
        double py = enc::slot_to_origin(cmd.slots[slot::PY]);
        double pz = enc::slot_to_origin(cmd.slots[slot::PZ]);
        cmd.slots[slot::PX] = enc::origin_to_slot(lambda * (px - c.x));
        cmd.slots[slot::PY] = enc::origin_to_slot(lambda * (py - c.y));
        cmd.slots[slot::PZ] = enc::origin_to_slot(lambda * (pz - c.z));
        cmd.slots[slot::Scale] =
            enc::scale_to_slot(lambda * enc::slot_to_scale(cmd.slots[slot::Scale]));
        cmd.slots[slot::E1] = enc::extent_to_slot(lambda * enc::slot_to_extent(cmd.slots[slot::E1]));
        cmd.slots[slot::E2] = enc::extent_to_slot(lambda * enc::slot_to_extent(cmd.slots[slot::E2]));
    }
    return out;
}

// --- quantization -----------------------------------------------------------

QuantizedSequence quantize(const CadSequence& seq) {
    QuantizedSequence q;
    for (int t = 0; t < seq.raw_length; ++t) {
        const Command& c = seq.at(t);
        q.command_ids[size_t(t)] = uint8_t(c.kind);
        for (int j = 0; j < kNumSlots; ++j) {
            if (!slot_used(c.kind, j)) continue;  // stays kUnusedBin
            double v = c.slots[size_t(j)];
            if (slot_discrete(j)) {
                int code = int(std::lround(v));
                code = std::clamp(code, 0, slot_code_count(j) - 1);
                q.bin(t, j) = uint16_t(code);
            } else {
                if (std::abs(v) > 1.0 + 1e-6) throw NotNormalized(t, j, v);
                q.bin(t, j) = uint16_t(quantize_value(v));
            }
        }
    }
    return q;
}

CadSequence dequantize(const QuantizedSequence& q) {
    int raw = q.raw_length();
    std::vector<CommandKind> kinds;
    kinds.reserve(size_t(raw));
    for (int t = 0; t < raw; ++t) {
        uint8_t id = q.command_ids[size_t(t)];
        if (id >= kCommandKinds) throw GrammarError("command id out of range", t);
        kinds.push_back(CommandKind(id));
    }
    for (int t = raw; t < kMaxSeqLen; ++t)
        if (q.command_ids[size_t(t)] != uint8_t(CommandKind::EOS))
            throw GrammarError("non-EOS padding", t);
    if (auto issue = check_grammar(kinds))
        throw GrammarError(issue->message, issue->position);

    CadSequence seq;
    seq.raw_length = raw;
    for (int t = 0; t < raw; ++t) {
        Command c(kinds[size_t(t)]);
        for (int j = 0; j < kNumSlots; ++j) {
            if (!slot_used(c.kind, j)) continue;
            int b = q.bin(t, j);
            if (b >= kUnusedBin) continue;  // decodes to the sentinel -1
            if (slot_discrete(j))
                c.slots[size_t(j)] = double(std::min(b, slot_code_count(j) - 1));
            else
                c.slots[size_t(j)] = dequantize_bin(b);
        }
        seq.at(t) = c;
    }
    return seq;
}

QuantizedSequence mask_sequence(const QuantizedSequence& q, double ratio, uint64_t seed,
                                std::vector<int>* masked_positions) {
    ratio = std::clamp(ratio, 0.0, 1.0);
    QuantizedSequence out = q;
    int raw = q.raw_length();
    int k = int(std::floor(ratio * double(raw)));
    if (masked_positions) masked_positions->clear();
    if (k == 0) return out;

    Rng rng(seed);
    auto picks = rng.sample_without_replacement(raw, k);
    std::sort(picks.begin(), picks.end());
    for (int t : picks) {
        out.command_ids[size_t(t)] = 0;
        for (int j = 0; j < kNumSlots; ++j) out.bin(t, j) = 0;
    }
    if (masked_positions) *masked_positions = picks;
    return out;
}

QuantizedSequence canonicalize_prediction(std::span<const int> command_ids,
                                          std::span<const int> param_bins) {
    if (int(command_ids.size()) != kMaxSeqLen ||
        int(param_bins.size()) != kMaxSeqLen * kNumSlots)
        throw ShapeMismatch("prediction arrays must be 128 and 128x16");

    QuantizedSequence q;
    int raw = kMaxSeqLen;
    for (int t = 0; t < kMaxSeqLen; ++t) {
        int id = std::clamp(command_ids[size_t(t)], 0, kCommandKinds - 1);
        if (id == int(CommandKind::EOS)) {
            raw = t;
            break;
        }
        q.command_ids[size_t(t)] = uint8_t(id);
    }
    for (int t = 0; t < raw; ++t) {
        auto kind = CommandKind(q.command_ids[size_t(t)]);
        for (int j = 0; j < kNumSlots; ++j) {
            if (!slot_used(kind, j)) continue;
            q.bin(t, j) = uint16_t(std::clamp(param_bins[size_t(t) * kNumSlots + j], 0, kUnusedBin));
        }
    }
    return q;
}

}  // namespace mcad
