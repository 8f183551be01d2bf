#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcad/errors.hpp"

namespace mcad {

// ---------------------------------------------------------------------------
// Parametric CAD sequence data model.
//
// A sequence is a fixed-length (128) program of sketch-extrude commands.
// Each command carries 16 parameter slots; slots a command does not use hold
// the sentinel -1. Continuous slots hold values in [-1,1] once a sequence is
// normalized; geometric quantities map to slots as follows:
//
//   slot  name   meaning                         slot encoding
//   0,1   x,y    curve endpoint / circle center  sketch units, [-1,1]
//   2     alpha  arc sweep angle, (0, 2pi]       alpha/pi - 1
//   3     f      counter-clockwise flag          {0,1}
//   4     r      circle radius, (0,1]            sketch units
//   5     theta  plane normal polar, [0,pi]      2*theta/pi - 1
//   6     phi    plane normal azimuth, [-pi,pi]  phi/pi
//   7     gamma  in-plane rotation, [-pi,pi]     gamma/pi
//   8-10  px..pz sketch plane origin, [-2,2]     p/2
//   11    s      profile scale, (0,4]            s/2 - 1
//   12,13 e1,e2  extrusion extents, [-4,4]       e/4
//   14    b      boolean op                      {new=0,join=1,cut=2,intersect=3}
//   15    u      extent type                     {one-sided=0,symmetric=1,two-sided=2}
// ---------------------------------------------------------------------------

enum class CommandKind : uint8_t { SOL = 0, Line = 1, Arc = 2, Circle = 3, Extrude = 4, EOS = 5 };

inline constexpr int kCommandKinds = 6;
inline constexpr int kMaxSeqLen = 128;   // N
inline constexpr int kNumSlots = 16;
inline constexpr int kQuantBins = 256;   // continuous value bins
inline constexpr int kUnusedBin = 256;   // sentinel bin for unused slots
inline constexpr int kParamVocab = 257;  // 2^8 + 1

const char* command_name(CommandKind k);
std::optional<CommandKind> command_from_name(const std::string& name);

namespace slot {
enum : int {
    X = 0, Y = 1, Alpha = 2, Flag = 3, Radius = 4,
    Theta = 5, Phi = 6, Gamma = 7,
    PX = 8, PY = 9, PZ = 10, Scale = 11, E1 = 12, E2 = 13, Bool = 14, Extent = 15,
};
}

/// Bitmask of slots used by each command kind.
constexpr uint16_t slot_mask(CommandKind k) {
    switch (k) {
        case CommandKind::Line:    return 0b0000000000000011;  // x, y
        case CommandKind::Arc:     return 0b0000000000001111;  // x, y, alpha, f
        case CommandKind::Circle:  return 0b0000000000010011;  // x, y, r
        case CommandKind::Extrude: return 0b1111111111100000;  // theta..u (11 slots)
        default:                   return 0;                   // SOL, EOS
    }
}

constexpr bool slot_used(CommandKind k, int j) { return (slot_mask(k) >> j) & 1; }

constexpr bool slot_discrete(int j) {
    return j == slot::Flag || j == slot::Bool || j == slot::Extent;
}

constexpr int slot_code_count(int j) {
    return j == slot::Flag ? 2 : j == slot::Bool ? 4 : j == slot::Extent ? 3 : 0;
}

struct Command {
    CommandKind kind = CommandKind::EOS;
    std::array<double, kNumSlots> slots;

    Command() { slots.fill(-1.0); }
    explicit Command(CommandKind k) : kind(k) { slots.fill(-1.0); }
};

/// Fixed-length (128) command program. Positions >= raw_length are EOS.
/// raw_length counts real commands only, i.e. the index of the first EOS
/// (128 when no padding is present).
struct CadSequence {
    std::array<Command, kMaxSeqLen> commands;
    int raw_length = 0;

    const Command& at(int t) const { return commands[size_t(t)]; }
    Command& at(int t) { return commands[size_t(t)]; }
};

/// Integer token form: command ids in [0,6), parameter bins in [0,257).
/// Bin 256 marks a slot outside its command's used mask.
struct QuantizedSequence {
    std::array<uint8_t, kMaxSeqLen> command_ids{};
    std::array<uint16_t, size_t(kMaxSeqLen) * kNumSlots> param_bins{};

    QuantizedSequence() {
        command_ids.fill(uint8_t(CommandKind::EOS));
        param_bins.fill(kUnusedBin);
    }

    uint16_t bin(int t, int j) const { return param_bins[size_t(t) * kNumSlots + j]; }
    uint16_t& bin(int t, int j) { return param_bins[size_t(t) * kNumSlots + j]; }

    /// Index of the first EOS token, 128 if none.
    int raw_length() const {
        for (int t = 0; t < kMaxSeqLen; ++t)
            if (command_ids[size_t(t)] == uint8_t(CommandKind::EOS)) return t;
        return kMaxSeqLen;
    }

    bool operator==(const QuantizedSequence& o) const {
        return command_ids == o.command_ids && param_bins == o.param_bins;
    }
};

// --- grammar ---------------------------------------------------------------

/// Single left-to-right pass over command kinds (raw program, no EOS inside).
/// Returns the position and message of the first violation, or nullopt.
struct GrammarIssue {
    int position;
    std::string message;
};
std::optional<GrammarIssue> check_grammar(std::span<const CommandKind> kinds);

/// Throws GrammarError if the padded sequence is invalid (prefix grammar plus
/// EOS-only padding).
void validate(const CadSequence& seq);

// --- operations ------------------------------------------------------------

/// Builds a padded CadSequence from a parsed JSON record (see io/corpus_io.hpp
/// for the file format). Throws MalformedRecord / GrammarError.
CadSequence sequence_from_record(const std::string& json_text);

/// Inverse of sequence_from_record for grammar-valid sequences.
std::string sequence_to_record(const CadSequence& seq, const std::string& id);

/// Rescales/translates spatial parameters so the executed model's bounding box
/// fits [-1,1]^3 and touches it along its longest axis. Sketch coordinates are
/// canonicalized per sketch (max |coordinate| becomes 1, profile scale s
/// absorbs the factor). Angles and flags unchanged. Throws DegenerateModel.
CadSequence normalize(const CadSequence& seq);

/// True when every used continuous slot is within [-1,1] + 1e-6.
bool is_normalized(const CadSequence& seq);

/// Continuous v in [-1,1] -> bin round((v+1)/2*255), half away from zero,
/// clamped to [0,255]. Discrete slots keep their enum codes as bins. Unused
/// slots map to 256. Throws NotNormalized when |v| > 1 + 1e-6.
QuantizedSequence quantize(const CadSequence& seq);

/// Bin b in [0,256) -> 2b/255 - 1; bin 256 -> sentinel -1. Discrete slots are
/// clamped into their enum range. The command structure is re-checked against
/// the grammar (GrammarError signals an invalid network prediction). A bin of
/// 256 inside a used slot is tolerated and decodes to -1; geometry validation
/// catches the consequences.
CadSequence dequantize(const QuantizedSequence& q);

/// Zeroes command id and all 16 bins at floor(ratio * raw_length) positions
/// chosen uniformly without replacement among the first raw_length positions.
/// Bit-identical for equal seeds. Optionally reports the chosen positions.
QuantizedSequence mask_sequence(const QuantizedSequence& q, double ratio, uint64_t seed,
                                std::vector<int>* masked_positions = nullptr);

/// Repairs raw network argmax output into a well-formed QuantizedSequence:
/// everything after the first EOS becomes EOS padding, and slots outside the
/// predicted command's mask are forced to bin 256. In-mask bins predicted as
/// 256 are left alone (dequantize maps them to -1).
QuantizedSequence canonicalize_prediction(std::span<const int> command_ids,
                                          std::span<const int> param_bins);

inline double quantize_value(double v) {
    double b = std::round((v + 1.0) / 2.0 * 255.0);
    return b < 0 ? 0 : b > 255 ? 255 : b;
}

inline double dequantize_bin(int b) { return 2.0 * double(b) / 255.0 - 1.0; }

// Slot encoding helpers (geometric value <-> slot value).
namespace enc {
inline double alpha_to_slot(double a) { return a / std::numbers::pi - 1.0; }
inline double slot_to_alpha(double s) { return (s + 1.0) * std::numbers::pi; }
inline double theta_to_slot(double t) { return 2.0 * t / std::numbers::pi - 1.0; }
inline double slot_to_theta(double s) { return (s + 1.0) * std::numbers::pi / 2.0; }
inline double phi_to_slot(double p) { return p / std::numbers::pi; }
inline double slot_to_phi(double s) { return s * std::numbers::pi; }
inline double origin_to_slot(double p) { return p / 2.0; }
inline double slot_to_origin(double s) { return s * 2.0; }
inline double scale_to_slot(double v) { return v / 2.0 - 1.0; }
inline double slot_to_scale(double s) { return (s + 1.0) * 2.0; }
inline double extent_to_slot(double e) { return e / 4.0; }
inline double slot_to_extent(double s) { return s * 4.0; }
}  // namespace enc

}  // namespace mcad
