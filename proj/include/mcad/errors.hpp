#pragma once

#include <stdexcept>
#include <string>

namespace mcad {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Corpus record violates the documented JSON schema.
struct MalformedRecord : Error {
    int position;  // index of the first offending command, -1 if record-level
    MalformedRecord(const std::string& msg, int pos = -1)
        : Error("malformed record: " + msg), position(pos) {}
};

/// Command sequence violates the sketch-extrude grammar.
struct GrammarError : Error {
    int position;  // index of the first offending command
    GrammarError(const std::string& msg, int pos)
        : Error("grammar error at " + std::to_string(pos) + ": " + msg), position(pos) {}
};

/// Model has a zero-extent bounding box (nothing to normalize).
struct DegenerateModel : Error {
    explicit DegenerateModel(const std::string& msg) : Error("degenerate model: " + msg) {}
};

/// Continuous slot value outside [-1,1] handed to the quantizer.
struct NotNormalized : Error {
    NotNormalized(int pos, int slot, double v)
        : Error("not normalized: slot " + std::to_string(slot) + " at position " +
                std::to_string(pos) + " has value " + std::to_string(v)) {}
};

/// Sequence executes to invalid geometry (unclosed loop, zero depth, ...).
struct GeometryError : Error {
    std::string reason;
    explicit GeometryError(const std::string& r) : Error("geometry error: " + r), reason(r) {}
};

/// Scene contains no material (e.g. everything cut away).
struct EmptySolid : Error {
    EmptySolid() : Error("empty solid: no surface found") {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

struct NonPositiveDelta : Error {
    NonPositiveDelta() : Error("discretization requires delta > 0") {}
};

struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& msg) : Error("shape mismatch: " + msg) {}
};

struct IndexOutOfRange : Error {
    explicit IndexOutOfRange(const std::string& msg) : Error("index out of range: " + msg) {}
};

/// Training loss became non-finite.
struct DivergedLoss : Error {
    explicit DivergedLoss(int step)
        : Error("training diverged: non-finite loss at step " + std::to_string(step)) {}
};

struct TooFewRecords : Error {
    explicit TooFewRecords(size_t n)
        : Error("too few records for split: " + std::to_string(n)) {}
};

struct GenerationBudgetExceeded : Error {
    explicit GenerationBudgetExceeded(const std::string& msg)
        : Error("generation budget exceeded: " + msg) {}
};

/// Metric has an empty denominator and is reported as absent.
struct UndefinedMetric : Error {
    explicit UndefinedMetric(const std::string& msg) : Error("undefined metric: " + msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

}  // namespace mcad
