#pragma once

#include <map>
#include <string>
#include <vector>

#include "mcad/codec.hpp"

namespace mcad::corpus {

struct FilterStats {
    int seen = 0;
    int kept = 0;
    std::map<std::string, int> rejected;        // reason -> count
    std::map<std::string, int> length_buckets;  // paper bucket label -> count (kept records)
};

struct FilterResult {
    std::vector<std::string> records;  // surviving JSONL lines, input order
    FilterStats stats;
};

/// Keeps grammar-valid records with min_len <= raw_length <= max_len built
/// from the supported command set. Rejects are counted per reason
/// (parse/unsupported_command/invalid_grammar/too_short/too_long). Idempotent.
FilterResult filter_corpus(const std::vector<std::string>& lines, int min_len = 10,
                           int max_len = 128);

std::string stats_to_json(const FilterStats& s);

/// Paper-style length bucket label for a raw length.
std::string length_bucket(int raw_length);

struct SplitResult {
    std::vector<int> train, val, test;  // disjoint, exhaustive index sets
};

/// Deterministic shuffle then floor(0.8 n) / floor(0.1 n) / remainder.
SplitResult split(int n, double f_train, double f_val, uint64_t seed);

struct SynthConfig {
    int count = 100;
    int min_len = 10;
    int max_len = 128;
    uint64_t seed = 1;
    bool paper_length_distribution = true;  // Table-1 bucket weights
    double p_cut = 0.30;
    double p_intersect = 0.05;
    int max_attempts = 80;
};

/// Grammar- and geometry-valid sketch-extrude programs as JSONL records.
/// Each record is verified through parse -> normalize -> quantize ->
/// build_scene -> non-empty occupancy before emission; deterministic per seed.
/// Throws GenerationBudgetExceeded when a record exhausts its retry budget.
std::vector<std::string> synthesize(const SynthConfig& cfg);

}  // namespace mcad::corpus
