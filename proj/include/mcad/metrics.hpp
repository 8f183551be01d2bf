#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mcad/codec.hpp"
#include "mcad/geometry.hpp"

namespace mcad::metrics {

/// Fraction of the 128 positions with matching command ids. Padding positions
/// count (Eq.-style literal sum over N); set include_padding=false to restrict
/// to positions before either sequence's first EOS.
double command_accuracy(const QuantizedSequence& gt, const QuantizedSequence& pred,
                        bool include_padding = true);

/// Over used slots of correctly predicted commands: fraction with
/// |bin_gt - bin_pred| < eta on the value scale where the unused sentinel
/// reads as -1. Strict inequality. nullopt when no correctly predicted command
/// carries parameters (undefined, reported absent).
std::optional<double> parameter_accuracy(const QuantizedSequence& gt,
                                         const QuantizedSequence& pred, int eta = 3,
                                         bool include_padding = true);

/// Symmetric squared-distance Chamfer: mean_p min_q |p-q|^2 + mean_q min_p.
/// chamfer_brute is the O(n^2) serial reference; chamfer uses a uniform-grid
/// bucket index with an exact expanding-ring search and OpenMP across points.
/// Both fill per-point minima identically and reduce in index order, so the
/// results are bit-equal.
double chamfer_brute(const geom::PointCloud& p, const geom::PointCloud& q);
double chamfer(const geom::PointCloud& p, const geom::PointCloud& q);

struct GenerationMetrics {
    double cov = 0, mmd = 0, jsd = 0;
};

/// COV: fraction of reference clouds that are the Chamfer-nearest reference of
/// at least one generated cloud. MMD: mean over reference of the min Chamfer
/// to the generated set. JSD: Jensen-Shannon divergence between 28^3 occupancy
/// histograms over [-1,1]^3, natural log.
GenerationMetrics generation_metrics(const std::vector<geom::PointCloud>& gen,
                                     const std::vector<geom::PointCloud>& ref);

double occupancy_jsd(const std::vector<geom::PointCloud>& a,
                     const std::vector<geom::PointCloud>& b, int grid = 28);

/// Exact token-level duplicate analysis. unique: fraction of gen appearing
/// exactly once within gen; novel: fraction of gen absent from train.
std::pair<double, double> uniqueness_novelty(const std::vector<QuantizedSequence>& gen,
                                             const std::vector<QuantizedSequence>& train);

// --- report -------------------------------------------------------------------

enum class Task { Reconstruction, Completion, Generation };

const char* task_name(Task t);

/// One evaluated model output with its bookkeeping.
struct SampleOutcome {
    bool has_gt = false;
    QuantizedSequence gt;
    QuantizedSequence pred;
    bool valid = false;          // grammar + geometry
    int gt_raw_length = 0;
    int pred_raw_length = 0;
    std::optional<double> cd;    // Chamfer vs gt, valid pairs only
    bool exported = false;       // mesh export succeeded
};

/// Aggregate metric bundle; absent optionals mean "undefined for this run".
struct MetricReport {
    std::string task;
    int count = 0;
    std::optional<double> a_c, a_p;
    std::optional<double> mcd;     // median Chamfer distance (raw, not x1e3)
    double ir = 0;                 // invalid ratio
    std::optional<double> al;      // mean raw length of valid outputs
    std::optional<double> l60;     // valid fraction among gt raw_length >= 60
    double export_ratio = 0;
    std::optional<double> cov, mmd, jsd, unique_frac, novel_frac;
};

/// Assembles the per-task report. Generation metrics (cov/mmd/jsd/unique/
/// novel) must be filled by the caller when applicable.
MetricReport run_report(Task task, const std::vector<SampleOutcome>& outcomes);

/// Raw values stored; display conventions (MCD x1e3, MMD/JSD/Unique/Novel
/// x1e2) applied only in the "display" block.
std::string report_to_json(const MetricReport& r);
MetricReport report_from_json(const std::string& text);

}  // namespace mcad::metrics
