#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "vlnwb/street_graph.hpp"

namespace vlnwb {

struct MetricConfig {
  int success_threshold_hops = 1;   // goal or an adjacent node counts as success
  double dtw_distance_scale = 1.0;  // d_th in the coverage / DTW normalizers

  void check() const;
};

struct SampleMetrics {
  double tc = 0.0;    // {0,1}
  double spd = 0.0;   // >= 0, in hops
  double sed = 0.0;   // [0,1]
  double cls = 0.0;   // [0,1]
  double ndtw = 0.0;  // (0,1]
  double sdtw = 0.0;  // [0,1]
};

struct MetricSummary {
  SampleMetrics mean;
  std::optional<double> success_spd;  // mean SPD over tc=1 samples; absent if none
  std::optional<double> failure_spd;  // mean SPD over tc=0 samples; absent if none
  int sample_count = 0;
  int success_count = 0;
};

int task_completion(const Trajectory& pred, NodeIndex goal, const NavGraph& graph,
                    const MetricConfig& cfg);

double spd(const Trajectory& pred, NodeIndex goal, const NavGraph& graph);

// Success-gated normalized Levenshtein over deduplicated node sequences:
// 0 on failure, else 1 - lev / max(|pred|, |ref|).
double sed(const Trajectory& pred, const Trajectory& ref, NodeIndex goal, const NavGraph& graph,
           const MetricConfig& cfg);

// coverage = mean_r exp(-min_p hops(r,p) / d_th); EPL = coverage * len(ref);
// CLS = coverage * EPL / (EPL + |EPL - len(pred)|), path lengths in hops.
double cls(const Trajectory& pred, const Trajectory& ref, const NavGraph& graph,
           const MetricConfig& cfg);

// exp(-DTW / (sqrt(|ref|) * d_th)) where DTW is the min-cost monotone alignment
// of the deduplicated node sequences under hop distance and |ref| counts nodes.
double ndtw(const Trajectory& pred, const Trajectory& ref, const NavGraph& graph,
            const MetricConfig& cfg);

double sdtw(const Trajectory& pred, const Trajectory& ref, NodeIndex goal, const NavGraph& graph,
            const MetricConfig& cfg);

SampleMetrics evaluate_sample(const Trajectory& pred, const Trajectory& ref, NodeIndex goal,
                              const NavGraph& graph, const MetricConfig& cfg);

MetricSummary aggregate(std::span<const SampleMetrics> samples);

// Min-cost monotone alignment of two index sequences under `cost`.
// Exposed so tests can drive it against the exhaustive-alignment oracle.
double dtw_cost(std::span<const NodeIndex> a, std::span<const NodeIndex> b,
                const std::function<double(NodeIndex, NodeIndex)>& cost);

// Token-level edit distance between two id sequences.
int levenshtein(std::span<const NodeIndex> a, std::span<const NodeIndex> b);

}  // namespace vlnwb
