#include "vlnwb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace vlnwb {

void MetricConfig::check() const {
  if (success_threshold_hops <= 0) throw std::runtime_error("metrics: success threshold must be > 0");
  if (!(dtw_distance_scale > 0.0)) throw std::runtime_error("metrics: d_th must be > 0");
}

namespace {

// Per-call BFS cache keyed by source node.
class HopCache {
 public:
  explicit HopCache(const NavGraph& g) : graph_(g) {}
  int hops(NodeIndex a, NodeIndex b) {
    auto it = rows_.find(a);
    if (it == rows_.end()) it = rows_.emplace(a, graph_.hops_from(a)).first;
    const int d = it->second[b];
    if (d < 0) throw std::runtime_error("metrics: unreachable node pair");
    return d;
  }

 private:
  const NavGraph& graph_;
  std::unordered_map<NodeIndex, std::vector<int>> rows_;
};

int path_hops(const std::vector<NodeIndex>& nodes) {
  return static_cast<int>(nodes.size()) - 1;
}

}  // namespace

int task_completion(const Trajectory& pred, NodeIndex goal, const NavGraph& graph,
                    const MetricConfig& cfg) {
  cfg.check();
  if (pred.states.empty()) throw std::runtime_error("metrics: empty trajectory");
  return graph.shortest_path_len(pred.end().node, goal) <= cfg.success_threshold_hops ? 1 : 0;
}

double spd(const Trajectory& pred, NodeIndex goal, const NavGraph& graph) {
  if (pred.states.empty()) throw std::runtime_error("metrics: empty trajectory");
  return static_cast<double>(graph.shortest_path_len(pred.end().node, goal));
}

int levenshtein(std::span<const NodeIndex> a, std::span<const NodeIndex> b) {
  const size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double sed(const Trajectory& pred, const Trajectory& ref, NodeIndex goal, const NavGraph& graph,
           const MetricConfig& cfg) {
  if (task_completion(pred, goal, graph, cfg) == 0) return 0.0;
  const auto p = dedup_nodes(pred);
  const auto r = dedup_nodes(ref);
  const double denom = static_cast<double>(std::max(p.size(), r.size()));
  return 1.0 - static_cast<double>(levenshtein(p, r)) / denom;
}

double cls(const Trajectory& pred, const Trajectory& ref, const NavGraph& graph,
           const MetricConfig& cfg) {
  cfg.check();
  const auto p = dedup_nodes(pred);
  const auto r = dedup_nodes(ref);
  HopCache hop(graph);
  double coverage = 0.0;
  for (NodeIndex rn : r) {
    int best = hop.hops(rn, p[0]);
    for (size_t i = 1; i < p.size() && best > 0; ++i)
      best = std::min(best, hop.hops(rn, p[i]));
    coverage += std::exp(-static_cast<double>(best) / cfg.dtw_distance_scale);
  }
  coverage /= static_cast<double>(r.size());
  const double epl = coverage * path_hops(r);
  const double denom = epl + std::fabs(epl - path_hops(p));
  // both paths degenerate (zero hops): a full-coverage single-node match scores 1
  const double length_score = denom == 0.0 ? 1.0 : epl / denom;
  return coverage * length_score;
}

double dtw_cost(std::span<const NodeIndex> a, std::span<const NodeIndex> b,
                const std::function<double(NodeIndex, NodeIndex)>& cost) {
  const size_t n = a.size(), m = b.size();
  if (n == 0 || m == 0) throw std::runtime_error("metrics: dtw over empty sequence");
  constexpr double kInf = 1e300;
  std::vector<double> prev(m, kInf), cur(m, kInf);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < m; ++j) {
      const double c = cost(a[i], b[j]);
      if (i == 0 && j == 0) {
        cur[j] = c;
      } else {
        double best = kInf;
        if (i > 0) best = std::min(best, prev[j]);
        if (j > 0) best = std::min(best, cur[j - 1]);
        if (i > 0 && j > 0) best = std::min(best, prev[j - 1]);
        cur[j] = c + best;
      }
    }
    std::swap(prev, cur);
    std::fill(cur.begin(), cur.end(), kInf);
  }
  return prev[m - 1];
}

double ndtw(const Trajectory& pred, const Trajectory& ref, const NavGraph& graph,
            const MetricConfig& cfg) {
  cfg.check();
  const auto p = dedup_nodes(pred);
  const auto r = dedup_nodes(ref);
  HopCache hop(graph);
  const double cost = dtw_cost(p, r, [&](NodeIndex x, NodeIndex y) {
    return static_cast<double>(hop.hops(x, y));
  });
  return std::exp(-cost / (std::sqrt(static_cast<double>(r.size())) * cfg.dtw_distance_scale));
}

double sdtw(const Trajectory& pred, const Trajectory& ref, NodeIndex goal, const NavGraph& graph,
            const MetricConfig& cfg) {
  return task_completion(pred, goal, graph, cfg) * ndtw(pred, ref, graph, cfg);
}

SampleMetrics evaluate_sample(const Trajectory& pred, const Trajectory& ref, NodeIndex goal,
                              const NavGraph& graph, const MetricConfig& cfg) {
  SampleMetrics m;
  m.tc = task_completion(pred, goal, graph, cfg);
  m.spd = spd(pred, goal, graph);
  m.sed = sed(pred, ref, goal, graph, cfg);
  m.cls = cls(pred, ref, graph, cfg);
  m.ndtw = ndtw(pred, ref, graph, cfg);
  m.sdtw = m.tc * m.ndtw;
  return m;
}

MetricSummary aggregate(std::span<const SampleMetrics> samples) {
  MetricSummary out;
  out.sample_count = static_cast<int>(samples.size());
  if (samples.empty()) return out;
  double s_spd = 0.0, f_spd = 0.0;
  int n_fail = 0;
  for (const auto& s : samples) {
    out.mean.tc += s.tc;
    out.mean.spd += s.spd;
    out.mean.sed += s.sed;
    out.mean.cls += s.cls;
    out.mean.ndtw += s.ndtw;
    out.mean.sdtw += s.sdtw;
    if (s.tc > 0.5) {
      ++out.success_count;
      s_spd += s.spd;
    } else {
      ++n_fail;
      f_spd += s.spd;
    }
  }
  const double n = static_cast<double>(out.sample_count);
  out.mean.tc /= n;
  out.mean.spd /= n;
  out.mean.sed /= n;
  out.mean.cls /= n;
  out.mean.ndtw /= n;
  out.mean.sdtw /= n;
  if (out.success_count > 0) out.success_spd = s_spd / out.success_count;
  if (n_fail > 0) out.failure_spd = f_spd / n_fail;
  return out;
}

}  // namespace vlnwb
