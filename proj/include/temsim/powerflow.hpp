#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "temsim/units.hpp"

namespace temsim {

struct FeederNode {
  std::string id;
  int parent = -1;  // index into nodes; -1 marks the source
  double r_pu = 0;  // branch impedance from the parent
  double x_pu = 0;
  std::vector<AgentId> agents;
};

/// Radial feeder on a single per-unit base.  The linearized branch-flow
/// model drops loss terms: squared voltage falls linearly with downstream
/// real and reactive withdrawals.
struct FeederModel {
  FeederId id;
  std::vector<FeederNode> nodes;
  double v_source_pu = 1.0;
  double v_min_pu = 0.95;
  double v_max_pu = 1.05;
  double base_mva = 1.0;

  int root() const {
    int r = -1;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].parent < 0) {
        if (r >= 0) throw ValidationError("feeder " + id.value + " has multiple source nodes");
        r = static_cast<int>(i);
      }
    }
    if (r < 0) throw ValidationError("feeder " + id.value + " has no source node");
    return r;
  }

  void validate() const {
    const int r = root();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& n = nodes[i];
      if (n.r_pu < 0 || n.x_pu < 0) {
        throw ValidationError("feeder " + id.value + " node " + n.id + " has negative impedance");
      }
      if (n.parent >= static_cast<int>(nodes.size())) {
        throw ValidationError("feeder " + id.value + " node " + n.id + " has a dangling parent");
      }
    }
    // Tree check: every node must reach the root without revisits.
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      int hops = 0;
      int cur = static_cast<int>(i);
      while (cur != r) {
        cur = nodes[cur].parent;
        if (cur < 0 || ++hops > static_cast<int>(nodes.size())) {
          throw ValidationError("feeder " + id.value + " topology is not a tree rooted at " +
                                nodes[r].id);
        }
      }
    }
  }
};

/// Net withdrawal at a node (positive = consumption, negative = injection).
struct NodePower {
  double p_pu = 0;
  double q_pu = 0;
};

struct PowerFlowResult {
  std::vector<double> u_pu2;  // squared voltage per node
  std::vector<double> v_pu;
  std::vector<double> branch_p_pu;  // receiving-end flow from the parent into the node
  std::vector<double> branch_q_pu;
};

inline PowerFlowResult run_lindistflow(const FeederModel& feeder,
                                       const std::vector<NodePower>& withdrawals) {
  feeder.validate();
  const std::size_t n = feeder.nodes.size();
  if (withdrawals.size() != n) {
    throw ValidationError("feeder " + feeder.id.value + " expects " + std::to_string(n) +
                          " node withdrawals, got " + std::to_string(withdrawals.size()));
  }
  const int root = feeder.root();

  // Children lists and a bottom-up order.
  std::vector<std::vector<int>> children(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (feeder.nodes[i].parent >= 0) children[feeder.nodes[i].parent].push_back(static_cast<int>(i));
  }
  std::vector<int> order;
  order.reserve(n);
  std::vector<int> stack{root};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    order.push_back(v);
    for (int c : children[v]) stack.push_back(c);
  }

  PowerFlowResult res;
  res.branch_p_pu.resize(n);
  res.branch_q_pu.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    res.branch_p_pu[i] = withdrawals[i].p_pu;
    res.branch_q_pu[i] = withdrawals[i].q_pu;
  }
  // Branch flow into a node equals the sum of withdrawals in its subtree;
  // children fold into parents in bottom-up order.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int v = *it;
    const int p = feeder.nodes[v].parent;
    if (p >= 0) {
      res.branch_p_pu[p] += res.branch_p_pu[v];
      res.branch_q_pu[p] += res.branch_q_pu[v];
    }
  }

  res.u_pu2.assign(n, feeder.v_source_pu * feeder.v_source_pu);
  for (int v : order) {
    const int p = feeder.nodes[v].parent;
    if (p < 0) continue;
    res.u_pu2[v] = res.u_pu2[p] - 2.0 * (feeder.nodes[v].r_pu * res.branch_p_pu[v] +
                                         feeder.nodes[v].x_pu * res.branch_q_pu[v]);
    if (res.u_pu2[v] <= 0) {
      throw SimFault("linearized power flow left node " + feeder.nodes[v].id + " of feeder " +
                     feeder.id.value + " with non-physical voltage; model out of range");
    }
  }
  res.v_pu.resize(n);
  for (std::size_t i = 0; i < n; ++i) res.v_pu[i] = std::sqrt(res.u_pu2[i]);
  return res;
}

enum class ViolationKind { under_voltage, over_voltage };

struct Violation {
  int node = 0;
  std::string node_id;
  ViolationKind kind = ViolationKind::under_voltage;
  double v_pu = 0;
  double excursion_pu = 0;  // distance beyond the violated bound
};

inline std::vector<Violation> check_limits(const PowerFlowResult& result,
                                           const FeederModel& feeder) {
  std::vector<Violation> out;
  for (std::size_t i = 0; i < result.v_pu.size(); ++i) {
    const double v = result.v_pu[i];
    if (v < feeder.v_min_pu) {
      out.push_back(Violation{static_cast<int>(i), feeder.nodes[i].id,
                              ViolationKind::under_voltage, v, feeder.v_min_pu - v});
    } else if (v > feeder.v_max_pu) {
      out.push_back(Violation{static_cast<int>(i), feeder.nodes[i].id,
                              ViolationKind::over_voltage, v, v - feeder.v_max_pu});
    }
  }
  return out;
}

enum class AdjustDirection { reduce, increase };

struct AdjustmentSignal {
  AgentId agent;
  AdjustDirection direction = AdjustDirection::reduce;
  double real_kw = 0;
  double reactive_kvar = 0;
  std::string reason;
};

/// Per-agent power at the point of interconnection for one step, in kW
/// (positive = injection into the feeder).
struct AgentPower {
  double real_kw = 0;
  double reactive_kvar = 0;
};

/// Advisory corrective signals: over-voltage asks the node's injectors to
/// back off, under-voltage asks its withdrawers.  The hinted quantity is the
/// excursion translated through the path resistance of the linear model and
/// split pro-rata by each agent's contribution.
inline std::vector<AdjustmentSignal> corrective_signals(
    const std::vector<Violation>& violations, const FeederModel& feeder,
    const std::map<AgentId, AgentPower>& agent_power) {
  if (violations.empty()) {
    throw ValidationError("corrective_signals requires at least one violation");
  }
  std::vector<AdjustmentSignal> out;
  for (const Violation& viol : violations) {
    double r_path = 0;
    for (int cur = viol.node; feeder.nodes[cur].parent >= 0; cur = feeder.nodes[cur].parent) {
      r_path += feeder.nodes[cur].r_pu;
    }
    // du = 2 * r_path * dP  =>  dP needed to re-enter the band, linearized
    // around the violated bound.
    const double bound = viol.kind == ViolationKind::over_voltage ? feeder.v_max_pu
                                                                  : feeder.v_min_pu;
    const double du = std::abs(viol.v_pu * viol.v_pu - bound * bound);
    const double dp_pu = r_path > 0 ? du / (2.0 * r_path) : 0.0;
    const double dp_kw = dp_pu * feeder.base_mva * 1000.0;

    const bool want_injectors = viol.kind == ViolationKind::over_voltage;
    double total = 0;
    for (const AgentId& a : feeder.nodes[viol.node].agents) {
      const auto it = agent_power.find(a);
      if (it == agent_power.end()) continue;
      const double p = it->second.real_kw;
      if (want_injectors ? p > 0 : p < 0) total += std::abs(p);
    }
    if (total <= 0) continue;  // nobody at this node can help
    for (const AgentId& a : feeder.nodes[viol.node].agents) {
      const auto it = agent_power.find(a);
      if (it == agent_power.end()) continue;
      const double p = it->second.real_kw;
      if (!(want_injectors ? p > 0 : p < 0)) continue;
      const double share = std::abs(p) / total;
      AdjustmentSignal sig;
      sig.agent = a;
      sig.direction = AdjustDirection::reduce;
      sig.real_kw = dp_kw * share;
      sig.reactive_kvar = std::abs(it->second.reactive_kvar) > 0
                              ? dp_kw * share * std::abs(it->second.reactive_kvar) /
                                    std::max(std::abs(p), 1e-12)
                              : 0.0;
      sig.reason = std::string(viol.kind == ViolationKind::over_voltage ? "over" : "under") +
                   "-voltage " + std::to_string(viol.v_pu) + " pu at node " + viol.node_id;
      out.push_back(std::move(sig));
    }
  }
  return out;
}

}  // namespace temsim
