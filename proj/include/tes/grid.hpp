#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tes/common.hpp"

namespace tes::grid {

enum class DeviceKind { Generator, Storage, LoadBank };

inline std::string to_string(DeviceKind k) {
    switch (k) {
        case DeviceKind::Generator: return "generator";
        case DeviceKind::Storage: return "storage";
        case DeviceKind::LoadBank: return "load-bank";
    }
    return "?";
}

inline DeviceKind device_kind_from(const std::string& s) {
    if (s == "generator") return DeviceKind::Generator;
    if (s == "storage") return DeviceKind::Storage;
    if (s == "load-bank") return DeviceKind::LoadBank;
    fail("BadDeviceKind", s);
}

struct DeviceRecord {
    std::string id;
    DeviceKind kind = DeviceKind::Generator;
    double p_max = 0.0;
    double q_max = 0.0;
    double s_max = 0.0;
    double p_set = 0.0;
    double q_set = 0.0;
    double p_avail = 0.0;  // fuel/irradiance ceiling, time-varying

    double p_ceiling() const { return std::min(p_max, p_avail); }

    bool within_limits(double tol = 1e-9) const {
        return p_set >= -tol && p_set <= p_ceiling() + tol && std::abs(q_set) <= q_max + tol &&
               std::hypot(p_set, q_set) <= s_max + tol;
    }
};

struct BusRecord {
    BusId id = 0;
    double v_min = 0.95;
    double v_max = 1.05;
    double load_p = 0.0;
    double load_q = 0.0;
    std::vector<DeviceRecord> devices;
};

struct LineRecord {
    LineId id = 0;
    BusId from_bus = 0;
    BusId to_bus = 0;
    double r = 0.0;
    double x = 0.0;
    double i_cap = 1.0;
};

struct NetworkModel {
    std::vector<BusRecord> buses;
    std::vector<LineRecord> lines;
    BusId root_bus_id = 0;
    double base_voltage = 1.0;

    const BusRecord* find_bus(BusId id) const {
        for (const auto& b : buses)
            if (b.id == id) return &b;
        return nullptr;
    }
    BusRecord* find_bus(BusId id) {
        for (auto& b : buses)
            if (b.id == id) return &b;
        return nullptr;
    }
    DeviceRecord* find_device(const std::string& dev_id) {
        for (auto& b : buses)
            for (auto& d : b.devices)
                if (d.id == dev_id) return &d;
        return nullptr;
    }
};

// Net injection per bus: sum of device setpoints minus load. Keyed by every
// bus id in the network, no extras.
struct OperatingPoint {
    std::map<BusId, double> inj_p;
    std::map<BusId, double> inj_q;
};

inline OperatingPoint operating_point(const NetworkModel& net) {
    OperatingPoint op;
    for (const auto& b : net.buses) {
        double p = -b.load_p, q = -b.load_q;
        for (const auto& d : b.devices) {
            p += d.p_set;
            q += d.q_set;
        }
        op.inj_p[b.id] = p;
        op.inj_q[b.id] = q;
    }
    return op;
}

struct VoltageProfile {
    std::map<BusId, double> v;
    Step timestamp = 0;

    double at(BusId bus) const {
        auto it = v.find(bus);
        if (it == v.end()) fail("UnknownBus", "no voltage for bus " + std::to_string(bus));
        return it->second;
    }
};

// Rooted-tree view of the network: parent pointers, depth, BFS order and
// cumulative root-path impedance per bus. Throws NonRadialTopology if the
// line set is not a tree rooted at root_bus_id.
struct Topology {
    std::vector<BusId> order;             // BFS from root, root first
    std::map<BusId, BusId> parent;        // absent for root
    std::map<BusId, const LineRecord*> parent_line;
    std::map<BusId, int> depth;
    std::map<BusId, double> rsum;         // sum of r on path root -> bus
    std::map<BusId, double> xsum;

    BusId lca(BusId a, BusId b) const {
        int da = depth.at(a), db = depth.at(b);
        while (da > db) { a = parent.at(a); --da; }
        while (db > da) { b = parent.at(b); --db; }
        while (a != b) { a = parent.at(a); b = parent.at(b); }
        return a;
    }
};

inline Topology build_topology(const NetworkModel& net) {
    if (!net.find_bus(net.root_bus_id)) fail("NonRadialTopology", "root bus missing");
    std::multimap<BusId, const LineRecord*> adj;
    for (const auto& l : net.lines) {
        if (!net.find_bus(l.from_bus) || !net.find_bus(l.to_bus))
            fail("NonRadialTopology", "line " + std::to_string(l.id) + " references unknown bus");
        if (l.r < 0 || l.x < 0) fail("NonRadialTopology", "negative line impedance");
        adj.insert({l.from_bus, &l});
        adj.insert({l.to_bus, &l});
    }
    Topology t;
    t.order.push_back(net.root_bus_id);
    t.depth[net.root_bus_id] = 0;
    t.rsum[net.root_bus_id] = 0.0;
    t.xsum[net.root_bus_id] = 0.0;
    std::map<BusId, bool> seen{{net.root_bus_id, true}};
    for (size_t i = 0; i < t.order.size(); ++i) {
        BusId u = t.order[i];
        auto [lo, hi] = adj.equal_range(u);
        for (auto it = lo; it != hi; ++it) {
            const LineRecord* l = it->second;
            BusId v = (l->from_bus == u) ? l->to_bus : l->from_bus;
            if (i > 0 && v == t.parent.at(u)) continue;
            if (seen[v]) fail("NonRadialTopology", "cycle through bus " + std::to_string(v));
            seen[v] = true;
            t.order.push_back(v);
            t.parent[v] = u;
            t.parent_line[v] = l;
            t.depth[v] = t.depth[u] + 1;
            t.rsum[v] = t.rsum[u] + l->r;
            t.xsum[v] = t.xsum[u] + l->x;
        }
    }
    if (t.order.size() != net.buses.size())
        fail("NonRadialTopology", "network is not connected");
    return t;
}

// Branch P/Q flowing from parent into each bus's subtree (backward sweep).
struct BranchFlows {
    std::map<BusId, double> p;  // keyed by child bus of the line
    std::map<BusId, double> q;
};

inline BranchFlows sweep_flows(const NetworkModel& net, const Topology& topo,
                               const OperatingPoint& op) {
    for (const auto& b : net.buses)
        if (!op.inj_p.count(b.id) || !op.inj_q.count(b.id))
            fail("MissingBus", "operating point missing bus " + std::to_string(b.id));
    BranchFlows f;
    std::map<BusId, double> sub_p, sub_q;  // net consumption of each subtree
    for (auto it = topo.order.rbegin(); it != topo.order.rend(); ++it) {
        BusId u = *it;
        double p = -op.inj_p.at(u), q = -op.inj_q.at(u);
        for (const auto& [child, par] : topo.parent) {
            if (par == u) {
                p += sub_p.at(child);
                q += sub_q.at(child);
            }
        }
        sub_p[u] = p;
        sub_q[u] = q;
        if (u != net.root_bus_id) {
            f.p[u] = p;
            f.q[u] = q;
        }
    }
    return f;
}

// Linearized DistFlow forward sweep: V_child = V_parent - (r*P + x*Q)/V_base,
// root pinned to base_voltage.
inline VoltageProfile solve_voltage(const NetworkModel& net, const OperatingPoint& op,
                                    Step timestamp = 0) {
    Topology topo = build_topology(net);
    BranchFlows f = sweep_flows(net, topo, op);
    VoltageProfile prof;
    prof.timestamp = timestamp;
    prof.v[net.root_bus_id] = net.base_voltage;
    for (BusId u : topo.order) {
        if (u == net.root_bus_id) continue;
        const LineRecord* l = topo.parent_line.at(u);
        prof.v[u] = prof.v.at(topo.parent.at(u)) -
                    (l->r * f.p.at(u) + l->x * f.q.at(u)) / net.base_voltage;
    }
    return prof;
}

// |I| = sqrt(P^2+Q^2) / V_receiving per line, keyed by line id.
inline std::map<LineId, double> branch_currents(const NetworkModel& net, const OperatingPoint& op,
                                                const VoltageProfile& profile) {
    Topology topo = build_topology(net);
    BranchFlows f = sweep_flows(net, topo, op);
    std::map<LineId, double> out;
    for (const auto& [child, line] : topo.parent_line)
        out[line->id] = std::hypot(f.p.at(child), f.q.at(child)) / profile.at(child);
    return out;
}

// dV_i/dP_j and dV_i/dQ_j for all bus pairs: the impedance sum over the
// shared root path of i and j, divided by the profile voltage at the deepest
// shared bus. Symmetric by construction; root row/column is zero.
struct SensitivityMatrix {
    std::vector<BusId> bus_ids;  // sorted
    std::vector<std::vector<double>> sp_m;
    std::vector<std::vector<double>> sq_m;

    size_t index(BusId b) const {
        auto it = std::lower_bound(bus_ids.begin(), bus_ids.end(), b);
        if (it == bus_ids.end() || *it != b)
            fail("UnknownBus", "bus " + std::to_string(b) + " not in sensitivity matrix");
        return static_cast<size_t>(it - bus_ids.begin());
    }
    double sp(BusId i, BusId j) const { return sp_m[index(i)][index(j)]; }
    double sq(BusId i, BusId j) const { return sq_m[index(i)][index(j)]; }
};

inline SensitivityMatrix build_sensitivity(const NetworkModel& net, const VoltageProfile& profile) {
    Topology topo = build_topology(net);
    SensitivityMatrix m;
    for (const auto& b : net.buses) m.bus_ids.push_back(b.id);
    std::sort(m.bus_ids.begin(), m.bus_ids.end());
    const size_t n = m.bus_ids.size();
    m.sp_m.assign(n, std::vector<double>(n, 0.0));
    m.sq_m.assign(n, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i; j < n; ++j) {
            BusId a = m.bus_ids[i], b = m.bus_ids[j];
            BusId meet = topo.lca(a, b);
            double v_prev = profile.at(meet);
            m.sp_m[i][j] = m.sp_m[j][i] = topo.rsum.at(meet) / v_prev;
            m.sq_m[i][j] = m.sq_m[j][i] = topo.xsum.at(meet) / v_prev;
        }
    }
    return m;
}

// First-order prediction: dV_i = sp[i][j]*dp + sq[i][j]*dq.
inline std::map<BusId, double> predict_voltage_change(const SensitivityMatrix& sens, BusId bus_j,
                                                      double dp, double dq) {
    size_t j = sens.index(bus_j);
    std::map<BusId, double> dv;
    for (size_t i = 0; i < sens.bus_ids.size(); ++i)
        dv[sens.bus_ids[i]] = sens.sp_m[i][j] * dp + sens.sq_m[i][j] * dq;
    return dv;
}

// Ratio of voltage response at the PZC to the response at the violated bus
// for the same actuation.
inline double pzc_sensitivity(const SensitivityMatrix& sens, BusId pzc_bus, BusId violated_bus,
                              BusId actuator_bus) {
    double num = sens.sp(pzc_bus, actuator_bus);
    double den = sens.sp(violated_bus, actuator_bus);
    if (std::abs(den) < 1e-12)
        fail("DegenerateSensitivity", "actuator bus " + std::to_string(actuator_bus) +
                                          " has no leverage on bus " + std::to_string(violated_bus));
    return num / den;
}

enum class ViolationDirection { Under, Over };

struct Violation {
    BusId bus = 0;
    double v = 0.0;
    double deviation = 0.0;  // magnitude beyond the limit
    ViolationDirection direction = ViolationDirection::Under;
};

// Closed-interval limit check: v == v_max is compliant.
inline std::vector<Violation> detect_violations(const NetworkModel& net,
                                                const VoltageProfile& profile) {
    std::vector<Violation> out;
    for (const auto& b : net.buses) {
        double v = profile.at(b.id);
        if (v < b.v_min)
            out.push_back({b.id, v, b.v_min - v, ViolationDirection::Under});
        else if (v > b.v_max)
            out.push_back({b.id, v, v - b.v_max, ViolationDirection::Over});
    }
    return out;
}

}  // namespace tes::grid
