#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "tes/common.hpp"
#include "tes/crypto.hpp"
#include "tes/grid.hpp"
#include "tes/state.hpp"

namespace tes::agent {

struct Pricing {
    double pr_q = 0.0;   // $/p.u.-hour for reactive service
    double alpha = 1.0;  // markup on curtailed active-power revenue
};

struct Policy {
    double bid_discount = 0.0;  // fraction knocked off the computed cost
    std::optional<double> subcontract_threshold;  // own cost above this tries downstream
};

struct NeighborInfo {
    AgentId zone = 0;
    BusId pzc_bus = 0;
    BusId dg_bus = 0;  // the neighbor's actuator bus
};

struct ViolationReport {
    BusId bus = 0;
    grid::ViolationDirection direction = grid::ViolationDirection::Under;
    double deviation = 0.0;
    Step step = 0;
};

struct BidComputation {
    bool feasible = false;
    double dp = 0.0;
    double dq = 0.0;
    double price = 0.0;
    std::optional<double> local_cost;
};

// CFP voltage targets are stated at meter resolution.
inline double quantize_dv(double dv, double quantum = 1e-4) {
    return std::round(dv / quantum) * quantum;
}

inline double revenue_active(double pr_p, double p_dg, double dt_hours) {
    return pr_p * p_dg * dt_hours;
}

inline double revenue_service(double pr_q, double q_dg, double dt_hours, double r_dg_lost,
                              double alpha) {
    return pr_q * std::abs(q_dg) * dt_hours + alpha * r_dg_lost;
}

struct ZonalAgent {
    AgentId id = 0;
    std::vector<BusId> zone_buses;
    std::vector<LineId> zone_lines;
    std::vector<NeighborInfo> neighbors;
    std::vector<BusId> meter_buses;
    BusId dg_bus = 0;
    std::string device_id;
    crypto::KeyPair keys;
    Pricing pricing;
    Policy policy;
    double safety_margin = 0.0005;  // clears violations slightly inside the band

    const grid::DeviceRecord& device(const grid::NetworkModel& net) const {
        const auto* bus = net.find_bus(dg_bus);
        if (!bus) fail("UnknownBus", "agent DG bus " + std::to_string(dg_bus));
        for (const auto& d : bus->devices)
            if (d.id == device_id) return d;
        fail("UnknownBus", "agent device " + device_id + " missing");
    }

    bool owns_bus(BusId b) const {
        return std::find(zone_buses.begin(), zone_buses.end(), b) != zone_buses.end();
    }

    // Meter readings for the zone: bus voltage plus total device P/Q at the
    // bus. Meters read the simulator's true values exactly.
    std::vector<ledger::MeterReading> read_zone_state(const grid::NetworkModel& net,
                                                      const grid::VoltageProfile& profile,
                                                      Step step) const {
        std::vector<ledger::MeterReading> out;
        for (BusId b : meter_buses) {
            const auto* bus = net.find_bus(b);
            if (!bus) fail("UnknownBus", std::to_string(b));
            double p = 0.0, q = 0.0;
            for (const auto& d : bus->devices) {
                p += d.p_set;
                q += d.q_set;
            }
            out.push_back({b, profile.at(b), p, q, step});
        }
        return out;
    }

    std::optional<ViolationReport> worst_zone_violation(const grid::NetworkModel& net,
                                                        const grid::VoltageProfile& profile) const {
        std::optional<ViolationReport> worst;
        for (const auto& v : grid::detect_violations(net, profile)) {
            if (!owns_bus(v.bus)) continue;
            if (!worst || v.deviation > worst->deviation)
                worst = ViolationReport{v.bus, v.direction, v.deviation, profile.timestamp};
        }
        return worst;
    }

    // Per-neighbor PZC setpoints that would clear the violation, scaled by
    // the response ratio of the PZC to the violated bus for the neighbor's
    // actuator. Neighbors with no leverage are excluded.
    std::map<AgentId, ledger::PzcTarget> compute_pzc_targets(
        const ViolationReport& violation, const grid::SensitivityMatrix& sens) const {
        std::map<AgentId, ledger::PzcTarget> out;
        double sign = (violation.direction == grid::ViolationDirection::Under) ? 1.0 : -1.0;
        double magnitude = violation.deviation + safety_margin;
        for (const auto& nb : neighbors) {
            double ratio;
            try {
                ratio = grid::pzc_sensitivity(sens, nb.pzc_bus, violation.bus, nb.dg_bus);
            } catch (const Error& e) {
                if (e.code() == "DegenerateSensitivity") continue;
                throw;
            }
            double dv = quantize_dv(sign * magnitude * ratio);
            if (dv == 0.0) continue;
            out[nb.zone] = ledger::PzcTarget{nb.pzc_bus, dv};
        }
        return out;
    }

    // Cheapest (dP, dQ) dispatch meeting the PZC target, greedy over the two
    // channels by marginal cost per unit of voltage change (reactive service
    // is priced per p.u.-hour; active curtailment at the marked-up lost
    // wholesale revenue; raising P costs nothing). Feasibility requires the
    // device capability box and circle plus the agent's own zone limits after
    // the action.
    BidComputation evaluate_cfp(const grid::NetworkModel& net, BusId pzc_bus, double dv_target,
                                const grid::SensitivityMatrix& sens, double dt_hours,
                                double pr_p) const {
        BidComputation out;
        if (dv_target == 0.0) {
            out.feasible = true;
            return out;
        }
        const grid::DeviceRecord& dev = device(net);
        const double sp = sens.sp(pzc_bus, dg_bus);
        const double sq = sens.sq(pzc_bus, dg_bus);
        const double dir = (dv_target > 0) ? 1.0 : -1.0;
        double need = std::abs(dv_target);

        double p = dev.p_set, q = dev.q_set;
        auto q_cap = [&](double p_now) {
            double circle = dev.s_max * dev.s_max - p_now * p_now;
            return std::min(dev.q_max, circle > 0 ? std::sqrt(circle) : 0.0);
        };

        struct Channel {
            char which;
            double rate;  // $ per unit of |dV|
        };
        std::vector<Channel> channels;
        if (sq > 1e-12) channels.push_back({'q', pricing.pr_q * dt_hours / sq});
        if (sp > 1e-12) {
            double rate_p = (dir > 0) ? 0.0 : pricing.alpha * pr_p * dt_hours / sp;
            channels.push_back({'p', rate_p});
        }
        std::stable_sort(channels.begin(), channels.end(),
                         [](const Channel& a, const Channel& b) { return a.rate < b.rate; });

        for (const auto& ch : channels) {
            if (need <= 1e-12) break;
            if (ch.which == 'q') {
                double headroom = (dir > 0) ? q_cap(p) - q : q + q_cap(p);
                headroom = std::max(0.0, headroom);
                double take = std::min(need, headroom * sq);
                q += dir * take / sq;
                need -= take;
            } else {
                double headroom = (dir > 0) ? dev.p_ceiling() - p : p;
                headroom = std::max(0.0, headroom);
                double take = std::min(need, headroom * sp);
                p += dir * take / sp;
                need -= take;
            }
        }
        if (need > 1e-9) return out;  // infeasible

        out.dp = p - dev.p_set;
        out.dq = q - dev.q_set;

        // Post-dispatch safety check on the agent's own zone after the action.
        grid::NetworkModel trial = net;
        auto* d = trial.find_device(device_id);
        d->p_set = p;
        d->q_set = q;
        auto op = grid::operating_point(trial);
        auto prof = grid::solve_voltage(trial, op);
        for (BusId b : zone_buses) {
            const auto* bus = trial.find_bus(b);
            double v = prof.at(b);
            if (v < bus->v_min - 1e-9 || v > bus->v_max + 1e-9) return out;
        }
        auto currents = grid::branch_currents(trial, op, prof);
        for (const auto& line : trial.lines) {
            if (std::find(zone_lines.begin(), zone_lines.end(), line.id) == zone_lines.end())
                continue;
            if (currents.at(line.id) > line.i_cap + 1e-9) return out;
        }

        out.feasible = true;
        double cost = pricing.pr_q * std::abs(out.dq) * dt_hours +
                      pricing.alpha * pr_p * std::max(0.0, -out.dp) * dt_hours;
        out.price = cost * (1.0 - policy.bid_discount);
        return out;
    }

    // Undiscounted cost of the same dispatch; what self-mitigation would cost.
    double raw_cost(const BidComputation& bid, double pr_p, double dt_hours) const {
        return pricing.pr_q * std::abs(bid.dq) * dt_hours +
               pricing.alpha * pr_p * std::max(0.0, -bid.dp) * dt_hours;
    }

    // Target at the downstream PZC that stands in for this agent's own
    // obligation, using the downstream neighbor's actuator.
    std::optional<ledger::PzcTarget> subcontract_target(const ledger::PzcTarget& own,
                                                        const NeighborInfo& downstream,
                                                        const grid::SensitivityMatrix& sens) const {
        double ratio;
        try {
            ratio = grid::pzc_sensitivity(sens, downstream.pzc_bus, own.pzc_bus,
                                          downstream.dg_bus);
        } catch (const Error& e) {
            if (e.code() == "DegenerateSensitivity") return std::nullopt;
            throw;
        }
        double dv = quantize_dv(own.dv_target * ratio);
        if (dv == 0.0) return std::nullopt;
        return ledger::PzcTarget{downstream.pzc_bus, dv};
    }

    struct ActuationResult {
        bool applied = false;
        bool clamped = false;
    };

    // Applies the winning dispatch to the device, clamped to its capability
    // limits. A scenario fault suppresses actuation entirely.
    ActuationResult act_on_contract(grid::NetworkModel& net, double dp, double dq,
                                    bool fault) const {
        if (fault) return {false, false};
        auto* d = net.find_device(device_id);
        if (!d) fail("UnknownBus", "device " + device_id);
        bool clamped = false;
        double p = d->p_set + dp;
        double p_clamped = std::clamp(p, 0.0, d->p_ceiling());
        if (p_clamped != p) clamped = true;
        double q = d->q_set + dq;
        double q_lim = std::min(d->q_max, [&] {
            double circle = d->s_max * d->s_max - p_clamped * p_clamped;
            return circle > 0 ? std::sqrt(circle) : 0.0;
        }());
        double q_clamped = std::clamp(q, -q_lim, q_lim);
        if (q_clamped != q) clamped = true;
        d->p_set = p_clamped;
        d->q_set = q_clamped;
        return {true, clamped};
    }
};

// Strict comparison: equal costs self-mitigate.
inline bool decide_award(double local_cost, double winning_effective_bid) {
    return winning_effective_bid < local_cost;
}

}  // namespace tes::agent
