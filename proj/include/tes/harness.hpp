#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tes/agent.hpp"
#include "tes/common.hpp"
#include "tes/contract.hpp"
#include "tes/crypto.hpp"
#include "tes/grid.hpp"
#include "tes/ledger.hpp"
#include "tes/scenario.hpp"

namespace tes::harness {

// ---------------------------------------------------------------------------
// Deterministic message bus: per-sender FIFO, uniform delivery latency.
// ---------------------------------------------------------------------------

class MessageBus {
public:
    struct Message {
        int from = 0;
        int to = 0;
        Step deliver_step = 0;
        long seq = 0;
        json body;
    };

    void send(int from, int to, Step deliver_step, json body) {
        queue_.push_back({from, to, deliver_step, next_seq_++, std::move(body)});
    }

    // Messages due at or before `step`, in send order.
    std::vector<Message> drain_due(Step step) {
        std::vector<Message> due, rest;
        for (auto& m : queue_) (m.deliver_step <= step ? due : rest).push_back(std::move(m));
        queue_ = std::move(rest);
        std::sort(due.begin(), due.end(),
                  [](const Message& a, const Message& b) { return a.seq < b.seq; });
        return due;
    }

    size_t pending() const { return queue_.size(); }

private:
    std::vector<Message> queue_;
    long next_seq_ = 0;
};

// ---------------------------------------------------------------------------
// Run report and CSV emission
// ---------------------------------------------------------------------------

struct VoltageRow {
    Step step = 0;
    BusId bus = 0;
    double v = 0.0;
};

struct AgentRow {
    Step step = 0;
    AgentId agent = 0;
    double value = 0.0;
};

struct RunReport {
    std::vector<VoltageRow> voltages;
    std::vector<AgentRow> reputation;
    std::vector<AgentRow> wallets;
    std::vector<AgentRow> income;
    std::vector<ledger::Block> chain;
    ledger::WorldState final_state;
    grid::NetworkModel final_network;
    std::vector<std::string> warnings;
    bool unresolved_violation = false;
};

inline std::string num(double x) { return json(x).dump(); }

// Per-block wallet/reputation rows; shared by the live run and chain replay so
// the two produce byte-identical CSVs.
inline void append_state_rows(std::vector<AgentRow>& reputation, std::vector<AgentRow>& wallets,
                              const ledger::WorldState& state, Step step) {
    for (const auto& [id, acct] : state.accounts) {
        reputation.push_back({step, id, acct.reputation});
        wallets.push_back({step, id, acct.wallet});
    }
}

inline std::string agent_csv(const std::vector<AgentRow>& rows, const std::string& header) {
    std::string out = header + "\n";
    for (const auto& r : rows)
        out += std::to_string(r.step) + "," + std::to_string(r.agent) + "," + num(r.value) + "\n";
    return out;
}

inline std::string voltages_csv(const std::vector<VoltageRow>& rows) {
    std::string out = "step,bus,v_pu\n";
    for (const auto& r : rows)
        out += std::to_string(r.step) + "," + std::to_string(r.bus) + "," + num(r.v) + "\n";
    return out;
}

inline std::string contracts_csv(const ledger::WorldState& state) {
    std::string out = "cfp_id,initiator,winner,price,dv_target,dv_achieved,status\n";
    for (const auto& [id, c] : state.contracts) {
        std::string winner, price = "0";
        if (c.contract) {
            winner = std::to_string(c.contract->winner);
            price = num(c.contract->price);
        }
        std::string status = c.outcome.empty() ? ledger::to_string(c.state) : c.outcome;
        out += std::to_string(id) + "," + std::to_string(c.initiator) + "," + winner + "," +
               price + "," + num(c.dv_target) + "," + num(c.dv_achieved) + "," + status + "\n";
    }
    return out;
}

inline std::string chain_log(const std::vector<ledger::Block>& chain) {
    std::string out;
    for (const auto& b : chain) out += b.serialize() + "\n";
    return out;
}

inline void write_reports(const RunReport& report, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    auto put = [&](const std::string& name, const std::string& body) {
        std::ofstream f(fs::path(out_dir) / name, std::ios::binary);
        if (!f) fail("IoError", "cannot write " + name + " in " + out_dir);
        f << body;
    };
    put("voltages.csv", voltages_csv(report.voltages));
    put("contracts.csv", contracts_csv(report.final_state));
    put("reputation.csv", agent_csv(report.reputation, "step,agent,g"));
    put("wallets.csv", agent_csv(report.wallets, "step,agent,balance"));
    put("income.csv", agent_csv(report.income, "step,agent,eq13_revenue"));
    put("chain.log", chain_log(report.chain));
}

// ---------------------------------------------------------------------------
// Simulation runner
// ---------------------------------------------------------------------------

class Runner {
public:
    explicit Runner(ScenarioConfig cfg) : cfg_(std::move(cfg)), net_(cfg_.network) {
        n_nodes_ = cfg_.params.n_nodes > 0 ? cfg_.params.n_nodes
                                           : static_cast<int>(cfg_.zones.size());
        for (int k = 0; k < n_nodes_; ++k)
            nodes_.emplace_back(k, n_nodes_, cfg_.params.contract,
                                static_cast<size_t>(cfg_.params.b_m));
        std::vector<ZoneSpec> zones = cfg_.zones;
        std::sort(zones.begin(), zones.end(),
                  [](const ZoneSpec& a, const ZoneSpec& b) { return a.zone < b.zone; });
        for (const auto& z : zones) {
            const DgSettings* dg = nullptr;
            for (const auto& d : cfg_.dg_settings)
                if (d.zone == z.zone) dg = &d;
            if (!dg) fail("ValidationError", "zone " + std::to_string(z.zone) + " has no DG");
            agent::ZonalAgent a;
            a.id = z.zone;
            a.zone_buses = z.buses;
            a.zone_lines = z.lines;
            a.meter_buses = z.meter_buses;
            a.dg_bus = z.dg_bus;
            a.device_id = "dg" + std::to_string(z.zone);
            a.keys = crypto::KeyPair::from_seed("agent-" + std::to_string(z.zone) + "-" +
                                                std::to_string(cfg_.params.seed));
            a.pricing = {dg->pr_q, dg->alpha};
            a.policy = {dg->bid_discount, dg->subcontract_threshold};
            a.safety_margin = cfg_.params.safety_margin_pu;
            for (const auto& [nz, bus] : z.pzc) {
                BusId nz_dg = 0;
                for (const auto& zz : zones)
                    if (zz.zone == nz) nz_dg = zz.dg_bus;
                a.neighbors.push_back({nz, bus, nz_dg});
            }
            agents_.push_back(std::move(a));
            ctx_.push_back({});
        }
    }

    RunReport run() {
        // Genesis: every replica stages the same registrations; node 0 seals
        // block 0 and the rest adopt it.
        for (const auto& a : agents_)
            for (auto& n : nodes_)
                n.register_agent(a.id, a.keys, cfg_.params.contract.genesis_funding);
        commit_block(0);

        for (Step t = 1; t <= cfg_.params.steps; ++t) step(t);

        if (bus_.pending() > 0)
            report_.warnings.push_back("undelivered messages at end of run");
        report_.chain = nodes_[0].chain();
        report_.final_state = nodes_[0].state();
        report_.final_network = net_;
        return std::move(report_);
    }

private:
    struct SubState {
        agent::NeighborInfo downstream;
        agent::BidComputation standalone;
        double budget = 0.0;
        Step created_at = 0;
        std::optional<CfpId> nested_id;
        bool resolved = false;
    };

    struct AgentCtx {
        int nonce = 1;  // 0 was the registration
        std::set<CfpId> handled;       // bid decision made
        std::set<CfpId> acted;         // contract actuation attempted
        std::set<CfpId> self_handled;  // local fallback considered
        std::map<CfpId, agent::BidComputation> plans;
        std::optional<agent::BidComputation> last_local_plan;
        std::map<CfpId, SubState> subs;   // keyed by parent CFP
        std::set<CfpId> nested_created;   // own CFPs that are subcontract auctions
        Step create_cooldown = 0;
    };

    const ledger::LedgerNode& node_of(size_t agent_idx) const {
        return nodes_[agent_idx % n_nodes_];
    }

    double pr_p(Step t) const {
        size_t hour = static_cast<size_t>((t - 1) * cfg_.params.step_minutes / 60);
        return cfg_.price_series[hour % cfg_.price_series.size()];
    }

    bool fault_active(AgentId zone, Step t) const {
        for (const auto& e : cfg_.events)
            if (e.kind == EventKind::ActuationFault && e.zone == zone && e.step <= t &&
                t <= e.until_step)
                return true;
        return false;
    }

    void apply_events(Step t) {
        for (const auto& e : cfg_.events) {
            if (e.step != t) continue;
            switch (e.kind) {
                case EventKind::DgOutageStart: {
                    auto* d = zone_device(e.zone);
                    outage_restore_[e.zone] = {d->p_set, d->q_set, d->p_avail};
                    d->p_set = d->q_set = d->p_avail = 0.0;
                    break;
                }
                case EventKind::DgOutageEnd: {
                    auto it = outage_restore_.find(e.zone);
                    if (it == outage_restore_.end()) break;
                    auto* d = zone_device(e.zone);
                    d->p_set = it->second[0];
                    d->q_set = it->second[1];
                    d->p_avail = it->second[2];
                    outage_restore_.erase(it);
                    break;
                }
                case EventKind::IrradianceSet: {
                    auto* d = zone_device(e.zone);
                    d->p_avail = e.value;
                    d->p_set = std::min(d->p_max, e.value);  // MPPT tracking
                    break;
                }
                case EventKind::LoadSet: {
                    auto* b = net_.find_bus(e.bus);
                    b->load_p = e.p;
                    b->load_q = e.q;
                    break;
                }
                case EventKind::ActuationFault: break;  // window queried lazily
            }
        }
    }

    grid::DeviceRecord* zone_device(AgentId zone) {
        auto* d = net_.find_device("dg" + std::to_string(zone));
        if (!d) fail("ValidationError", "no device for zone " + std::to_string(zone));
        return d;
    }

    void stage(size_t agent_idx, ledger::Payload payload, Step t) {
        const auto& a = agents_[agent_idx];
        auto tx = ledger::make_tx(nodes_[0].suite(), a.keys, a.id, ctx_[agent_idx].nonce++, t,
                                  std::move(payload));
        for (int k = 0; k < n_nodes_; ++k)
            bus_.send(static_cast<int>(agent_idx), k, t + cfg_.params.latency_steps,
                      json{{"tx", tx.to_json()}});
    }

    void commit_block(Step t) {
        int proposer = static_cast<int>(t % n_nodes_);
        ledger::Block block = nodes_[proposer].seal_block(t);
        for (int k = 0; k < n_nodes_; ++k)
            if (k != proposer) nodes_[k].apply_block(block);
        const std::string digest = nodes_[0].state_digest();
        for (int k = 1; k < n_nodes_; ++k)
            if (nodes_[k].state_digest() != digest)
                fail("ReplicaDivergence",
                     "node " + std::to_string(k) + " diverged at step " + std::to_string(t));
        append_state_rows(report_.reputation, report_.wallets, nodes_[0].state(), t);
    }

    void step(Step t) {
        apply_events(t);
        auto op = grid::operating_point(net_);
        auto profile = grid::solve_voltage(net_, op, t);

        for (const auto& b : net_.buses) report_.voltages.push_back({t, b.id, profile.at(b.id)});
        track_violations(profile, t);

        const double dt_step = cfg_.params.step_minutes / 60.0;
        for (const auto& a : agents_) {
            const auto& dev = a.device(net_);
            report_.income.push_back(
                {t, a.id, agent::revenue_active(pr_p(t), dev.p_set, dt_step)});
        }

        // Telemetry first: meter readings reflect the pre-action state of
        // this step, same as the recorded profile.
        for (size_t i = 0; i < agents_.size(); ++i) {
            if (t == 1 && i == 0) {
                grid::VoltageProfile flat;
                for (const auto& b : net_.buses) flat.v[b.id] = net_.base_voltage;
                stage(i, ledger::SensitivityPublish{grid::build_sensitivity(net_, flat)}, t);
            }
            for (const auto& m : agents_[i].read_zone_state(net_, profile, t))
                stage(i, m, t);
        }

        for (size_t i = 0; i < agents_.size(); ++i) {
            actuate_contracts(i, t);
            resolve_subcontracts(i, t);
            respond_to_cfps(i, t);
            bool fell_back = self_mitigation_fallback(i, t);
            if (!fell_back) initiate_if_violated(i, profile, t);
        }

        for (const auto& m : bus_.drain_due(t)) {
            auto tx = ledger::TransactionEnvelope::from_json(m.body.at("tx"));
            nodes_[m.to].submit_transaction(tx);  // rejects are dropped, as on a real network
        }
        commit_block(t);
    }

    void track_violations(const grid::VoltageProfile& profile, Step t) {
        const Step cycle = cfg_.params.bid_window_steps + cfg_.params.contract.delta_t_steps;
        std::set<BusId> now;
        for (const auto& v : grid::detect_violations(net_, profile)) {
            now.insert(v.bus);
            auto [it, fresh] = violation_since_.try_emplace(v.bus, t);
            if (!fresh && t - it->second > 2 * cycle + 2 && !warned_.count(v.bus)) {
                warned_.insert(v.bus);
                report_.unresolved_violation = true;
                report_.warnings.push_back("unresolved violation at bus " +
                                           std::to_string(v.bus) + " since step " +
                                           std::to_string(it->second));
            }
        }
        for (auto it = violation_since_.begin(); it != violation_since_.end();)
            it = now.count(it->first) ? std::next(it) : violation_since_.erase(it);
    }

    void actuate_contracts(size_t i, Step t) {
        auto& a = agents_[i];
        auto& cx = ctx_[i];
        const auto& st = node_of(i).state();
        for (const auto& [id, c] : st.contracts) {
            if (c.state != ledger::CfpState::Assigned || !c.contract) continue;
            if (c.contract->winner != a.id || cx.acted.count(id)) continue;
            cx.acted.insert(id);  // one attempt; a fault is not retried
            agent::BidComputation plan;
            if (auto it = cx.plans.find(id); it != cx.plans.end()) {
                plan = it->second;
            } else if (st.sensitivity) {
                plan = a.evaluate_cfp(net_, c.contract->pzc_bus, c.contract->dv_target,
                                      *st.sensitivity, cfg_.params.dt_hours, pr_p(t));
                if (!plan.feasible) continue;
            } else {
                continue;
            }
            a.act_on_contract(net_, plan.dp, plan.dq, fault_active(a.id, t));
        }
    }

    std::optional<CfpId> find_nested(size_t i, const SubState& ss) const {
        const auto& st = node_of(i).state();
        for (const auto& [id, c] : st.contracts) {
            if (c.initiator != agents_[i].id) continue;
            if (c.created_step < ss.created_at - 1) continue;
            if (c.targets.size() != 1 || !c.targets.count(ss.downstream.zone)) continue;
            return id;
        }
        return std::nullopt;
    }

    void stage_bid(size_t i, CfpId cfp, double price, BusId responder_bus,
                   const agent::BidComputation& plan, Step t) {
        ctx_[i].plans[cfp] = plan;
        ctx_[i].handled.insert(cfp);
        stage(i, ledger::ReplyCFP{cfp, price, t, responder_bus}, t);
    }

    void resolve_subcontracts(size_t i, Step t) {
        auto& cx = ctx_[i];
        const auto& st = node_of(i).state();
        for (auto& [parent, ss] : cx.subs) {
            if (ss.resolved) continue;
            auto pit = st.contracts.find(parent);
            if (pit == st.contracts.end()) continue;
            const auto& pc = pit->second;
            if (pc.state != ledger::CfpState::Open) {
                ss.resolved = true;  // parent settled without us
                continue;
            }
            if (!ss.nested_id) {
                ss.nested_id = find_nested(i, ss);
                if (ss.nested_id) cx.nested_created.insert(*ss.nested_id);
            }
            if (ss.nested_id) {
                const auto& nc = st.contracts.at(*ss.nested_id);
                if (nc.state == ledger::CfpState::Assigned && nc.contract) {
                    // Downstream accepted: pass its price upstream and point
                    // the audit at the downstream actuator.
                    agent::BidComputation noop;
                    noop.feasible = true;
                    stage_bid(i, parent, nc.contract->price, ss.downstream.dg_bus, noop, t);
                    ss.resolved = true;
                    continue;
                }
                if (nc.state == ledger::CfpState::EnforcedFailure) {
                    // Downstream rejected on price (or silent): carry it alone.
                    stage_bid(i, parent, ss.standalone.price, agents_[i].dg_bus, ss.standalone,
                              t);
                    ss.resolved = true;
                    continue;
                }
            }
            if (t >= pc.expiry_step) {  // last call: bid standalone
                stage_bid(i, parent, ss.standalone.price, agents_[i].dg_bus, ss.standalone, t);
                ss.resolved = true;
            }
        }
    }

    void respond_to_cfps(size_t i, Step t) {
        auto& a = agents_[i];
        auto& cx = ctx_[i];
        const auto& st = node_of(i).state();
        if (!st.sensitivity) return;
        for (const auto& [id, c] : st.contracts) {
            if (c.state != ledger::CfpState::Open) continue;
            if (c.initiator == a.id || cx.handled.count(id)) continue;
            if (cx.subs.count(id)) continue;  // a subcontract auction owns this reply
            if (std::find(c.exclude.begin(), c.exclude.end(), a.id) != c.exclude.end()) continue;
            if (!c.targets.empty() && !c.targets.count(a.id)) continue;
            const auto target = c.target_for(a.id);
            auto bid = a.evaluate_cfp(net_, target.pzc_bus, target.dv_target, *st.sensitivity,
                                      cfg_.params.dt_hours, pr_p(t));
            if (!bid.feasible) {
                cx.handled.insert(id);
                continue;
            }
            const double cost = a.raw_cost(bid, pr_p(t), cfg_.params.dt_hours);
            if (a.policy.subcontract_threshold && cost > *a.policy.subcontract_threshold &&
                !cx.subs.count(id)) {
                if (try_subcontract(i, id, c, target, bid, cost, t)) continue;
            }
            stage_bid(i, id, bid.price, a.dg_bus, bid, t);
        }
    }

    bool try_subcontract(size_t i, CfpId parent, const ledger::CFPRecord& pc,
                         const ledger::PzcTarget& target, const agent::BidComputation& bid,
                         double cost, Step t) {
        auto& a = agents_[i];
        const auto& st = node_of(i).state();
        for (const auto& nb : a.neighbors) {
            if (nb.zone == pc.initiator || pc.targets.count(nb.zone)) continue;
            auto subt = a.subcontract_target(target, nb, *st.sensitivity);
            if (!subt) continue;
            Step nested_expiry = std::min<Step>(t + cfg_.params.bid_window_steps,
                                               pc.expiry_step - 1);
            if (nested_expiry < t) continue;  // no room before the parent closes
            ledger::CreateCFP req;
            req.pzc_bus = subt->pzc_bus;
            req.dv_target = subt->dv_target;
            req.expiry_step = nested_expiry;
            req.targets[nb.zone] = *subt;
            req.local_cost = cost;  // standing alone caps what downstream may charge
            stage(i, req, t);
            ctx_[i].subs[parent] = SubState{nb, bid, cost, t, std::nullopt, false};
            return true;
        }
        return false;
    }

    bool self_mitigation_fallback(size_t i, Step t) {
        auto& a = agents_[i];
        auto& cx = ctx_[i];
        const auto& st = node_of(i).state();
        for (const auto& [id, c] : st.contracts) {
            if (c.initiator != a.id || cx.self_handled.count(id)) continue;
            if (cx.nested_created.count(id)) continue;  // subcontract auctions settle upstream
            if (c.state != ledger::CfpState::EnforcedFailure) continue;
            if (c.outcome != "no_award" && c.outcome != "local_cheaper") continue;
            if (c.reissued_as) continue;
            cx.self_handled.insert(id);
            if (cx.last_local_plan && cx.last_local_plan->feasible) {
                a.act_on_contract(net_, cx.last_local_plan->dp, cx.last_local_plan->dq,
                                  fault_active(a.id, t));
                return true;
            }
        }
        return false;
    }

    void initiate_if_violated(size_t i, const grid::VoltageProfile& profile, Step t) {
        auto& a = agents_[i];
        auto& cx = ctx_[i];
        const auto& st = node_of(i).state();
        auto viol = a.worst_zone_violation(net_, profile);
        if (!viol) {
            cx.create_cooldown = 0;
            return;
        }
        if (!st.sensitivity) return;
        for (const auto& [id, c] : st.contracts) {
            if (cx.nested_created.count(id)) continue;
            if (c.initiator == a.id && (c.state == ledger::CfpState::Open ||
                                        c.state == ledger::CfpState::BiddingClosed ||
                                        c.state == ledger::CfpState::Assigned))
                return;  // a mitigation chain is already in flight
        }
        if (cx.create_cooldown > 0) {
            --cx.create_cooldown;
            return;
        }

        auto targets = a.compute_pzc_targets(*viol, *st.sensitivity);
        const double sign =
            (viol->direction == grid::ViolationDirection::Under) ? 1.0 : -1.0;
        const double dv_local = agent::quantize_dv(sign * (viol->deviation + a.safety_margin));
        agent::BidComputation local;
        if (dv_local != 0.0)
            local = a.evaluate_cfp(net_, viol->bus, dv_local, *st.sensitivity,
                                   cfg_.params.dt_hours, pr_p(t));
        cx.last_local_plan = local;

        if (targets.empty()) {
            if (local.feasible) {
                a.act_on_contract(net_, local.dp, local.dq, fault_active(a.id, t));
            } else {
                report_.unresolved_violation = true;
                report_.warnings.push_back("zone " + std::to_string(a.id) +
                                           " cannot mitigate bus " + std::to_string(viol->bus) +
                                           " at step " + std::to_string(t));
            }
            return;
        }

        ledger::CreateCFP req;
        req.pzc_bus = targets.begin()->second.pzc_bus;
        req.dv_target = targets.begin()->second.dv_target;
        req.expiry_step = t + cfg_.params.bid_window_steps;
        req.targets = targets;
        if (local.feasible)
            req.local_cost = a.raw_cost(local, pr_p(t), cfg_.params.dt_hours);
        stage(i, req, t);
        cx.create_cooldown = cfg_.params.bid_window_steps + 1;
    }

    ScenarioConfig cfg_;
    grid::NetworkModel net_;
    int n_nodes_ = 1;
    std::vector<ledger::LedgerNode> nodes_;
    std::vector<agent::ZonalAgent> agents_;
    std::vector<AgentCtx> ctx_;
    MessageBus bus_;
    RunReport report_;
    std::map<AgentId, std::array<double, 3>> outage_restore_;
    std::map<BusId, Step> violation_since_;
    std::set<BusId> warned_;
};

inline RunReport run_simulation(ScenarioConfig cfg) { return Runner(std::move(cfg)).run(); }

// Rebuilds the ledger-derived CSVs from a serialized chain. Matches the live
// run byte for byte when given the same chain.
struct ReplayReports {
    std::vector<AgentRow> reputation;
    std::vector<AgentRow> wallets;
    std::string contracts;
};

inline ReplayReports replay_reports(const std::vector<ledger::Block>& chain,
                                    const contract::Params& params) {
    ReplayReports out;
    ledger::WorldState last;
    ledger::replay_chain(chain, params,
                         [&](const ledger::WorldState& st, const ledger::Block& b) {
                             append_state_rows(out.reputation, out.wallets, st, b.timestamp);
                             last = st;
                         });
    out.contracts = contracts_csv(last);
    return out;
}

inline std::vector<ledger::Block> load_chain(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("ParseError", "cannot open " + path);
    std::vector<ledger::Block> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(ledger::Block::parse(line));
    }
    return out;
}

}  // namespace tes::harness
