// Acceptance gate: one line per criterion, "PASS:" or "FAIL:", nonzero exit
// if anything fails. Each criterion re-derives its expectations from
// independent arithmetic (closed-form dispatch costs, finite differences,
// chain replay) rather than from the code under test.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "tes/harness.hpp"

using namespace tes;
using harness::RunReport;
using harness::ScenarioConfig;

namespace {

const std::string kScenarioDir = TES_SCENARIO_DIR;

struct Result {
    std::string name;
    bool ok = true;
    double seconds = 0.0;
    std::vector<std::string> notes;
};

void require(Result& r, bool cond, const std::string& what) {
    if (!cond) {
        r.ok = false;
        r.notes.push_back(what);
    }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }
bool within_pct(double a, double b, double pct) {
    return std::abs(a - b) <= pct * std::max(std::abs(a), std::abs(b));
}

// Wholesale price active at step t, mirroring the runner's schedule.
double price_at(const ScenarioConfig& cfg, Step t) {
    size_t idx = static_cast<size_t>((t - 1) * cfg.params.step_minutes / 60) %
                 cfg.price_series.size();
    return cfg.price_series[idx];
}

const harness::DgSettings& settings_for(const ScenarioConfig& cfg, AgentId zone) {
    for (const auto& d : cfg.dg_settings)
        if (d.zone == zone) return d;
    fail("UnknownAgent", "no dg settings for zone " + std::to_string(zone));
}

BusId dg_bus_of(const ScenarioConfig& cfg, AgentId zone) {
    for (const auto& z : cfg.zones)
        if (z.zone == zone) return z.dg_bus;
    fail("UnknownAgent", "no zone " + std::to_string(zone));
}

// Independent minimum-cost dispatch: sweep active power over its whole range;
// for each p the reactive change is pinned by the target, so the search space
// is one-dimensional. Returns the discounted price for the given target.
double oracle_bid_price(const harness::DgSettings& d, double sp, double sq, double dv,
                        double pr_p, double dt) {
    const double p_ceiling = std::min(d.p_max, d.p_avail);
    double best = std::numeric_limits<double>::infinity();
    const double h = 1e-5;
    for (double p = 0.0; p <= p_ceiling + h / 2; p += h) {
        double pc = std::min(p, p_ceiling);
        double rem = dv - sp * (pc - d.p_set);
        double q = d.q_set;
        if (std::abs(sq) > 1e-12)
            q = d.q_set + rem / sq;
        else if (std::abs(rem) > 1e-9)
            continue;
        double circle = d.s_max * d.s_max - pc * pc;
        double q_lim = std::min(d.q_max, circle > 0 ? std::sqrt(circle) : 0.0);
        if (std::abs(q) > q_lim + 1e-9) continue;
        double cost = d.pr_q * std::abs(q - d.q_set) * dt +
                      d.alpha * pr_p * std::max(0.0, d.p_set - pc) * dt;
        best = std::min(best, cost);
    }
    return best * (1.0 - d.bid_discount);
}

// Violation episodes per bus recovered from the voltage trace.
std::vector<int> episode_lengths(const ScenarioConfig& cfg, const RunReport& report) {
    std::map<BusId, std::pair<double, double>> limits;
    for (const auto& b : cfg.network.buses) limits[b.id] = {b.v_min, b.v_max};
    std::map<BusId, std::map<Step, bool>> bad;
    for (const auto& r : report.voltages) {
        auto [lo, hi] = limits.at(r.bus);
        bad[r.bus][r.step] = r.v < lo || r.v > hi;
    }
    std::vector<int> lengths;
    for (const auto& [bus, series] : bad) {
        int run = 0;
        for (const auto& [step, is_bad] : series) {
            if (is_bad) {
                ++run;
            } else if (run > 0) {
                lengths.push_back(run);
                run = 0;
            }
        }
        if (run > 0) lengths.push_back(-run);  // unterminated: flag as negative
    }
    return lengths;
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

Result reputation_exact(const RunReport& uv, double run_seconds) {
    Result r{"reputation arithmetic on the undervoltage scenario"};
    r.seconds = run_seconds;
    const auto& acc = uv.final_state.accounts;
    require(r, near(acc.at(3).reputation, 0.966, 1e-12),
            "agent 3 reputation != 0.966 after failed enforcement");
    require(r, near(acc.at(1).reputation, 1.0033, 1e-12),
            "agent 1 reputation != 1.0033 after fulfilled contract");
    require(r, near(acc.at(2).reputation, 1.0, 1e-12), "initiator reputation changed");
    require(r, run_seconds < 1.0, "run exceeded 1 s");
    return r;
}

Result undervoltage_sequence(const RunReport& uv) {
    Result r{"undervoltage negotiation sequence and settlement"};
    auto t0 = std::chrono::steady_clock::now();
    const auto& cs = uv.final_state.contracts;
    require(r, cs.size() == 2, "expected exactly two negotiations");
    if (cs.size() != 2) return r;
    const auto& c1 = cs.at(1);
    const auto& c2 = cs.at(2);

    // announcement: two solicited responders with per-responder targets
    require(r, c1.initiator == 2, "first announcement not from agent 2");
    require(r, c1.targets.count(1) && near(c1.targets.at(1).dv_target, 0.0033, 1e-12),
            "agent 1 target != 0.0033");
    require(r, c1.targets.count(3) && near(c1.targets.at(3).dv_target, 0.0034, 1e-12),
            "agent 3 target != 0.0034");

    // bidding: both respond, the cheaper bid wins
    double bid1 = -1, bid3 = -1;
    for (const auto& b : c1.bids) (b.responder == 1 ? bid1 : bid3) = b.price;
    require(r, bid1 > 0 && bid3 > 0, "missing a bid on the first announcement");
    require(r, bid3 < bid1, "winning bid was not the cheaper one");
    require(r, c1.contract && c1.contract->winner == 3, "first award not to agent 3");

    // enforcement failure under the actuation fault, penalty, reissue
    require(r, c1.outcome == "failed", "first contract did not fail enforcement");
    require(r, near(c1.dv_achieved, 0.0, 1e-9), "faulted winner still moved the voltage");
    require(r, c1.reissued_as && *c1.reissued_as == 2, "failed contract not reissued");
    require(r, std::find(c2.exclude.begin(), c2.exclude.end(), 3) != c2.exclude.end(),
            "failed winner not excluded from the reissue");

    // reissue fulfilled by agent 1, payment transferred
    require(r, c2.contract && c2.contract->winner == 1, "reissue not won by agent 1");
    require(r, c2.outcome == "fulfilled", "reissue not fulfilled");
    double price = c2.contract ? c2.contract->price : 0.0;
    const auto& acc = uv.final_state.accounts;
    require(r, near(acc.at(1).wallet, 10000.0 + price, 1e-9), "winner not paid");
    require(r, near(acc.at(2).wallet, 10000.0 - price, 1e-9), "initiator not debited");
    require(r, near(acc.at(3).wallet, 10000.0, 1e-9), "failed winner was paid");

    // the CSV artifact carries the same ordered story
    std::string csv = harness::contracts_csv(uv.final_state);
    auto pos1 = csv.find(",failed");
    auto pos2 = csv.find(",fulfilled");
    require(r, pos1 != std::string::npos && pos2 != std::string::npos && pos1 < pos2,
            "contracts.csv does not list failure before fulfillment");
    r.seconds = seconds_since(t0);
    require(r, r.seconds < 5.0, "checks exceeded 5 s");
    return r;
}

Result overvoltage_subcontracting() {
    Result r{"overvoltage subcontracting and local-vs-market decision"};
    auto t0 = std::chrono::steady_clock::now();
    auto cfg = harness::load_scenario(kScenarioDir + "/ieee37_overvoltage.json");
    auto report = harness::run_simulation(cfg);
    const auto& cs = report.final_state.contracts;
    require(r, cs.count(1) && cs.count(2), "expected a parent and a nested negotiation");
    if (!cs.count(1) || !cs.count(2)) return r;
    const auto& parent = cs.at(1);
    const auto& nested = cs.at(2);

    require(r, parent.initiator == 2 && nested.initiator == 3,
            "unexpected initiators for parent/nested announcements");
    require(r, near(nested.dv_target, -0.0106, 1e-12), "nested target != -0.0106");
    require(r, nested.outcome == "local_cheaper",
            "downstream bid was not rejected against the local cost");
    require(r, nested.local_cost.has_value(), "nested announcement carries no local cost");
    require(r, !nested.bids.empty(), "no downstream bid was placed");
    if (nested.local_cost)
        for (const auto& b : nested.bids)
            require(r, b.price >= *nested.local_cost - 1e-9,
                    "a rejected downstream bid was actually cheaper than local");
    require(r, parent.contract && parent.contract->winner == 3 && parent.outcome == "fulfilled",
            "parent contract not fulfilled by agent 3");

    // every placed bid within 1% of the independent dispatch oracle
    require(r, report.final_state.sensitivity.has_value(), "no published sensitivity");
    if (report.final_state.sensitivity) {
        const auto& sens = *report.final_state.sensitivity;
        for (const auto* cfp : {&parent, &nested}) {
            for (const auto& b : cfp->bids) {
                auto target = cfp->target_for(b.responder);
                const auto& d = settings_for(cfg, b.responder);
                double sp = sens.sp(target.pzc_bus, b.responder_bus);
                double sq = sens.sq(target.pzc_bus, b.responder_bus);
                double expect = oracle_bid_price(d, sp, sq, target.dv_target,
                                                 price_at(cfg, b.bid_step), cfg.params.dt_hours);
                require(r, within_pct(b.price, expect, 0.01),
                        "bid by agent " + std::to_string(b.responder) + " (" +
                            std::to_string(b.price) + ") deviates >1% from oracle " +
                            std::to_string(expect));
                require(r, b.responder_bus == dg_bus_of(cfg, b.responder),
                        "bid names a bus other than the responder's actuator");
            }
        }
    }
    r.seconds = seconds_since(t0);
    return r;
}

Result sensitivity_fd() {
    Result r{"sensitivity matrix vs central finite differences"};
    auto t0 = std::chrono::steady_clock::now();
    const double h = 0.0625, tol = 1e-9;

    auto check_net = [&](const grid::NetworkModel& net, const std::string& tag) {
        grid::VoltageProfile flat;
        for (const auto& b : net.buses) flat.v[b.id] = 1.0;
        auto sens = grid::build_sensitivity(net, flat);
        grid::OperatingPoint base;
        for (const auto& b : net.buses) {
            base.inj_p[b.id] = 0.0;
            base.inj_q[b.id] = 0.0;
        }
        for (BusId j : sens.bus_ids) {
            for (int channel = 0; channel < 2; ++channel) {
                auto hi = base, lo = base;
                (channel == 0 ? hi.inj_p : hi.inj_q)[j] += h;
                (channel == 0 ? lo.inj_p : lo.inj_q)[j] -= h;
                auto v_hi = grid::solve_voltage(net, hi);
                auto v_lo = grid::solve_voltage(net, lo);
                for (BusId i : sens.bus_ids) {
                    double fd = (v_hi.at(i) - v_lo.at(i)) / (2 * h);
                    double model = channel == 0 ? sens.sp(i, j) : sens.sq(i, j);
                    if (std::abs(fd - model) > tol) {
                        require(r, false,
                                tag + ": entry (" + std::to_string(i) + "," + std::to_string(j) +
                                    ") off by " + std::to_string(std::abs(fd - model)));
                        return;
                    }
                }
            }
        }
    };

    auto cfg = harness::load_scenario(kScenarioDir + "/ieee37_undervoltage.json");
    require(r, cfg.network.buses.size() == 37, "bundled feeder is not 37 buses");
    check_net(cfg.network, "37-bus feeder");

    std::mt19937 rng(7);
    for (int trial = 0; trial < 100 && r.ok; ++trial) {
        std::uniform_int_distribution<int> nd(2, 40);
        std::uniform_real_distribution<double> zd(0.001, 0.05);
        int n = nd(rng);
        grid::NetworkModel net;
        net.root_bus_id = 1;
        for (int b = 1; b <= n; ++b) {
            grid::BusRecord bus;
            bus.id = b;
            net.buses.push_back(bus);
        }
        for (int b = 2; b <= n; ++b) {
            std::uniform_int_distribution<int> pd(1, b - 1);
            net.lines.push_back({b - 1, pd(rng), b, zd(rng), zd(rng), 10.0});
        }
        check_net(net, "random tree " + std::to_string(trial));
    }
    r.seconds = seconds_since(t0);
    require(r, r.seconds < 10.0, "finite-difference sweep exceeded 10 s");
    return r;
}

Result chain_fuzz(const RunReport& uv) {
    Result r{"single-byte chain mutations are always detected"};
    auto t0 = std::chrono::steady_clock::now();
    require(r, uv.chain.size() >= 100, "chain shorter than 100 blocks");

    std::vector<std::string> lines;
    for (const auto& b : uv.chain) lines.push_back(b.serialize());

    std::mt19937 rng(11);
    std::uniform_int_distribution<size_t> block_d(0, lines.size() - 1);
    std::uniform_int_distribution<int> byte_d(0x20, 0x7e);
    int undetected = 0;
    for (int it = 0; it < 1000; ++it) {
        size_t k = block_d(rng);
        std::string mutated = lines[k];
        std::uniform_int_distribution<size_t> pos_d(0, mutated.size() - 1);
        size_t pos = pos_d(rng);
        char c;
        do {
            c = static_cast<char>(byte_d(rng));
        } while (c == mutated[pos]);
        mutated[pos] = c;

        bool detected = false;
        try {
            std::vector<ledger::Block> chain;
            for (size_t i = 0; i < lines.size(); ++i)
                chain.push_back(ledger::Block::parse(i == k ? mutated : lines[i]));
            auto bad = ledger::verify_chain(chain);
            detected = bad.has_value() && *bad <= k;
        } catch (const Error&) {
            detected = true;  // refused to even parse
        }
        if (!detected) ++undetected;
    }
    require(r, undetected == 0, std::to_string(undetected) + " of 1000 mutations slipped through");
    r.seconds = seconds_since(t0);
    require(r, r.seconds < 10.0, "fuzz sweep exceeded 10 s");
    return r;
}

Result replica_replay(const ScenarioConfig& cfg, const RunReport& uv) {
    Result r{"replicated commit and ledger replay"};
    auto t0 = std::chrono::steady_clock::now();
    // Four replicas ran in lockstep; a digest mismatch would have aborted the
    // run, so completion plus a verifiable chain is the consensus evidence.
    require(r, cfg.params.n_nodes == 4, "scenario does not run four replicas");
    require(r, ledger::verify_chain(uv.chain) == std::nullopt, "chain does not verify");

    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "tes_acceptance_replay";
    fs::remove_all(dir);
    harness::write_reports(uv, dir.string());
    auto loaded = harness::load_chain((dir / "chain.log").string());
    require(r, harness::chain_log(loaded) == harness::chain_log(uv.chain),
            "chain.log did not round-trip byte-exactly");

    auto rr = harness::replay_reports(loaded, cfg.params.contract);
    require(r,
            harness::agent_csv(rr.reputation, "step,agent,g") ==
                harness::agent_csv(uv.reputation, "step,agent,g"),
            "replayed reputation.csv differs from the live run");
    require(r,
            harness::agent_csv(rr.wallets, "step,agent,balance") ==
                harness::agent_csv(uv.wallets, "step,agent,balance"),
            "replayed wallets.csv differs from the live run");
    require(r, rr.contracts == harness::contracts_csv(uv.final_state),
            "replayed contracts.csv differs from the live run");
    r.seconds = seconds_since(t0);
    require(r, r.seconds < 30.0, "replay exceeded 30 s");
    return r;
}

Result voltage_safety(const ScenarioConfig& uv_cfg, const RunReport& uv) {
    Result r{"violations cleared within two contract cycles"};
    auto t0 = std::chrono::steady_clock::now();

    auto check = [&](const ScenarioConfig& cfg, const RunReport& rep, const std::string& tag) {
        require(r, !rep.unresolved_violation, tag + ": run flagged an unresolved violation");
        int cycle = static_cast<int>(cfg.params.bid_window_steps + cfg.params.contract.delta_t_steps);
        for (int len : episode_lengths(cfg, rep)) {
            require(r, len > 0, tag + ": a violation persisted to the end of the run");
            require(r, len <= 2 * cycle,
                    tag + ": violation lasted " + std::to_string(len) + " steps (> " +
                        std::to_string(2 * cycle) + ")");
        }
    };

    check(uv_cfg, uv, "undervoltage");
    auto ov_cfg = harness::load_scenario(kScenarioDir + "/ieee37_overvoltage.json");
    check(ov_cfg, harness::run_simulation(ov_cfg), "overvoltage");

    auto mg_cfg = harness::load_scenario(kScenarioDir + "/microgrid.json");
    auto mg = harness::run_simulation(mg_cfg);
    check(mg_cfg, mg, "microgrid");

    // the contracted boundary-bus drop: ~0.02 p.u., tolerance 20%
    require(r, mg.final_state.contracts.count(1) == 1, "microgrid placed no contract");
    if (mg.final_state.contracts.count(1)) {
        const auto& c = mg.final_state.contracts.at(1);
        require(r, c.outcome == "fulfilled", "microgrid contract not fulfilled");
        require(r, c.dv_achieved <= -0.016 && c.dv_achieved >= -0.024,
                "achieved boundary drop " + std::to_string(c.dv_achieved) +
                    " outside -0.02 +/- 20%");
        std::map<Step, double> pzc_v;
        for (const auto& row : mg.voltages)
            if (row.bus == c.pzc_bus) pzc_v[row.step] = row.v;
        double biggest_drop = 0.0;
        for (auto it = std::next(pzc_v.begin()); it != pzc_v.end(); ++it)
            biggest_drop = std::min(biggest_drop, it->second - std::prev(it)->second);
        require(r, biggest_drop <= -0.016 && biggest_drop >= -0.024,
                "observed boundary drop " + std::to_string(biggest_drop) +
                    " outside -0.02 +/- 20%");
    }
    r.seconds = seconds_since(t0);
    return r;
}

Result lifecycle_model_check() {
    Result r{"negotiation lifecycle model check"};
    auto t0 = std::chrono::steady_clock::now();
    contract::Params params;

    auto fresh = [] {
        ledger::WorldState st;
        for (AgentId a : {1, 2, 3})
            contract::init_account(st, a, "pk" + std::to_string(a), 100.0);
        grid::NetworkModel net;
        net.root_bus_id = 1;
        for (BusId b : {1, 2, 3}) {
            grid::BusRecord bus;
            bus.id = b;
            net.buses.push_back(bus);
        }
        net.lines.push_back({1, 1, 2, 0.1, 0.1, 10.0});
        net.lines.push_back({2, 2, 3, 0.1, 0.1, 10.0});
        grid::VoltageProfile flat;
        for (BusId b : {1, 2, 3}) flat.v[b] = 1.0;
        st.sensitivity = grid::build_sensitivity(net, flat);
        return st;
    };

    // Every callable operation at every reachable state; illegal calls must
    // throw and leave the state byte-identical; state changes must follow the
    // lifecycle graph.
    using Op = std::function<void(ledger::WorldState&)>;
    std::vector<Op> ops = {
        [&](ledger::WorldState& st) {
            // one announcement per exploration branch keeps the space finite
            if (!st.contracts.empty()) fail("ModelGuard", "already announced");
            ledger::CreateCFP req;
            req.pzc_bus = 2;
            req.dv_target = 0.004;
            req.expiry_step = 2;
            req.targets[2] = {2, 0.004};
            req.targets[3] = {2, 0.005};
            contract::create_cfp(st, 1, req, 0);
        },
        [&](ledger::WorldState& st) {
            if (st.contracts.count(1))
                for (const auto& b : st.contracts.at(1).bids)
                    if (b.responder == 2) fail("ModelGuard", "agent 2 already bid");
            contract::reply_cfp(st, {1, 2, 10.0, 1, 2});
        },
        [&](ledger::WorldState& st) {
            if (st.contracts.count(1))
                for (const auto& b : st.contracts.at(1).bids)
                    if (b.responder == 3) fail("ModelGuard", "agent 3 already bid");
            contract::reply_cfp(st, {1, 3, 12.0, 1, 3});
        },
        [&](ledger::WorldState& st) {
            st.latest_measurements[2] = ledger::MeterReading{2, 1.0, 0.0, 0.05, 9};
            st.latest_measurements[3] = ledger::MeterReading{3, 1.0, 0.0, 0.05, 9};
        },
        [&](ledger::WorldState& st) {
            st.latest_measurements[2] = ledger::MeterReading{2, 1.0, 0.0, 0.0, 9};
            st.latest_measurements[3] = ledger::MeterReading{3, 1.0, 0.0, 0.0, 9};
        },
        [&](ledger::WorldState& st) { contract::assign_cfp(st, 1, 1, params); },   // early
        [&](ledger::WorldState& st) { contract::assign_cfp(st, 1, 3, params); },   // due
        [&](ledger::WorldState& st) { contract::enforce_cfp(st, 1, 5, params); },  // early
        [&](ledger::WorldState& st) { contract::enforce_cfp(st, 1, 20, params); },  // due
    };

    std::set<std::string> visited;
    std::vector<ledger::WorldState> frontier{fresh()};
    visited.insert(ledger::to_json(fresh()).dump());
    long transitions = 0, rejected = 0;

    while (!frontier.empty() && r.ok) {
        auto batch = std::move(frontier);
        frontier.clear();
        for (const auto& st : batch) {
            for (const auto& op : ops) {
                ledger::WorldState next = st;
                std::string before = ledger::to_json(next).dump();
                std::map<CfpId, ledger::CfpState> states_before;
                for (const auto& [id, c] : next.contracts) states_before[id] = c.state;
                bool threw = false;
                try {
                    op(next);
                } catch (const Error&) {
                    threw = true;
                }
                std::string after = ledger::to_json(next).dump();
                if (threw) {
                    ++rejected;
                    require(r, after == before, "a rejected operation mutated the state");
                    continue;
                }
                ++transitions;
                for (const auto& [id, c] : next.contracts) {
                    auto it = states_before.find(id);
                    if (it == states_before.end()) {
                        require(r, c.state == ledger::CfpState::Open,
                                "a new negotiation did not start Open");
                    } else {
                        // assignment closes bidding and awards in one atomic
                        // call, so Open may legally land on Assigned or
                        // EnforcedFailure via BiddingClosed — but never jump
                        // straight to EnforcedSuccess
                        bool composite = it->second == ledger::CfpState::Open &&
                                         (c.state == ledger::CfpState::Assigned ||
                                          c.state == ledger::CfpState::EnforcedFailure);
                        require(r,
                                c.state == it->second ||
                                    contract::legal_transition(it->second, c.state) || composite,
                                "illegal transition " + ledger::to_string(it->second) + " -> " +
                                    ledger::to_string(c.state));
                    }
                }
                if (visited.insert(after).second) frontier.push_back(std::move(next));
                if (visited.size() > 20000) {
                    require(r, false, "state space unexpectedly unbounded");
                    break;
                }
            }
            if (!r.ok) break;
        }
    }
    require(r, visited.size() >= 20, "model check explored suspiciously few states");
    require(r, rejected > 0, "no illegal interleaving was ever attempted");
    r.notes.push_back(std::to_string(visited.size()) + " states, " +
                      std::to_string(transitions) + " transitions, " + std::to_string(rejected) +
                      " rejected calls");
    r.seconds = seconds_since(t0);
    require(r, r.seconds < 5.0, "model check exceeded 5 s");
    return r;
}

}  // namespace

int main() {
    std::vector<Result> results;
    auto run_criterion = [&](auto&& fn) {
        try {
            results.push_back(fn());
        } catch (const std::exception& e) {
            Result r{"(criterion aborted)"};
            r.ok = false;
            r.notes.push_back(e.what());
            results.push_back(r);
        }
    };

    ScenarioConfig uv_cfg;
    RunReport uv;
    double uv_seconds = 0.0;
    try {
        uv_cfg = harness::load_scenario(kScenarioDir + "/ieee37_undervoltage.json");
        auto t0 = std::chrono::steady_clock::now();
        uv = harness::run_simulation(uv_cfg);
        uv_seconds = seconds_since(t0);
    } catch (const std::exception& e) {
        std::printf("FAIL: undervoltage scenario did not run (%s)\n", e.what());
        return 1;
    }

    run_criterion([&] { return reputation_exact(uv, uv_seconds); });
    run_criterion([&] { return undervoltage_sequence(uv); });
    run_criterion([&] { return overvoltage_subcontracting(); });
    run_criterion([&] { return sensitivity_fd(); });
    run_criterion([&] { return chain_fuzz(uv); });
    run_criterion([&] { return replica_replay(uv_cfg, uv); });
    run_criterion([&] { return voltage_safety(uv_cfg, uv); });
    run_criterion([&] { return lifecycle_model_check(); });

    int failures = 0;
    for (const auto& r : results) {
        std::string detail;
        for (const auto& n : r.notes) detail += (detail.empty() ? "" : "; ") + n;
        if (r.ok) {
            std::printf("PASS: %s (%.2fs)%s%s%s\n", r.name.c_str(), r.seconds,
                        detail.empty() ? "" : " [", detail.c_str(), detail.empty() ? "" : "]");
        } else {
            ++failures;
            std::printf("FAIL: %s (%.2fs) — %s\n", r.name.c_str(), r.seconds, detail.c_str());
        }
    }
    return failures == 0 ? 0 : 1;
}
