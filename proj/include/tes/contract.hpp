#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "tes/common.hpp"
#include "tes/state.hpp"

namespace tes::contract {

using ledger::BidRecord;
using ledger::CFPRecord;
using ledger::CfpState;
using ledger::CreateCFP;
using ledger::Payload;
using ledger::PzcTarget;
using ledger::ReplyCFP;
using ledger::ServiceContract;
using ledger::WorldState;

enum class BidWeighting { Divide, Multiply };

inline std::string to_string(BidWeighting w) {
    return w == BidWeighting::Divide ? "divide" : "multiply";
}

inline BidWeighting bid_weighting_from(const std::string& s) {
    if (s == "divide") return BidWeighting::Divide;
    if (s == "multiply") return BidWeighting::Multiply;
    fail("BadWeighting", s);
}

struct Params {
    double gamma_success = 1.0;
    double gamma_fail = -10.0;
    double tol_abs = 0.0005;
    BidWeighting weighting = BidWeighting::Divide;
    double g_floor = 0.1;
    double genesis_funding = 10000.0;
    Step delta_t_steps = 12;  // enforcement window
};

// Reputation update: g_now = g_prev + gamma * |dV|.
inline double update_reputation(double g_prev, double gamma, double dv_magnitude) {
    if (dv_magnitude < 0) fail("NegativeDeviation", "dv magnitude must be >= 0");
    return g_prev + gamma * dv_magnitude;
}

inline double effective_price(double price, double reputation, const Params& p) {
    if (p.weighting == BidWeighting::Multiply) return price * reputation;
    return price / std::max(reputation, p.g_floor);
}

// Legal CFP lifecycle transitions. Assignment closes bidding first, so a
// no-award CFP still passes through BiddingClosed.
inline bool legal_transition(CfpState from, CfpState to) {
    switch (from) {
        case CfpState::Open: return to == CfpState::BiddingClosed;
        case CfpState::BiddingClosed:
            return to == CfpState::Assigned || to == CfpState::EnforcedFailure;
        case CfpState::Assigned:
            return to == CfpState::EnforcedSuccess || to == CfpState::EnforcedFailure;
        default: return false;
    }
}

inline void transition(CFPRecord& cfp, CfpState to) {
    if (!legal_transition(cfp.state, to))
        fail("IllegalTransition", ledger::to_string(cfp.state) + " -> " + ledger::to_string(to) +
                                      " on CFP " + std::to_string(cfp.cfp_id));
    cfp.state = to;
}

// ---------------------------------------------------------------------------
// Negotiation lifecycle, as pure state transitions over WorldState
// ---------------------------------------------------------------------------

inline void init_account(WorldState& state, AgentId zone, const std::string& public_key,
                         double funding) {
    if (state.accounts.count(zone)) fail("ZoneTaken", "zone " + std::to_string(zone));
    state.accounts[zone] = ledger::Account{public_key, funding, 1.0};
}

inline CfpId create_cfp(WorldState& state, AgentId initiator, const CreateCFP& req,
                        Step current_step) {
    if (!state.accounts.count(initiator)) fail("UnknownAgent", std::to_string(initiator));
    if (req.expiry_step <= current_step) fail("PastExpiry", "expiry must be in the future");
    if (req.dv_target == 0.0) fail("ZeroTarget", "dv_target must be nonzero");
    for (const auto& [agent, t] : req.targets)
        if (t.dv_target == 0.0) fail("ZeroTarget", "target for agent " + std::to_string(agent));
    CFPRecord cfp;
    cfp.cfp_id = state.next_cfp_id++;
    cfp.initiator = initiator;
    cfp.pzc_bus = req.pzc_bus;
    cfp.dv_target = req.dv_target;
    cfp.created_step = current_step;
    cfp.expiry_step = req.expiry_step;
    cfp.targets = req.targets;
    cfp.local_cost = req.local_cost;
    cfp.exclude = req.exclude;
    state.contracts[cfp.cfp_id] = cfp;
    return cfp.cfp_id;
}

inline void reply_cfp(WorldState& state, const BidRecord& bid) {
    auto it = state.contracts.find(bid.cfp_id);
    if (it == state.contracts.end()) fail("UnknownCFP", std::to_string(bid.cfp_id));
    CFPRecord& cfp = it->second;
    if (cfp.state != CfpState::Open) fail("Expired", "CFP no longer open");
    if (bid.bid_step > cfp.expiry_step) fail("Expired", "bid after expiry");
    if (bid.price < 0) fail("InvalidPayload", "negative bid price");
    if (bid.responder == cfp.initiator) fail("InvalidPayload", "initiator cannot bid");
    if (std::find(cfp.exclude.begin(), cfp.exclude.end(), bid.responder) != cfp.exclude.end())
        fail("InvalidPayload", "responder excluded from CFP");
    if (!cfp.targets.empty() && !cfp.targets.count(bid.responder))
        fail("InvalidPayload", "responder not solicited by CFP");
    if (!state.accounts.count(bid.responder)) fail("UnknownAgent", std::to_string(bid.responder));
    if (bid.price > state.accounts.at(cfp.initiator).wallet)
        fail("Unaffordable", "bid exceeds initiator balance");
    cfp.bids.push_back(bid);
}

// Auto-executed once the bid window expires. Closes bidding, maps bids to
// effective prices, awards to the argmin (ties to the lowest agent id), or
// terminates without award when no bid survives or the initiator's local
// mitigation is cheaper.
inline std::optional<ServiceContract> assign_cfp(WorldState& state, CfpId cfp_id,
                                                 Step current_step, const Params& params) {
    auto it = state.contracts.find(cfp_id);
    if (it == state.contracts.end()) fail("UnknownCFP", std::to_string(cfp_id));
    CFPRecord& cfp = it->second;
    if (cfp.state != CfpState::Open) fail("AlreadyAssigned", std::to_string(cfp_id));
    if (current_step < cfp.expiry_step) fail("NotExpired", std::to_string(cfp_id));

    transition(cfp, CfpState::BiddingClosed);

    const double balance = state.accounts.at(cfp.initiator).wallet;
    const BidRecord* best = nullptr;
    double best_eff = 0.0;
    for (const auto& bid : cfp.bids) {
        if (bid.price > balance) continue;  // affordability re-check at assignment
        double eff = effective_price(bid.price, state.accounts.at(bid.responder).reputation,
                                     params);
        if (!best || eff < best_eff - 1e-15 ||
            (std::abs(eff - best_eff) <= 1e-15 && bid.responder < best->responder)) {
            best = &bid;
            best_eff = eff;
        }
    }
    if (!best) {
        cfp.outcome = "no_award";
        transition(cfp, CfpState::EnforcedFailure);
        return std::nullopt;
    }
    if (cfp.local_cost && best_eff >= *cfp.local_cost) {
        cfp.outcome = "local_cheaper";
        transition(cfp, CfpState::EnforcedFailure);
        return std::nullopt;
    }

    ServiceContract sc;
    sc.cfp_id = cfp_id;
    sc.winner = best->responder;
    sc.price = best->price;
    PzcTarget t = cfp.target_for(best->responder);
    sc.pzc_bus = t.pzc_bus;
    sc.dv_target = t.dv_target;
    sc.assigned_step = current_step;
    sc.enforce_deadline_step = current_step + params.delta_t_steps;
    if (auto m = state.latest_measurements.find(best->responder_bus);
        m != state.latest_measurements.end()) {
        sc.baseline_p = m->second.p;
        sc.baseline_q = m->second.q;
    }
    for (const auto& bid : cfp.bids) sc.decision[bid.responder] = 0;
    sc.decision[best->responder] = 1;
    cfp.contract = sc;
    transition(cfp, CfpState::Assigned);
    return sc;
}

// Audits the winner's on-chain P/Q deltas over the enforcement window against
// the contracted PZC voltage change. Pays and raises reputation on success;
// penalizes and reissues the remaining deviation on failure.
inline bool enforce_cfp(WorldState& state, CfpId cfp_id, Step current_step, const Params& params) {
    auto it = state.contracts.find(cfp_id);
    if (it == state.contracts.end()) fail("UnknownCFP", std::to_string(cfp_id));
    CFPRecord& cfp = it->second;
    if (cfp.state != CfpState::Assigned) fail("AlreadyEnforced", std::to_string(cfp_id));
    const ServiceContract& sc = *cfp.contract;
    if (current_step < sc.enforce_deadline_step) fail("NotDue", std::to_string(cfp_id));
    if (!state.sensitivity) fail("NoSensitivity", "sensitivity matrix not published");

    BusId winner_bus = 0;
    for (const auto& bid : cfp.bids)
        if (bid.responder == sc.winner) winner_bus = bid.responder_bus;
    double dp = 0.0, dq = 0.0;
    if (auto m = state.latest_measurements.find(winner_bus);
        m != state.latest_measurements.end()) {
        dp = m->second.p - sc.baseline_p;
        dq = m->second.q - sc.baseline_q;
    }
    const auto& sens = *state.sensitivity;
    double achieved = sens.sp(sc.pzc_bus, winner_bus) * dp + sens.sq(sc.pzc_bus, winner_bus) * dq;
    cfp.dv_achieved = achieved;

    bool success;
    if (sc.dv_target > 0)
        success = achieved >= sc.dv_target - params.tol_abs;
    else
        success = achieved <= sc.dv_target + params.tol_abs;

    auto& winner = state.accounts.at(sc.winner);
    if (success) {
        state.accounts.at(cfp.initiator).wallet -= sc.price;
        winner.wallet += sc.price;
        winner.reputation =
            update_reputation(winner.reputation, params.gamma_success, std::abs(sc.dv_target));
        cfp.outcome = "fulfilled";
        transition(cfp, CfpState::EnforcedSuccess);
        return true;
    }

    winner.reputation =
        update_reputation(winner.reputation, params.gamma_fail, std::abs(sc.dv_target));
    cfp.outcome = "failed";
    transition(cfp, CfpState::EnforcedFailure);

    // Recommence the announcement with the remaining deviation, excluding the
    // failed winner. A CFP with no remaining candidates terminates here.
    double remaining = sc.dv_target - achieved;
    if (std::abs(remaining) > params.tol_abs && !cfp.targets.empty()) {
        double scale = remaining / sc.dv_target;
        CreateCFP req;
        req.pzc_bus = cfp.pzc_bus;
        req.dv_target = cfp.dv_target * scale;
        req.expiry_step = current_step + cfp.window();
        req.local_cost = cfp.local_cost;
        req.exclude = cfp.exclude;
        req.exclude.push_back(sc.winner);
        for (const auto& [agent, t] : cfp.targets) {
            if (agent == sc.winner) continue;
            if (std::find(req.exclude.begin(), req.exclude.end(), agent) != req.exclude.end())
                continue;
            req.targets[agent] = PzcTarget{t.pzc_bus, t.dv_target * scale};
        }
        if (!req.targets.empty()) {
            CfpId fresh = create_cfp(state, cfp.initiator, req, current_step);
            state.contracts.at(cfp_id).reissued_as = fresh;
        }
    }
    return false;
}

// Runs the auto-executed stages that are due at `step`.
inline void tick(WorldState& state, Step step, const Params& params) {
    std::vector<CfpId> ids;
    for (const auto& [id, _] : state.contracts) ids.push_back(id);
    for (CfpId id : ids) {
        const CFPRecord& cfp = state.contracts.at(id);
        if (cfp.state == CfpState::Open && step >= cfp.expiry_step)
            assign_cfp(state, id, step, params);
    }
    for (CfpId id : ids) {
        const CFPRecord& cfp = state.contracts.at(id);
        if (cfp.state == CfpState::Assigned && step >= cfp.contract->enforce_deadline_step)
            enforce_cfp(state, id, step, params);
    }
}

// ---------------------------------------------------------------------------
// Transaction validation and execution (called from block processing)
// ---------------------------------------------------------------------------

struct TxContext {
    int block_index = 0;  // index of the block the tx would land in
    Step tip_step = 0;    // timestamp of the committed chain tip
};

// Returns a rejection reason, or nullopt when the payload is acceptable
// against the given state.
inline std::optional<std::string> validate_payload(const WorldState& state, AgentId agent,
                                                   const Payload& payload, const TxContext& ctx) {
    if (const auto* init = std::get_if<ledger::AccountInit>(&payload)) {
        if (ctx.block_index != 0) return "InvalidPayload: registration only at genesis";
        if (init->zone != agent) return "InvalidPayload: zone must match agent id";
        if (state.accounts.count(init->zone)) return "DuplicateAgent";
        return std::nullopt;
    }
    if (!state.accounts.count(agent)) return "UnknownAgent";
    if (const auto* create = std::get_if<CreateCFP>(&payload)) {
        if (create->expiry_step <= ctx.tip_step) return "PastExpiry";
        if (create->dv_target == 0.0) return "ZeroTarget";
        for (const auto& [_, t] : create->targets)
            if (t.dv_target == 0.0) return "ZeroTarget";
        return std::nullopt;
    }
    if (const auto* reply = std::get_if<ReplyCFP>(&payload)) {
        auto it = state.contracts.find(reply->cfp_id);
        if (it == state.contracts.end()) return "UnknownCFP";
        const CFPRecord& cfp = it->second;
        if (cfp.state != CfpState::Open) return "Expired";
        if (reply->bid_step > cfp.expiry_step) return "Expired";
        if (reply->price < 0) return "InvalidPayload: negative price";
        if (agent == cfp.initiator) return "InvalidPayload: initiator cannot bid";
        if (std::find(cfp.exclude.begin(), cfp.exclude.end(), agent) != cfp.exclude.end())
            return "InvalidPayload: responder excluded";
        if (!cfp.targets.empty() && !cfp.targets.count(agent))
            return "InvalidPayload: responder not solicited";
        if (reply->price > state.accounts.at(cfp.initiator).wallet) return "Unaffordable";
        return std::nullopt;
    }
    if (const auto* notice = std::get_if<ledger::AssignmentNotice>(&payload)) {
        if (!state.contracts.count(notice->cfp_id)) return "UnknownCFP";
        return std::nullopt;
    }
    if (const auto* result = std::get_if<ledger::EnforcementResult>(&payload)) {
        if (!state.contracts.count(result->cfp_id)) return "UnknownCFP";
        return std::nullopt;
    }
    return std::nullopt;  // MeterReading, SensitivityPublish
}

inline void execute_payload(WorldState& state, AgentId agent, const Payload& payload,
                            const TxContext& ctx, const Params& params) {
    if (const auto* init = std::get_if<ledger::AccountInit>(&payload)) {
        init_account(state, init->zone, init->public_key, init->funding);
    } else if (const auto* m = std::get_if<ledger::MeterReading>(&payload)) {
        state.latest_measurements[m->bus] = *m;
    } else if (const auto* create = std::get_if<CreateCFP>(&payload)) {
        create_cfp(state, agent, *create, ctx.tip_step);
    } else if (const auto* reply = std::get_if<ReplyCFP>(&payload)) {
        reply_cfp(state, BidRecord{reply->cfp_id, agent, reply->price, reply->bid_step,
                                   reply->responder_bus});
    } else if (const auto* pub = std::get_if<ledger::SensitivityPublish>(&payload)) {
        state.sensitivity = pub->matrix;
    }
    // AssignmentNotice and EnforcementResult are informational: they are
    // committed for the audit trail but carry no state transition.
}

}  // namespace tes::contract
