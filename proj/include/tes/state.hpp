#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "tes/common.hpp"
#include "tes/grid.hpp"

namespace tes::ledger {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Transaction payloads
// ---------------------------------------------------------------------------

struct AccountInit {
    AgentId zone = 0;
    std::string public_key;
    double funding = 0.0;
};

struct MeterReading {
    BusId bus = 0;
    double v = 0.0;
    double p = 0.0;  // total device injection at the bus
    double q = 0.0;
    Step step = 0;
};

struct PzcTarget {
    BusId pzc_bus = 0;
    double dv_target = 0.0;
};

struct CreateCFP {
    BusId pzc_bus = 0;        // primary observation bus
    double dv_target = 0.0;   // primary target (used when targets is empty)
    Step expiry_step = 0;
    std::map<AgentId, PzcTarget> targets;  // per-responder PZC targets
    std::optional<double> local_cost;      // initiator's self-mitigation cost
    std::vector<AgentId> exclude;
};

struct ReplyCFP {
    CfpId cfp_id = 0;
    double price = 0.0;
    Step bid_step = 0;
    BusId responder_bus = 0;  // the responder's DG bus, audited at enforcement
};

struct AssignmentNotice {
    CfpId cfp_id = 0;
    AgentId responder = 0;
    int dec = 0;
};

struct EnforcementResult {
    CfpId cfp_id = 0;
    bool success = false;
};

struct SensitivityPublish {
    grid::SensitivityMatrix matrix;
};

using Payload = std::variant<AccountInit, MeterReading, CreateCFP, ReplyCFP, AssignmentNotice,
                             EnforcementResult, SensitivityPublish>;

// ---------------------------------------------------------------------------
// Contract records
// ---------------------------------------------------------------------------

enum class CfpState { Open, BiddingClosed, Assigned, EnforcedSuccess, EnforcedFailure };

inline std::string to_string(CfpState s) {
    switch (s) {
        case CfpState::Open: return "Open";
        case CfpState::BiddingClosed: return "BiddingClosed";
        case CfpState::Assigned: return "Assigned";
        case CfpState::EnforcedSuccess: return "EnforcedSuccess";
        case CfpState::EnforcedFailure: return "EnforcedFailure";
    }
    return "?";
}

inline CfpState cfp_state_from(const std::string& s) {
    if (s == "Open") return CfpState::Open;
    if (s == "BiddingClosed") return CfpState::BiddingClosed;
    if (s == "Assigned") return CfpState::Assigned;
    if (s == "EnforcedSuccess") return CfpState::EnforcedSuccess;
    if (s == "EnforcedFailure") return CfpState::EnforcedFailure;
    fail("BadCfpState", s);
}

struct BidRecord {
    CfpId cfp_id = 0;
    AgentId responder = 0;
    double price = 0.0;
    Step bid_step = 0;
    BusId responder_bus = 0;
};

struct ServiceContract {
    CfpId cfp_id = 0;
    AgentId winner = 0;
    double price = 0.0;
    BusId pzc_bus = 0;
    double dv_target = 0.0;
    Step assigned_step = 0;
    Step enforce_deadline_step = 0;
    double baseline_p = 0.0;  // winner's DG bus meter at assignment
    double baseline_q = 0.0;
    std::map<AgentId, int> decision;  // DEC per responder, 1 only for winner
};

struct CFPRecord {
    CfpId cfp_id = 0;
    AgentId initiator = 0;
    BusId pzc_bus = 0;
    double dv_target = 0.0;
    Step created_step = 0;
    Step expiry_step = 0;
    CfpState state = CfpState::Open;
    std::map<AgentId, PzcTarget> targets;
    std::optional<double> local_cost;
    std::vector<AgentId> exclude;
    std::vector<BidRecord> bids;
    std::optional<ServiceContract> contract;
    double dv_achieved = 0.0;
    std::string outcome;  // "", "no_award", "local_cheaper", "failed", "fulfilled"
    std::optional<CfpId> reissued_as;

    Step window() const { return expiry_step - created_step; }
    PzcTarget target_for(AgentId responder) const {
        auto it = targets.find(responder);
        if (it != targets.end()) return it->second;
        return {pzc_bus, dv_target};
    }
};

struct Account {
    std::string public_key;
    double wallet = 0.0;
    double reputation = 1.0;
};

struct WorldState {
    std::map<AgentId, Account> accounts;
    std::map<BusId, MeterReading> latest_measurements;
    std::optional<grid::SensitivityMatrix> sensitivity;
    std::map<CfpId, CFPRecord> contracts;
    CfpId next_cfp_id = 1;
};

// ---------------------------------------------------------------------------
// Canonical JSON (nlohmann keeps object keys sorted, so dump() is canonical)
// ---------------------------------------------------------------------------

inline json to_json(const grid::SensitivityMatrix& m) {
    return json{{"buses", m.bus_ids}, {"sp", m.sp_m}, {"sq", m.sq_m}};
}

inline grid::SensitivityMatrix sensitivity_from_json(const json& j) {
    grid::SensitivityMatrix m;
    m.bus_ids = j.at("buses").get<std::vector<BusId>>();
    m.sp_m = j.at("sp").get<std::vector<std::vector<double>>>();
    m.sq_m = j.at("sq").get<std::vector<std::vector<double>>>();
    return m;
}

inline json to_json(const Payload& p) {
    return std::visit(
        [](const auto& v) -> json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, AccountInit>) {
                return json{{"type", "account_init"},
                            {"zone", v.zone},
                            {"public_key", v.public_key},
                            {"funding", v.funding}};
            } else if constexpr (std::is_same_v<T, MeterReading>) {
                return json{{"type", "meter_reading"}, {"bus", v.bus}, {"v", v.v},
                            {"p", v.p},               {"q", v.q},     {"step", v.step}};
            } else if constexpr (std::is_same_v<T, CreateCFP>) {
                json targets = json::object();
                for (const auto& [agent, t] : v.targets)
                    targets[std::to_string(agent)] =
                        json{{"pzc_bus", t.pzc_bus}, {"dv_target", t.dv_target}};
                return json{{"type", "create_cfp"},
                            {"pzc_bus", v.pzc_bus},
                            {"dv_target", v.dv_target},
                            {"expiry_step", v.expiry_step},
                            {"targets", targets},
                            {"local_cost", v.local_cost ? json(*v.local_cost) : json()},
                            {"exclude", v.exclude}};
            } else if constexpr (std::is_same_v<T, ReplyCFP>) {
                return json{{"type", "reply_cfp"},
                            {"cfp_id", v.cfp_id},
                            {"price", v.price},
                            {"bid_step", v.bid_step},
                            {"responder_bus", v.responder_bus}};
            } else if constexpr (std::is_same_v<T, AssignmentNotice>) {
                return json{{"type", "assignment_notice"},
                            {"cfp_id", v.cfp_id},
                            {"responder", v.responder},
                            {"dec", v.dec}};
            } else if constexpr (std::is_same_v<T, EnforcementResult>) {
                return json{{"type", "enforcement_result"},
                            {"cfp_id", v.cfp_id},
                            {"success", v.success}};
            } else {
                static_assert(std::is_same_v<T, SensitivityPublish>);
                return json{{"type", "sensitivity_publish"}, {"matrix", to_json(v.matrix)}};
            }
        },
        p);
}

inline Payload payload_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "account_init") {
        return AccountInit{j.at("zone").get<AgentId>(), j.at("public_key").get<std::string>(),
                           j.at("funding").get<double>()};
    }
    if (type == "meter_reading") {
        return MeterReading{j.at("bus").get<BusId>(), j.at("v").get<double>(),
                            j.at("p").get<double>(), j.at("q").get<double>(),
                            j.at("step").get<Step>()};
    }
    if (type == "create_cfp") {
        CreateCFP c;
        c.pzc_bus = j.at("pzc_bus").get<BusId>();
        c.dv_target = j.at("dv_target").get<double>();
        c.expiry_step = j.at("expiry_step").get<Step>();
        for (const auto& [k, t] : j.at("targets").items())
            c.targets[std::stoi(k)] =
                PzcTarget{t.at("pzc_bus").get<BusId>(), t.at("dv_target").get<double>()};
        if (!j.at("local_cost").is_null()) c.local_cost = j.at("local_cost").get<double>();
        c.exclude = j.at("exclude").get<std::vector<AgentId>>();
        return c;
    }
    if (type == "reply_cfp") {
        return ReplyCFP{j.at("cfp_id").get<CfpId>(), j.at("price").get<double>(),
                        j.at("bid_step").get<Step>(), j.at("responder_bus").get<BusId>()};
    }
    if (type == "assignment_notice") {
        return AssignmentNotice{j.at("cfp_id").get<CfpId>(), j.at("responder").get<AgentId>(),
                                j.at("dec").get<int>()};
    }
    if (type == "enforcement_result") {
        return EnforcementResult{j.at("cfp_id").get<CfpId>(), j.at("success").get<bool>()};
    }
    if (type == "sensitivity_publish") {
        return SensitivityPublish{sensitivity_from_json(j.at("matrix"))};
    }
    fail("InvalidPayload", "unknown payload type " + type);
}

inline json to_json(const BidRecord& b) {
    return json{{"cfp_id", b.cfp_id},
                {"responder", b.responder},
                {"price", b.price},
                {"bid_step", b.bid_step},
                {"responder_bus", b.responder_bus}};
}

inline json to_json(const ServiceContract& c) {
    json dec = json::object();
    for (const auto& [agent, d] : c.decision) dec[std::to_string(agent)] = d;
    return json{{"cfp_id", c.cfp_id},
                {"winner", c.winner},
                {"price", c.price},
                {"pzc_bus", c.pzc_bus},
                {"dv_target", c.dv_target},
                {"assigned_step", c.assigned_step},
                {"enforce_deadline_step", c.enforce_deadline_step},
                {"baseline_p", c.baseline_p},
                {"baseline_q", c.baseline_q},
                {"decision", dec}};
}

inline json to_json(const CFPRecord& c) {
    json targets = json::object();
    for (const auto& [agent, t] : c.targets)
        targets[std::to_string(agent)] = json{{"pzc_bus", t.pzc_bus}, {"dv_target", t.dv_target}};
    json bids = json::array();
    for (const auto& b : c.bids) bids.push_back(to_json(b));
    return json{{"cfp_id", c.cfp_id},
                {"initiator", c.initiator},
                {"pzc_bus", c.pzc_bus},
                {"dv_target", c.dv_target},
                {"created_step", c.created_step},
                {"expiry_step", c.expiry_step},
                {"state", to_string(c.state)},
                {"targets", targets},
                {"local_cost", c.local_cost ? json(*c.local_cost) : json()},
                {"exclude", c.exclude},
                {"bids", bids},
                {"contract", c.contract ? to_json(*c.contract) : json()},
                {"dv_achieved", c.dv_achieved},
                {"outcome", c.outcome},
                {"reissued_as", c.reissued_as ? json(*c.reissued_as) : json()}};
}

inline json to_json(const WorldState& s) {
    json accounts = json::object();
    for (const auto& [id, a] : s.accounts)
        accounts[std::to_string(id)] = json{
            {"public_key", a.public_key}, {"wallet", a.wallet}, {"reputation", a.reputation}};
    json meas = json::object();
    for (const auto& [bus, m] : s.latest_measurements)
        meas[std::to_string(bus)] =
            json{{"bus", m.bus}, {"v", m.v}, {"p", m.p}, {"q", m.q}, {"step", m.step}};
    json contracts = json::object();
    for (const auto& [id, c] : s.contracts) contracts[std::to_string(id)] = to_json(c);
    return json{{"accounts", accounts},
                {"latest_measurements", meas},
                {"sensitivity", s.sensitivity ? to_json(*s.sensitivity) : json()},
                {"contracts", contracts},
                {"next_cfp_id", s.next_cfp_id}};
}

}  // namespace tes::ledger
