#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tes/common.hpp"
#include "tes/contract.hpp"
#include "tes/grid.hpp"

namespace tes::harness {

using json = nlohmann::json;

struct ZoneSpec {
    AgentId zone = 0;
    std::vector<BusId> buses;
    std::vector<LineId> lines;
    BusId dg_bus = 0;
    std::vector<BusId> meter_buses;
    std::map<AgentId, BusId> pzc;  // neighbor zone -> shared bus
};

struct DgSettings {
    AgentId zone = 0;
    grid::DeviceKind kind = grid::DeviceKind::Generator;
    double p_max = 0.0, q_max = 0.0, s_max = 0.0;
    double p_set = 0.0, q_set = 0.0, p_avail = 0.0;
    double pr_q = 0.0, alpha = 1.0;
    double bid_discount = 0.0;
    std::optional<double> subcontract_threshold;
};

enum class EventKind { DgOutageStart, DgOutageEnd, IrradianceSet, LoadSet, ActuationFault };

struct ScenarioEvent {
    Step step = 0;
    EventKind kind = EventKind::LoadSet;
    AgentId zone = 0;       // outage / irradiance / fault
    BusId bus = 0;          // load_set
    double value = 0.0;     // irradiance p_avail
    double p = 0.0, q = 0.0;  // load_set
    Step until_step = 0;    // actuation_fault window end (inclusive)
};

struct RunParams {
    contract::Params contract;
    int b_m = 128;
    double dt_hours = 1.0;
    Step steps = 1;
    unsigned seed = 1;
    Step bid_window_steps = 2;
    int n_nodes = 0;  // 0 = one node per zone
    double safety_margin_pu = 0.0005;
    int step_minutes = 5;
    int latency_steps = 0;
};

struct ScenarioConfig {
    grid::NetworkModel network;
    std::vector<ZoneSpec> zones;
    std::vector<DgSettings> dg_settings;
    std::vector<double> price_series;  // hourly PR_P in $/p.u.-hour
    std::vector<ScenarioEvent> events;
    RunParams params;
};

namespace detail {

inline void expect_keys(const json& j, const std::set<std::string>& allowed,
                        const std::string& where) {
    for (const auto& [k, _] : j.items())
        if (!allowed.count(k))
            fail("ValidationError", "unknown key '" + k + "' in " + where);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) return it->get<T>();
    return fallback;
}

}  // namespace detail

inline ScenarioConfig parse_scenario(const json& doc) {
    using detail::expect_keys;
    using detail::get_or;

    expect_keys(doc, {"topology", "zones", "dg_settings", "price_series", "events", "params"},
                "scenario root");
    ScenarioConfig cfg;

    const json& topo = doc.at("topology");
    expect_keys(topo, {"root", "buses", "lines"}, "topology");
    cfg.network.root_bus_id = topo.at("root").get<BusId>();
    for (const json& jb : topo.at("buses")) {
        expect_keys(jb, {"id", "v_min", "v_max", "load_p", "load_q"}, "bus");
        grid::BusRecord b;
        b.id = jb.at("id").get<BusId>();
        b.v_min = get_or(jb, "v_min", 0.95);
        b.v_max = get_or(jb, "v_max", 1.05);
        b.load_p = get_or(jb, "load_p", 0.0);
        b.load_q = get_or(jb, "load_q", 0.0);
        if (!(b.v_min > 0 && b.v_min < b.v_max))
            fail("ValidationError", "bus " + std::to_string(b.id) + ": need 0 < v_min < v_max");
        if (cfg.network.find_bus(b.id))
            fail("ValidationError", "duplicate bus id " + std::to_string(b.id));
        cfg.network.buses.push_back(b);
    }
    for (const json& jl : topo.at("lines")) {
        expect_keys(jl, {"id", "from", "to", "r", "x", "i_cap"}, "line");
        grid::LineRecord l;
        l.id = jl.at("id").get<LineId>();
        l.from_bus = jl.at("from").get<BusId>();
        l.to_bus = jl.at("to").get<BusId>();
        l.r = jl.at("r").get<double>();
        l.x = jl.at("x").get<double>();
        l.i_cap = get_or(jl, "i_cap", 10.0);
        if (l.i_cap <= 0) fail("ValidationError", "line " + std::to_string(l.id) + ": i_cap <= 0");
        if (!cfg.network.find_bus(l.from_bus) || !cfg.network.find_bus(l.to_bus))
            fail("ValidationError", "line " + std::to_string(l.id) + " references unknown bus");
        cfg.network.lines.push_back(l);
    }
    grid::build_topology(cfg.network);  // radiality check up front

    std::set<AgentId> zone_ids;
    for (const json& jz : doc.at("zones")) {
        expect_keys(jz, {"zone", "buses", "lines", "dg_bus", "meter_buses", "pzc"}, "zone");
        ZoneSpec z;
        z.zone = jz.at("zone").get<AgentId>();
        z.buses = jz.at("buses").get<std::vector<BusId>>();
        z.lines = get_or(jz, "lines", std::vector<LineId>{});
        z.dg_bus = jz.at("dg_bus").get<BusId>();
        z.meter_buses = get_or(jz, "meter_buses", z.buses);
        for (const json& jp : jz.at("pzc")) {
            expect_keys(jp, {"zone", "bus"}, "pzc");
            z.pzc[jp.at("zone").get<AgentId>()] = jp.at("bus").get<BusId>();
        }
        for (BusId b : z.buses)
            if (!cfg.network.find_bus(b))
                fail("ValidationError", "zone " + std::to_string(z.zone) + ": unknown bus " +
                                            std::to_string(b));
        for (BusId b : z.meter_buses)
            if (!cfg.network.find_bus(b))
                fail("ValidationError", "zone " + std::to_string(z.zone) +
                                            ": unknown meter bus " + std::to_string(b));
        if (std::find(z.buses.begin(), z.buses.end(), z.dg_bus) == z.buses.end())
            fail("ValidationError", "zone " + std::to_string(z.zone) + ": dg_bus outside zone");
        if (!zone_ids.insert(z.zone).second)
            fail("ValidationError", "duplicate zone " + std::to_string(z.zone));
        cfg.zones.push_back(z);
    }
    for (const auto& z : cfg.zones)
        for (const auto& [nz, bus] : z.pzc) {
            if (!zone_ids.count(nz))
                fail("ValidationError", "zone " + std::to_string(z.zone) +
                                            ": pzc with unknown zone " + std::to_string(nz));
            if (!cfg.network.find_bus(bus))
                fail("ValidationError", "pzc bus " + std::to_string(bus) + " unknown");
        }

    for (const json& jd : doc.at("dg_settings")) {
        expect_keys(jd,
                    {"zone", "kind", "p_max", "q_max", "s_max", "p_set", "q_set", "p_avail",
                     "pr_q", "alpha", "bid_discount", "subcontract_threshold"},
                    "dg_settings");
        DgSettings d;
        d.zone = jd.at("zone").get<AgentId>();
        if (!zone_ids.count(d.zone))
            fail("ValidationError", "dg_settings for unknown zone " + std::to_string(d.zone));
        d.kind = grid::device_kind_from(get_or<std::string>(jd, "kind", "generator"));
        d.p_max = jd.at("p_max").get<double>();
        d.q_max = jd.at("q_max").get<double>();
        d.s_max = get_or(jd, "s_max", std::hypot(d.p_max, d.q_max));
        d.p_avail = get_or(jd, "p_avail", d.p_max);
        d.p_set = get_or(jd, "p_set", 0.0);
        d.q_set = get_or(jd, "q_set", 0.0);
        d.pr_q = jd.at("pr_q").get<double>();
        d.alpha = jd.at("alpha").get<double>();
        d.bid_discount = get_or(jd, "bid_discount", 0.0);
        if (auto it = jd.find("subcontract_threshold"); it != jd.end() && !it->is_null())
            d.subcontract_threshold = it->get<double>();
        cfg.dg_settings.push_back(d);
    }

    cfg.price_series = doc.at("price_series").get<std::vector<double>>();
    if (cfg.price_series.empty()) fail("ValidationError", "price_series is empty");

    for (const json& je : doc.at("events")) {
        expect_keys(je, {"step", "kind", "zone", "bus", "value", "p", "q", "until_step"},
                    "event");
        ScenarioEvent e;
        e.step = je.at("step").get<Step>();
        const std::string kind = je.at("kind").get<std::string>();
        if (kind == "dg_outage_start") e.kind = EventKind::DgOutageStart;
        else if (kind == "dg_outage_end") e.kind = EventKind::DgOutageEnd;
        else if (kind == "irradiance_set") e.kind = EventKind::IrradianceSet;
        else if (kind == "load_set") e.kind = EventKind::LoadSet;
        else if (kind == "actuation_fault") e.kind = EventKind::ActuationFault;
        else fail("ValidationError", "unknown event kind '" + kind + "'");
        e.zone = detail::get_or(je, "zone", 0);
        e.bus = detail::get_or(je, "bus", 0);
        e.value = detail::get_or(je, "value", 0.0);
        e.p = detail::get_or(je, "p", 0.0);
        e.q = detail::get_or(je, "q", 0.0);
        e.until_step = detail::get_or(je, "until_step", e.step);
        if (e.kind == EventKind::LoadSet && !cfg.network.find_bus(e.bus))
            fail("ValidationError", "load_set on unknown bus " + std::to_string(e.bus));
        if (e.kind != EventKind::LoadSet && !zone_ids.count(e.zone))
            fail("ValidationError", "event references unknown zone " + std::to_string(e.zone));
        cfg.events.push_back(e);
    }

    const json& jp = doc.at("params");
    expect_keys(jp,
                {"gamma_success", "gamma_fail", "tol_abs", "bid_weighting", "b_m",
                 "genesis_funding", "dt_hours", "steps", "seed", "delta_t_steps",
                 "bid_window_steps", "n_nodes", "g_floor", "safety_margin_pu", "step_minutes",
                 "latency_steps"},
                "params");
    RunParams& p = cfg.params;
    p.contract.gamma_success = get_or(jp, "gamma_success", 1.0);
    p.contract.gamma_fail = get_or(jp, "gamma_fail", -10.0);
    p.contract.tol_abs = get_or(jp, "tol_abs", 0.0005);
    p.contract.weighting =
        contract::bid_weighting_from(get_or<std::string>(jp, "bid_weighting", "divide"));
    p.contract.g_floor = get_or(jp, "g_floor", 0.1);
    p.contract.genesis_funding = get_or(jp, "genesis_funding", 10000.0);
    p.contract.delta_t_steps = get_or(jp, "delta_t_steps", 12);
    p.b_m = get_or(jp, "b_m", 128);
    p.dt_hours = get_or(jp, "dt_hours", 1.0);
    p.steps = jp.at("steps").get<Step>();
    p.seed = get_or(jp, "seed", 1u);
    p.bid_window_steps = get_or(jp, "bid_window_steps", 2);
    p.n_nodes = get_or(jp, "n_nodes", 0);
    p.safety_margin_pu = get_or(jp, "safety_margin_pu", 0.0005);
    p.step_minutes = get_or(jp, "step_minutes", 5);
    p.latency_steps = get_or(jp, "latency_steps", 0);
    if (p.steps < 1) fail("ValidationError", "steps must be >= 1");
    if (!(p.contract.gamma_fail < 0 && 0 < p.contract.gamma_success))
        fail("ValidationError", "need gamma_fail < 0 < gamma_success");
    if (p.contract.delta_t_steps < 2)
        fail("ValidationError", "delta_t_steps must be >= 2 for the meter audit");
    if (p.bid_window_steps < 1) fail("ValidationError", "bid_window_steps must be >= 1");

    // Place each zone's DG on the network.
    for (const auto& d : cfg.dg_settings) {
        const ZoneSpec* zone = nullptr;
        for (const auto& z : cfg.zones)
            if (z.zone == d.zone) zone = &z;
        grid::DeviceRecord dev;
        dev.id = "dg" + std::to_string(d.zone);
        dev.kind = d.kind;
        dev.p_max = d.p_max;
        dev.q_max = d.q_max;
        dev.s_max = d.s_max;
        dev.p_set = d.p_set;
        dev.q_set = d.q_set;
        dev.p_avail = d.p_avail;
        if (!dev.within_limits())
            fail("ValidationError",
                 "dg_settings for zone " + std::to_string(d.zone) + " violate device limits");
        cfg.network.find_bus(zone->dg_bus)->devices.push_back(dev);
    }

    return cfg;
}

inline ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("ParseError", "cannot open " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        fail("ParseError", e.what());
    }
    return parse_scenario(doc);
}

}  // namespace tes::harness
