#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tes/harness.hpp"

namespace {

int run_cmd(const std::string& scenario_path, const std::string& out_dir,
            std::optional<unsigned> seed, std::optional<std::string> weighting,
            std::optional<int> steps) {
    tes::harness::ScenarioConfig cfg;
    try {
        cfg = tes::harness::load_scenario(scenario_path);
        if (seed) cfg.params.seed = *seed;
        if (weighting) cfg.params.contract.weighting = tes::contract::bid_weighting_from(*weighting);
        if (steps) cfg.params.steps = *steps;
        if (cfg.params.steps < 1) tes::fail("ValidationError", "steps must be >= 1");
    } catch (const tes::Error& e) {
        std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
        return 2;
    }
    try {
        auto report = tes::harness::run_simulation(std::move(cfg));
        tes::harness::write_reports(report, out_dir);
        for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
        std::cout << "wrote " << report.chain.size() << " blocks and reports to " << out_dir
                  << "\n";
        return 0;
    } catch (const tes::Error& e) {
        std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
        return 3;
    }
}

int verify_cmd(const std::string& chain_path) {
    std::vector<tes::ledger::Block> chain;
    try {
        chain = tes::harness::load_chain(chain_path);
    } catch (const tes::Error& e) {
        std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
        return 2;
    }
    if (auto bad = tes::ledger::verify_chain(chain)) {
        std::cerr << "chain verification failed at block " << *bad << "\n";
        return 3;
    }
    try {
        tes::ledger::replay_chain(chain, tes::contract::Params{},
                                  [](const tes::ledger::WorldState&, const tes::ledger::Block&) {});
    } catch (const tes::Error& e) {
        std::cerr << "chain replay failed: " << e.code() << ": " << e.what() << "\n";
        return 3;
    }
    std::cout << "ok: " << chain.size() << " blocks verified\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Transactive voltage-regulation simulator"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run a scenario and write reports");
    std::string scenario_path, out_dir;
    std::optional<unsigned> seed;
    std::optional<std::string> weighting;
    std::optional<int> steps;
    run->add_option("--scenario", scenario_path, "Scenario JSON file")->required();
    run->add_option("--out", out_dir, "Output directory")->required();
    run->add_option("--seed", seed, "Override the scenario RNG seed");
    run->add_option("--bid-weighting", weighting, "divide|multiply")
        ->check(CLI::IsMember({"divide", "multiply"}));
    run->add_option("--steps", steps, "Override the simulated step count");

    auto* verify = app.add_subcommand("verify", "Verify a serialized chain log");
    std::string chain_path;
    verify->add_option("--chain", chain_path, "chain.log file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (run->parsed()) return run_cmd(scenario_path, out_dir, seed, weighting, steps);
    return verify_cmd(chain_path);
}
