#pragma once

#include "agristab/evalecon.hpp"
#include "agristab/ist.hpp"
#include "agristab/panel.hpp"
#include "agristab/stats.hpp"
#include "agristab/synthetic.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace agristab::cli {

// Declarative run configuration; schema-validated, unknown keys rejected.
struct RunConfig {
    int version = 1;
    SyntheticConfig gen;
    std::string panel_csv = "panel.csv";           // relative to the out dir
    std::string predictions_csv = "predictions.csv";
    std::optional<std::string> price_index_csv;
    ist::IstParams ist_params;
    std::vector<std::string> scenarios = {"national"};
    stats::BootstrapConfig bootstrap;
    std::vector<evalecon::ModelFamily> families = {
        evalecon::ModelFamily::Glm, evalecon::ModelFamily::Lasso,
        evalecon::ModelFamily::ElasticNet, evalecon::ModelFamily::Boosting};
    std::vector<int> target_years;                 // empty = all feasible
    int resamples = 10;
    double train_fraction = 0.75;
    std::vector<double> power_grid;                // empty = default 1.02..1.98
    evalecon::FamilyHyper hyper;
    std::vector<double> compatibility = {1.0, 0.5, 0.25, 0.10};
    double delta = 0.0;

    static RunConfig from_json_file(const std::string& path);
};

struct CommandContext {
    RunConfig config;
    std::uint64_t seed = 42;
    std::string out_dir;
};

// Exit codes: 0 success, 1 partial model failure, 2 input/schema error.
int cmd_gen(const CommandContext& ctx);
int cmd_simulate(const CommandContext& ctx);
int cmd_ratemake(const CommandContext& ctx);
int cmd_evaluate(const CommandContext& ctx);

int run(int argc, char** argv);

} // namespace agristab::cli
