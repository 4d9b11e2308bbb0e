#include <doctest.h>

#include "agristab/cli.hpp"
#include "agristab/csv.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

using namespace agristab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::path("/tmp") / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

std::string write_config(const fs::path& dir, const std::string& body) {
    const auto path = dir / "config.json";
    std::ofstream out(path);
    out << body;
    return path.string();
}

const char* kSmallConfig = R"json({
  "version": 1,
  "gen": {"n_farms": 150, "years": 8, "idiosyncratic_sd": 0.3},
  "scenarios": ["national", "altimetry"],
  "bootstrap": {"replicates": 120, "level": 0.83},
  "families": ["glm", "lasso"],
  "resamples": 2,
  "penalty": {"path_length": 15, "lambda_min_ratio": 0.001, "tol": 1e-6},
  "boost": {"max_trees": 30, "learning_rate": 0.1, "max_depth": 2, "min_node_size": 10, "subsample": 1.0},
  "cv_folds": 3,
  "compatibility": [1.0, 0.10],
  "power_grid": {"from": 1.3, "to": 1.7, "step": 0.1}
})json";

} // namespace

TEST_CASE("config: unknown keys and bad values are rejected") {
    TempDir dir("agristab_cli_cfg");
    const auto bad_key = write_config(dir.path, R"({"version": 1, "nonsense": 2})");
    CHECK_THROWS_WITH_AS(cli::RunConfig::from_json_file(bad_key),
                         doctest::Contains("nonsense"), std::runtime_error);

    const auto bad_nested =
        write_config(dir.path, R"({"version": 1, "gen": {"n_farms": 10, "oops": 1}})");
    CHECK_THROWS_WITH_AS(cli::RunConfig::from_json_file(bad_nested),
                         doctest::Contains("oops"), std::runtime_error);

    const auto bad_value =
        write_config(dir.path, R"({"version": 1, "gen": {"n_farms": 0}})");
    CHECK_THROWS_AS(cli::RunConfig::from_json_file(bad_value), std::invalid_argument);

    const auto bad_version = write_config(dir.path, R"({"version": 9})");
    CHECK_THROWS_WITH_AS(cli::RunConfig::from_json_file(bad_version),
                         doctest::Contains("version"), std::runtime_error);

    const auto bad_family =
        write_config(dir.path, R"({"version": 1, "families": ["glm", "svm"]})");
    CHECK_THROWS_WITH_AS(cli::RunConfig::from_json_file(bad_family),
                         doctest::Contains("svm"), std::runtime_error);
}

TEST_CASE("cmd_gen writes a byte-identical panel per seed") {
    TempDir dir("agristab_cli_gen");
    cli::CommandContext ctx;
    ctx.config = cli::RunConfig::from_json_file(write_config(dir.path, kSmallConfig));
    ctx.seed = 7;
    ctx.out_dir = dir.str();
    REQUIRE(cli::cmd_gen(ctx) == 0);
    const auto first = slurp(dir.str() + "/panel.csv");
    REQUIRE_FALSE(first.empty());
    REQUIRE(cli::cmd_gen(ctx) == 0);
    CHECK(slurp(dir.str() + "/panel.csv") == first);

    ctx.seed = 8;
    REQUIRE(cli::cmd_gen(ctx) == 0);
    CHECK(slurp(dir.str() + "/panel.csv") != first);
}

TEST_CASE("full pipeline: gen, simulate, ratemake, evaluate") {
    TempDir dir("agristab_cli_pipe");
    cli::CommandContext ctx;
    ctx.config = cli::RunConfig::from_json_file(write_config(dir.path, kSmallConfig));
    ctx.seed = 42;
    ctx.out_dir = dir.str();

    REQUIRE(cli::cmd_gen(ctx) == 0);
    REQUIRE(cli::cmd_simulate(ctx) == 0);
    CHECK(fs::exists(dir.path / "indemnity_rates.csv"));
    CHECK(fs::exists(dir.path / "stability_national.csv"));
    CHECK(fs::exists(dir.path / "stability_altimetry.csv"));
    CHECK(fs::exists(dir.path / "dcb_national.csv"));
    CHECK(fs::exists(dir.path / "kde_cv_i.csv"));

    // rates CSV reconciles: every listed fund has ci_lo <= cv <= ci_hi
    const auto rates = csv::read_file(dir.str() + "/indemnity_rates.csv");
    for (const auto& row : rates.rows) {
        const double cv = std::stod(row[5]);
        CHECK(std::stod(row[6]) <= cv + 1e-9);
        CHECK(cv <= std::stod(row[7]) + 1e-9);
    }

    REQUIRE(cli::cmd_ratemake(ctx) == 0);
    CHECK(fs::exists(dir.path / "metrics.csv"));
    CHECK(fs::exists(dir.path / "metrics_summary.csv"));
    CHECK(fs::exists(dir.path / "selection_glm.csv"));
    CHECK(fs::exists(dir.path / "selection_lasso.csv"));
    CHECK(fs::exists(dir.path / "power.json"));
    CHECK(fs::exists(dir.path / "predictions.csv"));

    const auto metrics = csv::read_file(dir.str() + "/metrics.csv");
    // 2 families x 2 resamples x target years
    CHECK(metrics.rows.size() % 4 == 0);
    CHECK_FALSE(metrics.rows.empty());

    REQUIRE(cli::cmd_evaluate(ctx) == 0);
    CHECK(fs::exists(dir.path / "economic.csv"));
    CHECK(fs::exists(dir.path / "annual_balance.csv"));
    CHECK(fs::exists(dir.path / "fig_compatibility.svg"));
    CHECK(fs::exists(dir.path / "fig_balance.svg"));
    CHECK(fs::exists(dir.path / "fig_classes_count.svg"));

    // annual balances per section sum to the reported multiannual balance
    const auto econ = csv::read_file(dir.str() + "/economic.csv");
    const auto annual = csv::read_file(dir.str() + "/annual_balance.csv");
    for (const auto& row : econ.rows) {
        double sum = 0.0;
        for (const auto& arow : annual.rows)
            if (arow[0] == row[0] && arow[1] == row[1]) sum += std::stod(arow[3]);
        CHECK(sum == doctest::Approx(std::stod(row[4])).epsilon(1e-6));
    }
}

TEST_CASE("simulate with zero recovery share produces zero contributions") {
    TempDir dir("agristab_cli_zero");
    std::string config = R"json({
      "version": 1,
      "gen": {"n_farms": 60, "years": 7},
      "ist": {"alpha": 0.7, "beta": 0.7, "window": 3, "recovery_share": 0.0},
      "scenarios": ["national"],
      "bootstrap": {"replicates": 50, "level": 0.83}
    })json";
    cli::CommandContext ctx;
    ctx.config = cli::RunConfig::from_json_file(write_config(dir.path, config));
    ctx.seed = 5;
    ctx.out_dir = dir.str();
    REQUIRE(cli::cmd_gen(ctx) == 0);
    REQUIRE(cli::cmd_simulate(ctx) == 0);
    // with no contributions I_IF == I_I in the stability medians and dcb == 0
    const auto stability = csv::read_file(dir.str() + "/stability_national.csv");
    double med_ii = 0.0, med_iif = 0.0;
    for (const auto& row : stability.rows) {
        if (row[0] == "ALL" && row[1] == "I_I") med_ii = std::stod(row[3]);
        if (row[0] == "ALL" && row[1] == "I_IF") med_iif = std::stod(row[3]);
    }
    CHECK(med_ii == doctest::Approx(med_iif));
    const auto dcb = csv::read_file(dir.str() + "/dcb_national.csv");
    for (const auto& row : dcb.rows) CHECK(std::stod(row[3]) == 0.0);
}

TEST_CASE("simulate reruns are byte-identical per seed") {
    TempDir dir("agristab_cli_det");
    cli::CommandContext ctx;
    ctx.config = cli::RunConfig::from_json_file(write_config(dir.path, kSmallConfig));
    ctx.seed = 11;
    ctx.out_dir = dir.str();
    REQUIRE(cli::cmd_gen(ctx) == 0);
    REQUIRE(cli::cmd_simulate(ctx) == 0);
    const auto first = slurp(dir.str() + "/indemnity_rates.csv");
    REQUIRE(cli::cmd_simulate(ctx) == 0);
    CHECK(slurp(dir.str() + "/indemnity_rates.csv") == first);
}

TEST_CASE("missing inputs exit with code 2") {
    TempDir dir("agristab_cli_missing");
    cli::CommandContext ctx;
    ctx.config = cli::RunConfig::from_json_file(write_config(dir.path, kSmallConfig));
    ctx.seed = 1;
    ctx.out_dir = dir.str();
    CHECK(cli::cmd_simulate(ctx) == 2);   // no panel.csv yet
    CHECK(cli::cmd_ratemake(ctx) == 2);
    CHECK(cli::cmd_evaluate(ctx) == 2);   // no predictions.csv
}
