#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "cli.hpp"
#include "dosebound/csv.hpp"
#include "dosebound/estimator.hpp"
#include "dosebound/models.hpp"

using namespace dosebound;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() /
                         ("dosebound-cli-" + std::to_string(::getpid())) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

TrainingSet to_training_set(const csv::Table& table) {
    TrainingSet set;
    const std::size_t p = table.header.size() - 2;
    set.x = Matrix(table.values.rows, p);
    for (std::size_t i = 0; i < table.values.rows; ++i) {
        for (std::size_t c = 0; c < p; ++c) set.x(i, c) = table.values(i, c);
        set.t.push_back(table.values(i, table.column_index("t")));
        set.y.push_back(table.values(i, table.column_index("y")));
    }
    return set;
}

fs::path trial_dir() {
    static const fs::path dir = [] {
        const fs::path d = scratch("trial");
        const Run r = run({"dgp", "--trial", "--rows", "1200", "--cols", "8", "--seed", "5",
                           "--out", d.string()});
        REQUIRE(r.code == 0);
        return d;
    }();
    return dir;
}

}  // namespace

TEST_CASE("dgp writes a trial with the requested shapes") {
    const fs::path d = trial_dir();
    const csv::Table train = csv::read(d / "train.csv");
    const csv::Table test = csv::read(d / "test.csv");
    const csv::Table truth = csv::read(d / "truth.csv");
    CHECK(train.values.rows == 750);
    CHECK(test.values.rows == 250);
    CHECK(truth.values.rows == 100);
    CHECK(train.header == std::vector<std::string>{"x0", "x1", "x2", "x3", "x4", "t", "y"});
    CHECK(truth.header == std::vector<std::string>{"t", "apo"});
}

TEST_CASE("dgp is deterministic") {
    const fs::path a = scratch("raw-a");
    const fs::path b = scratch("raw-b");
    CHECK(run({"dgp", "--rows", "40", "--cols", "3", "--seed", "8", "--out", a.string()}).code == 0);
    CHECK(run({"dgp", "--rows", "40", "--cols", "3", "--seed", "8", "--out", b.string()}).code == 0);
    CHECK(slurp(a / "raw.csv") == slurp(b / "raw.csv"));
    const csv::Table raw = csv::read(a / "raw.csv");
    CHECK(raw.values.rows == 40);
    CHECK(raw.header == std::vector<std::string>{"c0", "c1", "c2"});

    const fs::path c = scratch("from-csv");
    CHECK(run({"dgp", "--trial", "--from-csv", (a / "raw.csv").string(), "--n-train", "20", "--n-test",
               "10", "--confounders", "4", "--grid", "5", "--out", c.string()})
              .code == 0);
    CHECK(csv::read(c / "train.csv").values.cols == 4);
}

TEST_CASE("bounds at gamma one collapse") {
    const fs::path d = trial_dir();
    const fs::path o = scratch("bounds-one");
    const Run r = run({"bounds", "--data", (d / "train.csv").string(), "--eval", (d / "test.csv").string(),
                       "--gamma", "1", "--grid", "21", "--out", o.string()});
    REQUIRE(r.code == 0);
    const csv::Table b = csv::read(o / "bounds.csv");
    CHECK(b.values.rows == 21);
    for (std::size_t i = 0; i < b.values.rows; ++i) {
        CHECK(std::abs(b.values(i, 2) - b.values(i, 1)) < 1e-9);
        CHECK(b.values(i, 3) == 0.0);
    }
    const auto models = nlohmann::json::parse(slurp(o / "models.json"));
    CHECK(models.at("sensitivity").at("gamma") == 1.0);
    CHECK(outcome_from_json(models.at("outcome")).n_covariates() == 5);
}

TEST_CASE("bounds match the library") {
    const fs::path d = trial_dir();
    const fs::path o = scratch("bounds-uniform");
    REQUIRE(run({"bounds", "--data", (d / "train.csv").string(), "--eval", (d / "test.csv").string(),
                 "--model", "uniform", "--gamma", "2", "--grid", "11", "--out", o.string()})
                .code == 0);
    const TrainingSet train = to_training_set(csv::read(d / "train.csv"));
    const TrainingSet test = to_training_set(csv::read(d / "test.csv"));
    const TrainConfig config;
    const Predictors predictors =
        make_predictors(fit_outcome(train, config).model, fit_propensity(train, config).model);
    std::vector<double> grid;
    for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
    const IntervalCurve curve = apo_interval(predictors, UniformModel{}, test.x, grid, 2.0);
    const csv::Table b = csv::read(o / "bounds.csv");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        CHECK(b.values(i, 1) == curve.lo[i]);
        CHECK(b.values(i, 2) == curve.hi[i]);
    }

    const fs::path capo = scratch("bounds-capo");
    CHECK(run({"bounds", "--data", (d / "train.csv").string(), "--target", "capo", "--instance", "3",
               "--scheme", "gaussian", "--gamma", "1.5", "--grid", "5", "--out", capo.string()})
              .code == 0);
    CHECK(csv::read(capo / "bounds.csv").values.rows == 5);
}

TEST_CASE("usage errors exit with code 2") {
    const std::string data = (trial_dir() / "train.csv").string();
    const fs::path o = scratch("usage");
    CHECK(run({"bounds", "--data", data, "--gamma", "0.5", "--out", o.string()}).code == 2);
    CHECK(run({"bounds", "--data", data, "--gamma", "2", "--target", "capo", "--out", o.string()}).code == 2);
    CHECK(run({"bounds", "--data", data, "--gamma", "2", "--model", "nope", "--out", o.string()}).code == 2);
    CHECK(run({"bounds", "--gamma", "2"}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"check", "--suite", "everything"}).code == 2);
    CHECK(run({"benchmark", "--config", (o / "missing.json").string()}).code == 2);
    const Run bad = run({"bounds", "--data", (o / "absent.csv").string(), "--gamma", "2"});
    CHECK(bad.code != 0);
    CHECK_FALSE(bad.err.empty());
}

TEST_CASE("benchmark subcommand") {
    const fs::path o = scratch("bench");
    {
        std::ofstream cfg(o / "config.json");
        cfg << R"({"seed": 3, "trial": {"n_train": 200, "n_test": 80, "t_grid_size": 15,
                   "gamma_grid_size": 10}, "train": {"epochs": 5}, "raw": {"rows": 400, "cols": 6}})";
    }
    const Run r = run({"benchmark", "--config", (o / "config.json").string(), "--trials", "1",
                       "--methods", "deltamsm", "--out", o.string()});
    REQUIRE(r.code == 0);
    const auto summary = nlohmann::json::parse(slurp(o / "summary.json"));
    CHECK(summary.at("trials") == 1);
    CHECK(summary.at("methods").at("deltamsm").at("pct_best") == 100.0);
    const std::string trials = slurp(o / "trials.csv");
    CHECK(trials.find("0,deltamsm,") != std::string::npos);
    CHECK(r.out.find("deltamsm") != std::string::npos);
}

TEST_CASE("check subcommand") {
    const Run r = run({"check", "--suite", "alg1", "--instances", "50", "--n", "8"});
    CHECK(r.code == 0);
    CHECK(r.out.find("alg1") != std::string::npos);
    CHECK(run({"check", "--suite", "table1", "--samples", "5"}).code == 0);
    CHECK(run({"check", "--suite", "gradients", "--points", "5"}).code == 0);
}
