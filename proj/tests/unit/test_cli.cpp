// Copyright 2026 The qtraj Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include <json.hpp>

#include "qtraj/commands.hpp"
#include "qtraj/data.hpp"
#include "qtraj/error.hpp"

using namespace qtraj;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
    const char *env = std::getenv("QTRAJ_TEST_TMP");
    fs::path p = env ? fs::path(env) : fs::temp_directory_path() / "qtraj_cli_test";
    fs::create_directories(p);
    return p;
}

int run(const std::string &args) {
    const std::string cmd = std::string(QTRAJ_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json load_json(const fs::path &p) { return nlohmann::json::parse(slurp(p)); }

}  // namespace

TEST_CASE("simulate writes the requested sweep") {
    const fs::path dir = scratch();
    const fs::path out = dir / "sweep.qtrj";
    REQUIRE(run("--seed 5 --workers 1 simulate -n 360 -o " + out.string()) == 0);
    const Dataset ds = read_dataset(out);
    CHECK(ds.size() == 360);
    const auto manifest = load_json(manifest_path(out));
    CHECK(manifest.at("seed").get<std::uint64_t>() == 5);
    CHECK(manifest.at("command") == "simulate");
    CHECK(manifest.at("config").at("seed").get<std::uint64_t>() == 5);
}

TEST_CASE("seed fallback and config override") {
    const fs::path dir = scratch();
    const fs::path cfg = dir / "run.json";
    {
        std::ofstream f(cfg);
        f << R"({"seed": 11, "sim": {"efficiency": 0.5}})";
    }
    const fs::path a = dir / "cfg_a.qtrj";
    REQUIRE(run("--config " + cfg.string() + " simulate -n 36 --efficiency 0.25 -o " + a.string()) == 0);
    auto m = load_json(manifest_path(a));
    CHECK(m.at("seed").get<std::uint64_t>() == 11);
    CHECK(m.at("config").at("efficiency").get<double>() == 0.25);

    const fs::path b = dir / "env_b.qtrj";
    setenv("QTRAJ_SEED", "77", 1);
    REQUIRE(run("simulate -n 36 -o " + b.string()) == 0);
    unsetenv("QTRAJ_SEED");
    CHECK(load_json(manifest_path(b)).at("seed").get<std::uint64_t>() == 77);
}

TEST_CASE("exit codes") {
    const fs::path dir = scratch();
    CHECK(run("simulate") == 1);
    CHECK(run("nonsense") == 1);
    const fs::path cfg = dir / "bad.json";
    {
        std::ofstream f(cfg);
        f << R"({"sim": {"rabi": 1.0}})";
    }
    CHECK(run("--config " + cfg.string() + " simulate -n 10 -o " + (dir / "x.qtrj").string()) == 1);
    CHECK(run("simulate -n 10 --efficiency 2 -o " + (dir / "x.qtrj").string()) == 1);
    CHECK(run("filter -d " + (dir / "missing.qtrj").string() + " -o " + (dir / "f.csv").string()) == 2);
    {
        std::ofstream f(dir / "garbage.qtrj", std::ios::binary);
        f << "not a dataset";
    }
    CHECK(run("filter -d " + (dir / "garbage.qtrj").string() + " -o " + (dir / "f.csv").string()) == 2);
    CHECK(run("--help") == 0);
}

TEST_CASE("pipeline is reproducible end to end") {
    const fs::path dir = scratch();
    auto pipeline = [&](const std::string &tag) {
        const fs::path d = dir / tag;
        fs::create_directories(d);
        const std::string data = (d / "data.qtrj").string();
        const std::string train = "--hidden 6 --epochs 2 --batch 64 -q";
        REQUIRE(run("--seed 3 --workers 1 simulate -n 1440 -o " + data) == 0);
        REQUIRE(run("--workers 1 filter -d " + data + " -o " + (d / "oracle.csv").string()) == 0);
        REQUIRE(run("--seed 3 train -d " + data + " -o " + (d / "fwd.qrnn").string() + " " + train) == 0);
        REQUIRE(run("--seed 3 train -d " + data + " --direction backward --unknown-fraction 0.2 -o " +
                    (d / "bwd.qrnn").string() + " " + train) == 0);
        REQUIRE(run("--workers 1 predict -m " + (d / "fwd.qrnn").string() + " -d " + data + " -o " +
                    (d / "fwd.csv").string()) == 0);
        REQUIRE(run("--workers 1 predict -m " + (d / "bwd.qrnn").string() + " -d " + data + " -o " +
                    (d / "bwd.csv").string()) == 0);
        REQUIRE(run("smooth --forward " + (d / "fwd.csv").string() + " --backward " + (d / "bwd.csv").string() +
                    " -o " + (d / "smooth.csv").string()) == 0);
        REQUIRE(run("validate -p " + (d / "smooth.csv").string() + " -d " + data + " -o " +
                    (d / "calib.json").string()) == 0);
        REQUIRE(run("estimate -p " + (d / "oracle.csv").string() + " -o " + (d / "params.json").string()) == 0);
        REQUIRE(run("--seed 3 --workers 1 tomography --resamples 200 -m " + (d / "bwd.qrnn").string() + " -d " +
                    data + " -o " + (d / "tomo.json").string()) == 0);
        return d;
    };
    const fs::path a = pipeline("run_a");
    const fs::path b = pipeline("run_b");
    for (const char *f : {"data.qtrj", "oracle.csv", "fwd.qrnn", "bwd.qrnn", "fwd.qrnn.history.csv", "smooth.csv",
                          "calib.json", "calib.json.bins.csv", "params.json", "params.json.drift.csv", "tomo.json"}) {
        const std::string name = f;
        CAPTURE(name);
        CHECK(slurp(a / f) == slurp(b / f));
        CHECK(!slurp(a / f).empty());
    }
    const auto calib = load_json(a / "calib.json");
    CHECK(calib.contains("forward"));
    CHECK(calib.contains("backward"));
    const auto params = load_json(a / "params.json");
    CHECK(params.at("rabi_freq").at("value").get<double>() > 0.0);
    CHECK(load_json(a / "tomo.json").contains("ci95"));

    // Prediction with a forward model cannot drive tomography.
    CHECK(run("tomography -m " + (a / "fwd.qrnn").string() + " -d " + (a / "data.qtrj").string() + " -o " +
              (dir / "t.json").string()) == 1);
}
