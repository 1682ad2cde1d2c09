// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include "support/oracles.hpp"
#include "uws/cli.hpp"
#include "uws/container.hpp"
#include "uws/ensemble.hpp"

#include <fstream>
#include <sstream>

#ifndef UWS_FIXTURE_DIR
#error "UWS_FIXTURE_DIR must be defined"
#endif

namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = uws::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

const std::string fixtures = UWS_FIXTURE_DIR;

}  // namespace

TEST_CASE("extract on the bundled fixture") {
    const auto dir = oracle::scratch_dir("cli_extract");
    const auto r = run({"extract", "--models", fixtures + "/model_*.uws", "--out", (dir / "s.uws").string(),
                        "--report", (dir / "scree.csv").string()});
    INFO(r.err);
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "s.uws"));
    const std::string csv = slurp(dir / "scree.csv");
    CHECK(csv.find("# policy=cumulative_variance(0.95)") != std::string::npos);
    CHECK(csv.find("component_index,layer,sigma,ratio,cumulative") != std::string::npos);
    const auto u = uws::load_subspace(dir / "s.uws");
    CHECK(u.provenance.size() == 3);
    CHECK_FALSE(fs::exists(dir / "s.uws.tmp"));
}

TEST_CASE("bad magic exits 2 and names offset 0") {
    const auto dir = oracle::scratch_dir("cli_bad");
    std::ofstream(dir / "bad.uws") << "UWSX0000000000000000";
    const auto r = run({"extract", "--models", (dir / "bad.uws").string(), "--out", (dir / "s.uws").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("offset 0") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "s.uws"));
}

TEST_CASE("usage errors exit 1 and name the flag") {
    auto r = run({"extract", "--models", "x", "--out", "y", "--bogus"});
    CHECK(r.code == 1);
    CHECK(r.err.find("--bogus") != std::string::npos);
    r = run({"extract", "--out", "y"});
    CHECK(r.code == 1);
    CHECK(r.err.find("--models") != std::string::npos);
    r = run({"extract", "--models", "x", "--out", "y", "--tau", "0.9", "--fixed-k", "3"});
    CHECK(r.code == 1);
    r = run({});
    CHECK(r.code == 1);
    r = run({"memcalc"});
    CHECK(r.code == 1);
}

TEST_CASE("every subcommand documents its flags") {
    const std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> cases{
        {{"extract"}, {"--models", "--out", "--report", "--tau", "--eigen-floor", "--fixed-k", "--hard-threshold",
                       "--order", "--exclude-layers", "--center"}},
        {{"scree"}, {"--subspace", "--out", "--top-n"}},
        {{"project"}, {"--subspace", "--model", "--out"}},
        {{"reconstruct"}, {"--subspace", "--coeffs", "--out"}},
        {{"merge"}, {"--subspace", "--models", "--weights", "--out"}},
        {{"adapt"}, {"--subspace", "--layer", "--x", "--y", "--method", "--lr", "--epochs", "--out", "--report"}},
        {{"memcalc"}, {"--t", "--per-model", "--basis", "--coeffs", "--mean"}},
        {{"theory", "converge"}, {"--d", "--k", "--t-grid", "--trials", "--eta", "--b", "--delta", "--seed", "--out"}},
        {{"theory", "bounds"}, {"--b", "--delta", "--t", "--eta-bar", "--eta2-bar", "--gamma-k", "--c1", "--c2"}},
        {{"theory", "dk-check"}, {"--d", "--k", "--perturb", "--trials", "--seed"}},
    };
    for (const auto& [cmd, flags] : cases) {
        auto args = cmd;
        args.push_back("--help");
        const auto r = run(args);
        CHECK(r.code == 0);
        for (const auto& f : flags) {
            INFO(cmd.back() << " " << f);
            CHECK(r.out.find(f) != std::string::npos);
        }
    }
}

TEST_CASE("project, reconstruct and merge through files") {
    const auto dir = oracle::scratch_dir("cli_pipeline");
    const std::string s = (dir / "s.uws").string();
    REQUIRE(run({"extract", "--models", fixtures + "/model_*.uws", "--out", s, "--fixed-k", "2"}).code == 0);
    const std::string m0 = fixtures + "/model_000.uws";
    REQUIRE(run({"project", "--subspace", s, "--model", m0, "--out", (dir / "c.uws").string()}).code == 0);
    REQUIRE(run({"reconstruct", "--subspace", s, "--coeffs", (dir / "c.uws").string(), "--out",
                 (dir / "r.uws").string()})
                .code == 0);
    const auto u = uws::load_subspace(s);
    const auto original = uws::load_weights(m0);
    const auto expected = uws::reconstruct_model(u, uws::project_model(u, original));
    const auto got = uws::load_weights(dir / "r.uws");
    for (const auto& l : expected.layers) CHECK(got.layer(l.name).values == l.values);

    auto r = run({"merge", "--subspace", s, "--models", fixtures + "/model_*.uws", "--weights", "0.5,0.25,0.25",
                  "--out", (dir / "m.uws").string(), "--report", (dir / "m.json").string()});
    INFO(r.err);
    CHECK(r.code == 0);
    CHECK(slurp(dir / "m.json").find("coefficient_average") != std::string::npos);
    r = run({"merge", "--subspace", s, "--models", fixtures + "/model_*.uws", "--weights", "0.5,0.5", "--out",
             (dir / "m2.uws").string()});
    CHECK(r.code == 2);
}

TEST_CASE("adapt from csv files") {
    const auto dir = oracle::scratch_dir("cli_adapt");
    const std::string s = (dir / "s.uws").string();
    REQUIRE(run({"extract", "--models", fixtures + "/model_*.uws", "--out", s, "--stacking", "flatten",
                 "--keep-model-mode", "--fixed-k", "2"})
                .code == 0);
    const auto u = uws::load_subspace(s);
    const auto& ls = u.layer("layer1");
    std::mt19937_64 rng(1);
    const uws::Matrix x = oracle::gaussian(40, static_cast<Eigen::Index>(ls.cols), rng);
    const uws::Matrix y = x * uws::reconstruct_model(u, uws::project_model(u, uws::load_weights(fixtures + "/model_001.uws")))
                                  .layer("layer1")
                                  .values.transpose();
    const auto write_csv = [](const fs::path& p, const uws::Matrix& m) {
        std::ofstream out(p);
        out.precision(17);
        out << "# header comment\n";
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
            out << "\n";
        }
    };
    write_csv(dir / "x.csv", x);
    write_csv(dir / "y.csv", y);
    for (const std::string method : {"closed-form", "gd"}) {
        const auto r = run({"adapt", "--subspace", s, "--layer", "layer1", "--x", (dir / "x.csv").string(), "--y",
                            (dir / "y.csv").string(), "--method", method, "--epochs", "5000", "--out",
                            (dir / ("c_" + method + ".uws")).string(), "--report", (dir / "fit.csv").string()});
        INFO(r.err);
        CHECK(r.code == 0);
        const std::string fit = slurp(dir / "fit.csv");
        CHECK(fit.find("# trainable_params=2") != std::string::npos);
        CHECK(fit.find("epoch,loss") != std::string::npos);
    }
    std::ofstream(dir / "bad.csv") << "1,2\n3\n";
    CHECK(run({"adapt", "--subspace", s, "--layer", "layer1", "--x", (dir / "bad.csv").string(), "--y",
               (dir / "y.csv").string(), "--out", (dir / "c.uws").string()})
              .code == 2);
    CHECK(run({"adapt", "--subspace", s, "--layer", "layer1", "--x", (dir / "x.csv").string(), "--y",
               (dir / "y.csv").string(), "--method", "sgd", "--out", (dir / "c.uws").string()})
              .code == 1);
}

TEST_CASE("memcalc and theory commands") {
    auto r = run({"memcalc", "--t", "500", "--per-model", "131072", "--basis", "262144", "--coeffs", "512"});
    CHECK(r.code == 0);
    CHECK(r.out.find("126.4822") != std::string::npos);
    r = run({"memcalc", "--presets"});
    CHECK(r.code == 0);
    CHECK(r.out.find("mistral-lora-19x") != std::string::npos);
    CHECK(r.out.find("trainable_params=9600") != std::string::npos);

    r = run({"theory", "bounds", "--b", "1", "--delta", "0.5", "--t", "100", "--eta-bar", "0.1", "--eta2-bar", "0.01",
             "--gamma-k", "0.5"});
    CHECK(r.code == 0);
    CHECK(r.out.find("op_bound=0.29326") != std::string::npos);
    r = run({"theory", "bounds", "--gamma-k", "0"});
    CHECK(r.code == 2);

    r = run({"theory", "dk-check", "--d", "8", "--k", "2", "--perturb", "0.1", "--trials", "50", "--seed", "1"});
    CHECK(r.code == 0);
    CHECK(r.out.find("violations=0") != std::string::npos);
}

TEST_CASE("theory converge is deterministic") {
    const auto dir = oracle::scratch_dir("cli_converge");
    const std::vector<std::string> base{"theory", "converge", "--d", "16", "--k", "2", "--t-grid", "10,20,40",
                                        "--trials", "5", "--seed", "7"};
    auto a = base, b = base;
    a.insert(a.end(), {"--out", (dir / "a.csv").string(), "--json", (dir / "a.json").string()});
    b.insert(b.end(), {"--out", (dir / "b.csv").string(), "--json", (dir / "b.json").string()});
    const auto ra = run(a), rb = run(b);
    REQUIRE(ra.code == 0);
    REQUIRE(rb.code == 0);
    CHECK(ra.out == rb.out);
    CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
    CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
    CHECK(slurp(dir / "a.csv").find("T,trial,op_error,subspace_error,op_bound,subspace_bound") != std::string::npos);
    CHECK(slurp(dir / "a.csv").find("# seed=7") != std::string::npos);
}

TEST_CASE("scree command writes full data and caps the display") {
    const auto dir = oracle::scratch_dir("cli_scree");
    const std::string s = (dir / "s.uws").string();
    REQUIRE(run({"extract", "--models", fixtures + "/model_*.uws", "--out", s}).code == 0);
    const auto r = run({"scree", "--subspace", s, "--out", (dir / "scree.json").string(), "--format", "json",
                        "--top-n", "2"});
    CHECK(r.code == 0);
    CHECK(r.out.find("showing 2") != std::string::npos);
    const std::string json = slurp(dir / "scree.json");
    CHECK(json.find("\"ratios\"") != std::string::npos);
}
