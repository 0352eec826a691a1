#include "support.hpp"

#include "forge/demo.hpp"
#include "forge/error.hpp"
#include "forge/pipeline.hpp"

#include <doctest.h>

#include <fstream>

using namespace forge;
namespace fs = std::filesystem;

namespace {

// Demo data with short training so the whole run takes a few seconds.
struct Quick {
    test_support::TempDir dir{"pipe"};
    PipelineConfig config;
    Quick() {
        write_demo_data(dir.path());
        config = load_config(dir / "forge.ini");
        config.stage1_steps = 10;
        config.stage2_steps = 10;
        config.inversion_steps = 10;
        config.sampling_steps = 10;
    }
    PipelineConfig at(const std::string& out) const {
        auto c = config;
        c.paths.output = dir / out;
        return c;
    }
};

std::vector<std::string> digests(const RunManifest& m) {
    std::vector<std::string> out;
    for (const auto& s : m.stages) out.push_back(s.output_digest);
    return out;
}

bool mentions(const std::vector<std::string>& errs, const std::string& what) {
    for (const auto& e : errs)
        if (e.find(what) != std::string::npos) return true;
    return false;
}

}  // namespace

TEST_CASE("config loading and validation") {
    test_support::TempDir dir("cfg");
    write_demo_data(dir.path());
    const auto c = load_config(dir / "forge.ini");
    CHECK(c.parse_errors.empty());
    CHECK(validate_config(c).empty());
    CHECK(c.paths.videos.is_absolute());
    CHECK(c.seed == 1234u);

    auto bad = c;
    bad.k = 2;
    bad.l = 3;
    bad.learning_rate = 0;
    bad.seed.reset();
    bad.thresholds = {0.5, 1.5};
    bad.paths.classes = dir / "nowhere";
    const auto errs = validate_config(bad);
    CHECK(mentions(errs, "curation.l"));
    CHECK(mentions(errs, "learning_rate"));
    CHECK(mentions(errs, "run.seed"));
    CHECK(mentions(errs, "thresholds"));
    CHECK(mentions(errs, "paths.classes"));
    CHECK(errs.size() >= 5);

    std::ofstream(dir / "broken.ini") << "[paths]\nvideos = videos\n[curation]\nmode = shuffle\nk = many\n";
    const auto b = load_config(dir / "broken.ini");
    CHECK(b.parse_errors.size() >= 2);
    CHECK_FALSE(validate_config(b).empty());
    CHECK_THROWS_AS(run_pipeline(b), ValidationError);
    CHECK_THROWS_AS(load_config(dir / "missing.ini"), IoError);
}

TEST_CASE("config hash ignores paths and jobs") {
    test_support::TempDir dir("hash");
    write_demo_data(dir.path());
    const auto c = load_config(dir / "forge.ini");
    auto moved = c;
    moved.paths.output = "/elsewhere";
    moved.jobs = 8;
    CHECK(config_hash(moved) == config_hash(c));
    auto seeded = c;
    seeded.seed = 99;
    CHECK(config_hash(seeded) != config_hash(c));
    auto lr = c;
    lr.learning_rate = 0.02;
    CHECK(config_hash(lr) != config_hash(c));
}

TEST_CASE("runs are reproducible and resumable") {
    // doctest re-enters the case once per subcase; run the baseline only once
    static const Quick q;
    static const auto first = run_pipeline(q.at("r1"));
    REQUIRE(first.stages.size() == pipeline_stages().size());
    for (std::size_t i = 0; i < first.stages.size(); ++i) {
        CHECK(first.stages[i].name == pipeline_stages()[i]);
        CHECK_FALSE(first.stages[i].skipped);
    }
    CHECK(fs::exists(q.dir / "r1/manifest.json"));
    CHECK(fs::exists(q.dir / "r1/eval/metrics.json"));

    SUBCASE("second run skips everything") {
        const auto again = run_pipeline(q.at("r1"));
        for (const auto& s : again.stages) CHECK(s.skipped);
        CHECK(digests(again) == digests(first));
    }
    SUBCASE("fresh directory and more jobs give the same digests") {
        auto c = q.at("r2");
        c.jobs = 3;
        CHECK(digests(run_pipeline(c)) == digests(first));
    }
    SUBCASE("another seed changes the outputs") {
        auto c = q.at("r3");
        c.seed = 4321;
        CHECK(digests(run_pipeline(c)) != digests(first));
    }
    SUBCASE("tampered stage output is rebuilt") {
        std::ofstream(q.dir / "r1/edit/stray.txt") << "x";
        const auto again = run_pipeline(q.at("r1"));
        CHECK(again.stages[2].skipped);
        CHECK_FALSE(again.stages[3].skipped);
        CHECK(again.stages[3].output_digest == first.stages[3].output_digest);
        CHECK(again.stages[4].skipped);
        CHECK_FALSE(fs::exists(q.dir / "r1/edit/stray.txt"));
    }
    SUBCASE("force reruns") {
        RunOptions o;
        o.force = true;
        const auto again = run_pipeline(q.at("r1"), o);
        for (const auto& s : again.stages) CHECK_FALSE(s.skipped);
        CHECK(digests(again) == digests(first));
    }
}

TEST_CASE("partial runs") {
    const Quick q;
    RunOptions o;
    o.until = "frames";
    const auto part = run_pipeline(q.at("p"), o);
    CHECK(part.stages.size() == 2);
    CHECK_FALSE(fs::exists(q.dir / "p/train"));
    const auto rest = run_pipeline(q.at("p"));
    CHECK(rest.stages[0].skipped);
    CHECK(rest.stages[1].skipped);
    CHECK_FALSE(rest.stages[2].skipped);

    o.until = "nonsense";
    CHECK_THROWS_AS(run_pipeline(q.at("p"), o), InvalidInput);
}

TEST_CASE("stage failures name the stage") {
    Quick q;
    auto c = q.at("f");
    c.k = 500;  // valid config, but more than the demo pool holds
    c.l = 4;
    try {
        run_pipeline(c);
        FAIL("expected a stage error");
    } catch (const StageError& e) {
        CHECK(e.stage() == "select");
    }
    // completed stages survive for the next attempt
    CHECK(fs::exists(q.dir / "f/score/_stage.json"));
}
