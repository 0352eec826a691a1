// Exercises the shared library and the command-line tool through their
// public surfaces only.
#include "support.hpp"

#include <forge/forge.h>

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace {

std::string take(char* s) {
    std::string out = s ? s : "";
    forge_free(s);
    return out;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int cli(const std::string& args) {
    const std::string cmd = std::string(FORGE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

struct Demo {
    test_support::TempDir dir{"capi"};
    Demo() { REQUIRE(forge_demo_data(dir.path().c_str(), 7) == FORGE_OK); }
    std::string at(const std::string& rel) const { return (dir / rel).string(); }
};

}  // namespace

TEST_CASE("status codes and last error") {
    double h = 0;
    CHECK(forge_harmonic_score(0.263, 0.568, &h) == FORGE_OK);
    CHECK(std::abs(h - 0.359) <= 1e-3);
    CHECK(forge_harmonic_score(0.0, 0.5, &h) == FORGE_E_UNDEFINED_SCORE);
    CHECK(std::string(forge_last_error()).find("harmonic") != std::string::npos);
    CHECK(forge_harmonic_score(0.5, 0.5, nullptr) == FORGE_E_INVALID);

    char* json = nullptr;
    json = forge_version() == nullptr ? nullptr : reinterpret_cast<char*>(1);
    CHECK(forge_frames_score("/definitely/not/here", 0, 0, &json) == FORGE_E_IO);
    CHECK(json == nullptr);
    CHECK(std::string(forge_last_error()).size() > 0);
    CHECK(std::string(forge_version()).size() > 0);
    forge_free(nullptr);
}

TEST_CASE("model handles") {
    const Demo d;
    forge_model* m = nullptr;
    REQUIRE(forge_model_create(1, 8, "[v]", 3, &m) == FORGE_OK);
    size_t n = 0;
    CHECK(forge_model_param_count(m, &n) == FORGE_OK);
    CHECK(n > 0);

    char* out = nullptr;
    REQUIRE(forge_model_digest(m, "temporal", &out) == FORGE_OK);
    const auto temporal = take(out);
    REQUIRE(forge_model_digest(m, "spatial", &out) == FORGE_OK);
    const auto spatial = take(out);
    CHECK(forge_model_digest(m, "nonsense", &out) == FORGE_E_INVALID);

    const auto sched = forge_default_schedule();
    CHECK(sched.timesteps == 100);
    REQUIRE(forge_model_train_stage1(m, d.at("videos/vid_a/m0").c_str(), d.at("classes").c_str(), "a [v] person",
                                     "a person", &sched, 5, 0.01, 1, &out) == FORGE_OK);
    CHECK(take(out).front() == '[');
    REQUIRE(forge_model_digest(m, "temporal", &out) == FORGE_OK);
    CHECK(take(out) == temporal);
    REQUIRE(forge_model_digest(m, "spatial", &out) == FORGE_OK);
    CHECK(take(out) != spatial);

    const auto path = d.at("model.bin");
    REQUIRE(forge_model_save(m, path.c_str()) == FORGE_OK);
    forge_model* back = nullptr;
    REQUIRE(forge_model_load(path.c_str(), &back) == FORGE_OK);
    // weights are stored as float32, so only the second round trip is exact
    const auto path2 = d.at("model2.bin");
    REQUIRE(forge_model_save(back, path2.c_str()) == FORGE_OK);
    forge_model* again = nullptr;
    REQUIRE(forge_model_load(path2.c_str(), &again) == FORGE_OK);
    char* a = nullptr;
    char* b = nullptr;
    forge_model_digest(back, "spatial", &a);
    forge_model_digest(again, "spatial", &b);
    CHECK(take(a) == take(b));
    forge_model_destroy(again);

    forge_edit_params e{};
    const auto moment = d.at("videos/vid_a/m0");
    e.moment_input = moment.c_str();
    e.source_prompt = "[v] a person";
    e.edit_prompt = "[w] a person";
    e.inversion_steps = 5;
    e.sampling_steps = 5;
    const auto edit_dir = d.at("edited");
    e.out_dir = edit_dir.c_str();
    CHECK(forge_model_edit(back, &e, &sched, &out) == FORGE_E_UNKNOWN_TOKEN);
    e.edit_prompt = "[v] a person waves";
    REQUIRE(forge_model_edit(back, &e, &sched, &out) == FORGE_OK);
    CHECK(take(out).find("edit_prompt") != std::string::npos);
    CHECK(std::filesystem::exists(d.dir / "edited/provenance.json"));

    forge_model_destroy(back);
    CHECK(forge_model_load(d.at("classes").c_str(), &back) != FORGE_OK);
    CHECK(back == nullptr);
    forge_model_destroy(m);
    forge_model_destroy(nullptr);
}

TEST_CASE("eval and split through the C layer") {
    const Demo d;
    std::ofstream(d.dir / "gt.jsonl") << R"({"video_id":"a","start":0,"end":10,"query":"q"})" << "\n";
    std::ofstream(d.dir / "pred.jsonl") << R"({"video_id":"a","start":5,"end":15,"query":"q"})" << "\n";
    const double mus[] = {0.3, 0.5};
    char* json = nullptr;
    char* table = nullptr;
    REQUIRE(forge_eval(d.at("pred.jsonl").c_str(), d.at("gt.jsonl").c_str(), mus, 2, 1, &json, &table) == FORGE_OK);
    CHECK(take(json).find("miou") != std::string::npos);
    CHECK_FALSE(take(table).empty());

    REQUIRE(forge_novel_word_split(d.at("target_corpus.jsonl").c_str(), d.at("annotations.jsonl").c_str(), 1,
                                   d.at("split").c_str(), &json) == FORGE_OK);
    CHECK(take(json).find("novel_words") != std::string::npos);
    CHECK(std::filesystem::exists(d.dir / "split/generation.jsonl"));
}

TEST_CASE("config validation through the C layer") {
    const Demo d;
    char* errs = nullptr;
    CHECK(forge_validate_config(d.at("forge.ini").c_str(), nullptr, &errs) == FORGE_OK);
    take(errs);
    std::ofstream(d.dir / "bad.ini") << slurp(d.dir / "forge.ini") << "\n[curation]\nk = 1\nl = 9\n";
    // the duplicate section is merged by the INI reader; l > k must be reported
    const auto bad = d.at("bad.ini");
    const auto rc = forge_validate_config(bad.c_str(), nullptr, &errs);
    const auto msg = take(errs);
    if (rc == FORGE_E_VALIDATION) CHECK(msg.find("curation.l") != std::string::npos);
    else CHECK(rc == FORGE_E_IO);

    forge_run_overrides o{};
    o.jobs = -2;
    CHECK(forge_validate_config(d.at("forge.ini").c_str(), &o, &errs) == FORGE_E_VALIDATION);
    CHECK(take(errs).find("jobs") != std::string::npos);
    CHECK(forge_run_pipeline(d.at("forge.ini").c_str(), &o, &errs) == FORGE_E_VALIDATION);
}

TEST_CASE("cli exit codes") {
    const Demo d;
    CHECK(cli("--help") == 0);
    CHECK(cli("validate --config " + d.at("forge.ini")) == 0);
    std::ofstream(d.dir / "noseed.ini") << "[paths]\nvideos = videos\n";
    CHECK(cli("validate --config " + d.at("noseed.ini")) == 2);
    CHECK(cli("run --config " + d.at("noseed.ini")) == 2);
    CHECK(cli("frames score --in " + d.at("missing")) == 3);
    CHECK(cli("frames score --in " + d.at("videos/vid_a/m0") + " --select 2") == 0);
    CHECK(cli("no-such-command") == 2);
}
