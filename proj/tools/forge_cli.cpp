// Command-line front end. Talks to the library only through forge.h.
#include "forge/forge.h"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitFailure = 3;

struct Owned {
    char* p = nullptr;
    ~Owned() { forge_free(p); }
    char** out() { return &p; }
    std::string str() const { return p ? p : ""; }
};

struct ModelHandle {
    forge_model* m = nullptr;
    ~ModelHandle() { forge_model_destroy(m); }
};

int exit_code(forge_status s) {
    switch (s) {
        case FORGE_OK:
            return 0;
        case FORGE_E_VALIDATION:
        case FORGE_E_INVALID:
        case FORGE_E_UNKNOWN_TOKEN:
        case FORGE_E_UNDEFINED_SCORE:
            return kExitValidation;
        default:
            return kExitFailure;
    }
}

int check(forge_status s) {
    if (s != FORGE_OK) std::cerr << "forge: " << forge_last_error() << "\n";
    return exit_code(s);
}

std::vector<double> parse_thresholds(const std::string& text) {
    std::vector<double> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        std::size_t used = 0;
        out.push_back(std::stod(item, &used));
        if (used != item.size()) throw CLI::ValidationError("--thresholds", "cannot parse '" + item + "'");
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"forge: moment editing, curation and retrieval evaluation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", forge_version());

    std::string config_path;
    std::optional<std::uint64_t> seed;
    int jobs = 0;
    app.add_option("--config", config_path, "pipeline config (INI)");
    app.add_option("--seed", seed, "override the run seed");
    app.add_option("--jobs", jobs, "worker threads per stage")->check(CLI::NonNegativeNumber);

    int rc = 0;
    forge_schedule sched = forge_default_schedule();
    auto add_schedule = [&](CLI::App* sub) {
        sub->add_option("--timesteps", sched.timesteps, "diffusion timesteps")->capture_default_str();
        sub->add_option("--beta-start", sched.beta_start)->capture_default_str();
        sub->add_option("--beta-end", sched.beta_end)->capture_default_str();
    };

    // frames score
    auto* frames = app.add_subcommand("frames", "frame scoring and selection")->require_subcommand(1);
    auto* frames_score = frames->add_subcommand("score", "score frames and optionally select the best m");
    std::string frames_in;
    int select = 0;
    bool raw_phi = false;
    frames_score->add_option("--in", frames_in, "frame directory or packed file")->required();
    frames_score->add_option("--select", select, "number of frames to select")->check(CLI::NonNegativeNumber);
    frames_score->add_flag("--raw-phi", raw_phi, "sum unnormalized components");
    frames_score->callback([&] {
        Owned out;
        rc = check(forge_frames_score(frames_in.c_str(), select, raw_phi, out.out()));
        if (rc == 0) std::cout << out.str() << "\n";
    });

    // train
    auto* train = app.add_subcommand("train", "stage-1 and stage-2 training on one moment");
    forge_train_params tp = forge_default_train_params();
    std::string moment, classes, source_prompt, instance_prompt, class_prompt, ckpt_out, token = "[v]";
    int embed_dim = 32;
    train->add_option("--moment", moment, "moment frames")->required();
    train->add_option("--classes", classes, "class images")->required();
    train->add_option("--source-prompt", source_prompt, "stage-2 prompt, e.g. \"[v] a person opens the door\"")->required();
    train->add_option("--instance-prompt", instance_prompt);
    train->add_option("--class-prompt", class_prompt);
    train->add_option("--token", token, "instance token")->capture_default_str();
    train->add_option("--select", tp.select)->capture_default_str();
    train->add_flag("--raw-phi", tp.raw_phi);
    train->add_option("--stage1-steps", tp.stage1_steps)->capture_default_str();
    train->add_option("--stage2-steps", tp.stage2_steps)->capture_default_str();
    train->add_option("--lr", tp.learning_rate)->capture_default_str();
    train->add_option("--embed-dim", embed_dim)->capture_default_str();
    train->add_option("--out", ckpt_out, "checkpoint path")->required();
    add_schedule(train);
    train->callback([&] {
        const std::uint64_t s = seed.value_or(0);
        ModelHandle h;
        if ((rc = check(forge_model_create(1, embed_dim, token.c_str(), s, &h.m)))) return;
        tp.moment_input = moment.c_str();
        tp.class_input = classes.c_str();
        tp.source_prompt = source_prompt.c_str();
        tp.instance_prompt = instance_prompt.empty() ? nullptr : instance_prompt.c_str();
        tp.class_prompt = class_prompt.empty() ? nullptr : class_prompt.c_str();
        tp.seed = s;
        Owned report;
        if ((rc = check(forge_model_train_moment(h.m, &tp, &sched, report.out())))) return;
        if ((rc = check(forge_model_save(h.m, ckpt_out.c_str())))) return;
        std::cout << report.str() << "\n";
    });

    // edit
    auto* edit = app.add_subcommand("edit", "invert a moment and resample it under an edit prompt");
    std::string edit_ckpt, edit_out, edit_source, edit_prompt;
    forge_edit_params ep{};
    ep.inversion_steps = 50;
    ep.sampling_steps = 50;
    bool literal = false, null_inv = false;
    edit->add_option("--moment", moment, "moment frames")->required();
    edit->add_option("--source-prompt", edit_source)->required();
    edit->add_option("--edit-prompt", edit_prompt)->required();
    edit->add_option("--ckpt", edit_ckpt)->required();
    edit->add_option("--steps-invert", ep.inversion_steps)->capture_default_str();
    edit->add_option("--steps-sample", ep.sampling_steps)->capture_default_str();
    edit->add_option("--out", edit_out, "output directory")->required();
    edit->add_flag("--literal-inversion", literal, "literal per-step-alpha inversion");
    edit->add_flag("--null-inversion", null_inv, "invert under the empty prompt");
    add_schedule(edit);
    edit->callback([&] {
        ModelHandle h;
        if ((rc = check(forge_model_load(edit_ckpt.c_str(), &h.m)))) return;
        ep.moment_input = moment.c_str();
        ep.source_prompt = edit_source.c_str();
        ep.edit_prompt = edit_prompt.c_str();
        ep.seed = seed.value_or(0);
        ep.literal_inversion = literal;
        ep.null_prompt_inversion = null_inv;
        ep.out_dir = edit_out.c_str();
        Owned prov;
        rc = check(forge_model_edit(h.m, &ep, &sched, prov.out()));
        if (rc == 0) std::cout << prov.str() << "\n";
    });

    // curate
    auto* curate = app.add_subcommand("curate", "candidate selection")->require_subcommand(1);
    std::string pool, scores, pool_out;
    std::size_t k = 0, l = 0;
    bool per_sample = false;
    auto* quant = curate->add_subcommand("quant", "keep the k best candidates by H-score");
    quant->add_option("--pool", pool)->required();
    quant->add_option("--k", k)->required();
    quant->add_option("--out", pool_out)->required();
    quant->callback([&] { rc = check(forge_curate_quant(pool.c_str(), k, pool_out.c_str())); });
    auto* qual = curate->add_subcommand("qual", "keep the l candidates the retrieval model handles worst");
    qual->add_option("--pool", pool)->required();
    qual->add_option("--scores", scores, "CSV id,score")->required();
    qual->add_option("--l", l)->required();
    qual->add_option("--out", pool_out)->required();
    qual->callback([&] { rc = check(forge_curate_qual(pool.c_str(), scores.c_str(), l, pool_out.c_str())); });
    auto* report = curate->add_subcommand("report", "mean fidelities and H-score of a pool");
    report->add_option("--pool", pool)->required();
    report->add_flag("--per-sample", per_sample, "average per-item harmonic scores");
    report->callback([&] {
        Owned out;
        rc = check(forge_pool_report(pool.c_str(), per_sample, out.out()));
        if (rc == 0) std::cout << out.str() << "\n";
    });

    // assemble
    auto* assemble = app.add_subcommand("assemble", "build a video variant around an edited moment");
    std::string video, edited, query, mode = "replace", placement = "after", video_out;
    std::size_t moment_index = 0;
    assemble->add_option("--video", video)->required();
    assemble->add_option("--moment", moment_index)->required();
    assemble->add_option("--edited", edited, "edited frames")->required();
    assemble->add_option("--query", query, "annotation for the edited moment")->required();
    assemble->add_option("--mode", mode)->check(CLI::IsMember({"replace", "inject"}))->capture_default_str();
    assemble->add_option("--placement", placement)->check(CLI::IsMember({"after", "before"}))->capture_default_str();
    assemble->add_option("--out", video_out)->required();
    assemble->callback([&] {
        const auto m = mode == "replace" ? FORGE_REPLACE : placement == "after" ? FORGE_INJECT_AFTER : FORGE_INJECT_BEFORE;
        rc = check(forge_assemble(video.c_str(), moment_index, edited.c_str(), query.c_str(), m, video_out.c_str()));
    });

    // eval
    auto* eval = app.add_subcommand("eval", "R@n at IoU thresholds and mIoU");
    std::string pred, gt, thresholds = "0.3,0.5,0.7";
    std::size_t rank = 1;
    bool as_json = false;
    eval->add_option("--pred", pred)->required();
    eval->add_option("--gt", gt)->required();
    eval->add_option("--thresholds", thresholds)->capture_default_str();
    eval->add_option("--rank", rank)->capture_default_str();
    eval->add_flag("--json", as_json, "print JSON instead of a table");
    eval->callback([&] {
        const auto th = parse_thresholds(thresholds);
        Owned js, table;
        rc = check(forge_eval(pred.c_str(), gt.c_str(), th.data(), th.size(), rank, js.out(), table.out()));
        if (rc == 0) std::cout << (as_json ? js.str() + "\n" : table.str());
    });

    // split
    auto* split = app.add_subcommand("split", "novel-word generation/test split");
    std::string corpus, vocab, split_out;
    split->add_option("--corpus", corpus)->required();
    split->add_option("--vocab", vocab, "annotations defining the training vocabulary")->required();
    split->add_option("--out", split_out)->required();
    split->callback([&] {
        Owned out;
        rc = check(forge_novel_word_split(corpus.c_str(), vocab.c_str(), seed.value_or(0), split_out.c_str(), out.out()));
        if (rc == 0) std::cout << out.str() << "\n";
    });

    // run / validate
    forge_run_overrides ov{};
    std::string run_out, until;
    bool force = false;
    auto overrides = [&] {
        ov.has_seed = seed.has_value();
        ov.seed = seed.value_or(0);
        ov.jobs = jobs;
        ov.output = run_out.empty() ? nullptr : run_out.c_str();
        ov.force = force;
        ov.until = until.empty() ? nullptr : until.c_str();
    };
    auto* run = app.add_subcommand("run", "full pipeline");
    run->add_option("--out", run_out, "override paths.output");
    run->add_flag("--force", force, "rerun stages even when up to date");
    run->add_option("--until", until, "stop after this stage")
        ->check(CLI::IsMember({"split", "frames", "train", "edit", "score", "select", "assemble", "eval"}));
    run->callback([&] {
        if (config_path.empty()) throw CLI::RequiredError("--config");
        overrides();
        Owned manifest;
        rc = check(forge_run_pipeline(config_path.c_str(), &ov, manifest.out()));
        if (rc == 0) std::cout << manifest.str() << "\n";
    });
    auto* validate = app.add_subcommand("validate", "check a config without running anything");
    validate->callback([&] {
        if (config_path.empty()) throw CLI::RequiredError("--config");
        overrides();
        Owned errors;
        const auto s = forge_validate_config(config_path.c_str(), &ov, errors.out());
        if (s == FORGE_OK) {
            std::cout << "ok\n";
        } else if (s == FORGE_E_VALIDATION) {
            std::cerr << forge_last_error() << "\n";
        } else {
            check(s);
        }
        rc = exit_code(s);
    });

    // demo
    auto* demo = app.add_subcommand("demo", "write the synthetic demo dataset");
    std::string demo_out;
    demo->add_option("--out", demo_out)->required();
    demo->callback([&] { rc = check(forge_demo_data(demo_out.c_str(), seed.value_or(7))); });

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();
    for (auto* sub : {frames_score, quant, qual, report}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "forge: " << e.what() << "\n";
        return kExitValidation;
    }
    return rc;
}
