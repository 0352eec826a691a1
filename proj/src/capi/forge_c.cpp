#include "forge/forge.h"

#include "forge/curation.hpp"
#include "forge/demo.hpp"
#include "forge/digest.hpp"
#include "forge/editor.hpp"
#include "forge/error.hpp"
#include "forge/frames.hpp"
#include "forge/pipeline.hpp"
#include "forge/vmr_eval.hpp"

#include <json.hpp>

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>

struct forge_model {
    forge::DenoiserModel model;
};

namespace {

using json = nlohmann::json;

thread_local std::string last_error;

template <typename F>
forge_status guard(F&& f) {
    try {
        last_error.clear();
        f();
        return FORGE_OK;
    } catch (const forge::ValidationError& e) {
        last_error = e.what();
        return FORGE_E_VALIDATION;
    } catch (const forge::StageError& e) {
        last_error = e.what();
        return FORGE_E_STAGE;
    } catch (const forge::UnknownTokenError& e) {
        last_error = e.what();
        return FORGE_E_UNKNOWN_TOKEN;
    } catch (const forge::UndefinedScoreError& e) {
        last_error = e.what();
        return FORGE_E_UNDEFINED_SCORE;
    } catch (const forge::DivergenceError& e) {
        last_error = e.what();
        return FORGE_E_DIVERGENCE;
    } catch (const forge::IoError& e) {
        last_error = e.what();
        return FORGE_E_IO;
    } catch (const forge::InvalidInput& e) {
        last_error = e.what();
        return FORGE_E_INVALID;
    } catch (const std::filesystem::filesystem_error& e) {
        last_error = e.what();
        return FORGE_E_IO;
    } catch (const std::exception& e) {
        last_error = e.what();
        return FORGE_E_INTERNAL;
    } catch (...) {
        last_error = "unknown failure";
        return FORGE_E_INTERNAL;
    }
}

char* dup(const std::string& s) {
    char* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (!p) throw std::bad_alloc();
    std::memcpy(p, s.c_str(), s.size() + 1);
    return p;
}

// Out-pointers are nulled up front so a failed call never leaves a stale value.
template <typename... P>
void clear(P**... outs) {
    ((outs ? void(*outs = nullptr) : void()), ...);
}

void put(char** out, const std::string& s) {
    if (out) *out = dup(s);
}

std::string str(const char* s, const char* what) {
    if (!s) throw forge::InvalidInput(std::string(what) + " must not be null");
    return s;
}

template <typename T>
T& ref(T* p, const char* what) {
    if (!p) throw forge::InvalidInput(std::string(what) + " must not be null");
    return *p;
}

forge::NoiseSchedule schedule(const forge_schedule* s) {
    const auto d = s ? *s : forge_default_schedule();
    return forge::NoiseSchedule(d.timesteps, d.beta_start, d.beta_end);
}

json scores_json(const std::vector<forge::FrameScore>& scores) {
    json arr = json::array();
    for (const auto& s : scores)
        arr.push_back({{"index", s.index},
                       {"dissim_prev", s.dissim_prev},
                       {"dissim_next", s.dissim_next},
                       {"clarity", s.clarity},
                       {"phi", s.phi}});
    return arr;
}

forge::PipelineConfig config_with(const char* path, const forge_run_overrides* o) {
    auto c = forge::load_config(str(path, "config path"));
    if (o) {
        if (o->has_seed) c.seed = o->seed;
        if (o->jobs != 0) c.jobs = o->jobs;
        if (o->output) c.paths.output = o->output;
    }
    return c;
}

}  // namespace

extern "C" {

const char* forge_last_error(void) { return last_error.c_str(); }

const char* forge_version(void) { return FORGE_VERSION; }

void forge_free(char* p) { std::free(p); }

forge_status forge_frames_score(const char* input, int select, int raw_phi, char** out_json) {
    return guard([&] {
        clear(out_json);
        const auto frames = forge::frame_io::load_sequence(str(input, "input"));
        const auto scores = forge::phi_scores(frames, forge::PhiOptions{raw_phi != 0});
        json j{{"frames", frames.size()}, {"scores", scores_json(scores)}, {"selected", json::array()}};
        if (select < 0) throw forge::InvalidInput("select must be nonnegative");
        if (select > 0) j["selected"] = forge::select_top(scores, static_cast<std::size_t>(select));
        put(out_json, j.dump(2));
    });
}

forge_schedule forge_default_schedule(void) { return forge_schedule{100, 1e-4, 2e-2}; }

forge_status forge_model_create(int channels, int embed_dim, const char* instance_token, uint64_t seed,
                                forge_model** out) {
    return guard([&] {
        clear(out);
        auto& dst = ref(out, "out");
        forge::DenoiserConfig c;
        c.channels = channels;
        c.embed_dim = embed_dim;
        c.text_dim = embed_dim;
        c.instance_tokens = {instance_token ? instance_token : "[v]"};
        c.seed = seed;
        dst = new forge_model{forge::DenoiserModel::create(c)};
    });
}

forge_status forge_model_load(const char* path, forge_model** out) {
    return guard([&] {
        clear(out);
        auto& dst = ref(out, "out");
        dst = new forge_model{forge::load_checkpoint(str(path, "path"))};
    });
}

forge_status forge_model_save(const forge_model* model, const char* path) {
    return guard([&] { forge::save_checkpoint(str(path, "path"), ref(model, "model").model); });
}

void forge_model_destroy(forge_model* model) { delete model; }

forge_status forge_model_param_count(const forge_model* model, size_t* out) {
    return guard([&] { ref(out, "out") = ref(model, "model").model.parameter_count(); });
}

forge_status forge_model_digest(const forge_model* model, const char* group, char** out_hex) {
    return guard([&] {
        clear(out_hex);
        const auto g = str(group, "group");
        forge::ParamGroup pg;
        if (g == "spatial")
            pg = forge::ParamGroup::Spatial;
        else if (g == "temporal")
            pg = forge::ParamGroup::Temporal;
        else if (g == "token")
            pg = forge::ParamGroup::Token;
        else
            throw forge::InvalidInput("unknown parameter group '" + g + "'");
        put(out_hex, forge::parameter_digest(ref(model, "model").model, pg));
    });
}

forge_status forge_model_train_stage1(forge_model* model, const char* instance_input, const char* class_input,
                                      const char* instance_prompt, const char* class_prompt,
                                      const forge_schedule* sched, int steps, double learning_rate, uint64_t seed,
                                      char** out_json) {
    return guard([&] {
        clear(out_json);
        auto& m = ref(model, "model");
        forge::TrainingBatch batch;
        batch.instance_frames = forge::frame_io::load_sequence(str(instance_input, "instance input"));
        batch.class_images = forge::frame_io::load_sequence(str(class_input, "class input"));
        if (instance_prompt) batch.instance_prompt = instance_prompt;
        if (class_prompt) batch.class_prompt = class_prompt;
        forge::TrainOptions o{steps, learning_rate, seed, forge::LatentMode::Identity};
        auto r = forge::train_stage1(m.model, batch, schedule(sched), o);
        m.model = std::move(r.model);
        put(out_json, json(r.loss_history).dump());
    });
}

forge_status forge_model_train_stage2(forge_model* model, const char* moment_input, const char* prompt,
                                      const forge_schedule* sched, int steps, double learning_rate, uint64_t seed,
                                      char** out_json) {
    return guard([&] {
        clear(out_json);
        auto& m = ref(model, "model");
        const auto frames = forge::frame_io::load_sequence(str(moment_input, "moment input"));
        forge::TrainOptions o{steps, learning_rate, seed, forge::LatentMode::Identity};
        auto r = forge::train_stage2(m.model, frames, str(prompt, "prompt"), schedule(sched), o);
        m.model = std::move(r.model);
        put(out_json, json(r.loss_history).dump());
    });
}

forge_train_params forge_default_train_params(void) {
    return forge_train_params{nullptr, nullptr, nullptr, nullptr, nullptr, 3, 0, 200, 100, 0.01, 0};
}

forge_status forge_model_train_moment(forge_model* model, const forge_train_params* params,
                                      const forge_schedule* sched, char** out_report_json) {
    return guard([&] {
        clear(out_report_json);
        auto& m = ref(model, "model");
        const auto& p = ref(params, "params");
        const auto frames = forge::frame_io::load_sequence(str(p.moment_input, "moment input"));
        if (p.select < 1) throw forge::InvalidInput("select must be at least 1");
        const auto picked = forge::select_frames(frames, std::min<std::size_t>(static_cast<std::size_t>(p.select), frames.size()),
                                                 forge::PhiOptions{p.raw_phi != 0});
        forge::TrainingBatch batch;
        for (auto i : picked) batch.instance_frames.push_back(frames[i]);
        batch.class_images = forge::frame_io::load_sequence(str(p.class_input, "class input"));
        if (p.instance_prompt) batch.instance_prompt = p.instance_prompt;
        if (p.class_prompt) batch.class_prompt = p.class_prompt;
        const auto sch = schedule(sched);
        auto s1 = forge::train_stage1(m.model, batch, sch,
                                      forge::TrainOptions{p.stage1_steps, p.learning_rate, p.seed, forge::LatentMode::Identity});
        auto s2 = forge::train_stage2(std::move(s1.model), frames, str(p.source_prompt, "source prompt"), sch,
                                      forge::TrainOptions{p.stage2_steps, p.learning_rate, p.seed ^ 0x2ULL,
                                                          forge::LatentMode::Identity});
        m.model = std::move(s2.model);
        put(out_report_json, json{{"selected", picked},
                                  {"instance_prompt", batch.instance_prompt},
                                  {"class_prompt", batch.class_prompt},
                                  {"source_prompt", p.source_prompt},
                                  {"stage1_loss", s1.loss_history},
                                  {"stage2_loss", s2.loss_history}}
                                 .dump(2));
    });
}

forge_status forge_model_edit(const forge_model* model, const forge_edit_params* params, const forge_schedule* sched,
                              char** out_provenance_json) {
    return guard([&] {
        clear(out_provenance_json);
        const auto& m = ref(model, "model");
        const auto& p = ref(params, "params");
        forge::EditRequest req;
        const auto input = str(p.moment_input, "moment input");
        req.moment = forge::frame_io::load_sequence(input);
        req.source_prompt = str(p.source_prompt, "source prompt");
        req.edit_prompt = str(p.edit_prompt, "edit prompt");
        req.inversion_steps = p.inversion_steps;
        req.sampling_steps = p.sampling_steps;
        req.seed = p.seed;
        forge::EditOptions eo{forge::LatentMode::Identity, p.literal_inversion != 0, p.null_prompt_inversion != 0};
        const auto edited = forge::edit_moment(m.model, req, schedule(sched), eo);
        json prov{{"source_moment", input},
                  {"source_prompt", req.source_prompt},
                  {"edit_prompt", req.edit_prompt},
                  {"seed", req.seed},
                  {"inversion_steps", req.inversion_steps},
                  {"sampling_steps", req.sampling_steps},
                  {"literal_inversion", eo.literal_inversion},
                  {"null_prompt_inversion", eo.null_prompt_inversion},
                  {"model_spatial", forge::parameter_digest(m.model, forge::ParamGroup::Spatial)},
                  {"model_temporal", forge::parameter_digest(m.model, forge::ParamGroup::Temporal)}};
        if (p.out_dir) {
            const std::filesystem::path dir(p.out_dir);
            forge::frame_io::save_sequence(dir, edited);
            std::ofstream(dir / "provenance.json") << prov.dump(2) << "\n";
        }
        put(out_provenance_json, prov.dump(2));
    });
}

forge_status forge_harmonic_score(double prompt_fid, double struct_fid, double* out) {
    return guard([&] { ref(out, "out") = forge::harmonic_score(prompt_fid, struct_fid); });
}

forge_status forge_curate_quant(const char* pool_path, size_t k, const char* out_path) {
    return guard([&] {
        const auto pool = forge::read_pool(str(pool_path, "pool"));
        forge::write_pool(str(out_path, "output"), forge::quantitative_select(pool, k));
    });
}

forge_status forge_curate_qual(const char* pool_path, const char* scores_csv, size_t l, const char* out_path) {
    return guard([&] {
        const auto pool = forge::read_pool(str(pool_path, "pool"));
        const auto scores = forge::read_scores_csv(str(scores_csv, "scores"));
        forge::write_pool(str(out_path, "output"), forge::qualitative_select(pool, scores, l));
    });
}

forge_status forge_pool_report(const char* pool_path, int per_sample, char** out_json) {
    return guard([&] {
        clear(out_json);
        const auto pool = forge::read_pool(str(pool_path, "pool"));
        const auto r = forge::pool_report(
            pool, per_sample ? forge::HarmonicAggregation::PerSample : forge::HarmonicAggregation::Aggregate);
        put(out_json, json{{"items", pool.size()},
                           {"prompt_fidelity", r.mean_prompt_fid},
                           {"structure_fidelity", r.mean_struct_fid},
                           {"h_score", r.h_score},
                           {"aggregation", per_sample ? "per_sample" : "aggregate"}}
                          .dump(2));
    });
}

forge_status forge_assemble(const char* video_json, size_t moment, const char* edited_input, const char* query,
                            forge_assemble_mode mode, const char* out_json) {
    return guard([&] {
        const auto video = forge::read_video(str(video_json, "video"));
        const auto input = str(edited_input, "edited input");
        const auto frames = forge::frame_io::load_sequence(input);
        forge::EditedMoment em{static_cast<double>(frames.size()) / video.fps, str(query, "query"), input};
        forge::AssembleMode am = mode == FORGE_REPLACE ? forge::AssembleMode::Replace : forge::AssembleMode::Inject;
        forge::InjectPlacement pl = mode == FORGE_INJECT_BEFORE ? forge::InjectPlacement::Before : forge::InjectPlacement::After;
        if (mode != FORGE_REPLACE && mode != FORGE_INJECT_AFTER && mode != FORGE_INJECT_BEFORE)
            throw forge::InvalidInput("unknown assemble mode");
        forge::write_video(str(out_json, "output"), forge::assemble_variant(video, moment, em, am, pl));
    });
}

forge_status forge_eval(const char* pred_path, const char* gt_path, const double* thresholds, size_t threshold_count,
                        size_t rank, char** out_json, char** out_table) {
    return guard([&] {
        clear(out_json, out_table);
        std::vector<double> th{0.3, 0.5, 0.7};
        if (thresholds && threshold_count > 0) th.assign(thresholds, thresholds + threshold_count);
        const auto m = forge::evaluate(forge::read_predictions(str(pred_path, "predictions")),
                                       forge::read_annotations(str(gt_path, "ground truth")), th, rank);
        put(out_json, forge::metrics_json(m));
        put(out_table, forge::metrics_table(m));
    });
}

forge_status forge_novel_word_split(const char* corpus_path, const char* vocab_annotations, uint64_t seed,
                                    const char* out_dir, char** out_json) {
    return guard([&] {
        clear(out_json);
        const auto corpus = forge::read_annotations(str(corpus_path, "corpus"));
        std::set<std::string> vocab;
        if (vocab_annotations)
            for (const auto& a : forge::read_annotations(vocab_annotations))
                for (auto& w : forge::content_words(a.query)) vocab.insert(std::move(w));
        const auto s = forge::novel_word_split(corpus, vocab, seed);
        if (out_dir) {
            const std::filesystem::path dir(out_dir);
            forge::write_annotations(dir / "generation.jsonl", s.generation);
            forge::write_annotations(dir / "test.jsonl", s.test);
        }
        put(out_json, json{{"novel_words", s.novel_words},
                           {"generation", s.generation.size()},
                           {"test", s.test.size()},
                           {"warning", s.warning}}
                          .dump(2));
    });
}

forge_status forge_validate_config(const char* config_path, const forge_run_overrides* overrides,
                                   char** out_errors_json) {
    return guard([&] {
        clear(out_errors_json);
        const auto errors = forge::validate_config(config_with(config_path, overrides));
        put(out_errors_json, json(errors).dump(2));
        if (!errors.empty()) throw forge::ValidationError(errors);
    });
}

forge_status forge_run_pipeline(const char* config_path, const forge_run_overrides* overrides,
                                char** out_manifest_json) {
    return guard([&] {
        clear(out_manifest_json);
        const auto c = config_with(config_path, overrides);
        forge::RunOptions ro;
        if (overrides) {
            ro.force = overrides->force != 0;
            if (overrides->until) ro.until = overrides->until;
        }
        put(out_manifest_json, forge::manifest_json(forge::run_pipeline(c, ro)));
    });
}

forge_status forge_demo_data(const char* dir, uint64_t seed) {
    return guard([&] { forge::write_demo_data(str(dir, "dir"), seed); });
}

}  // extern "C"
