#include "forge/pipeline.hpp"

#include "forge/digest.hpp"
#include "forge/editor.hpp"
#include "forge/embedder.hpp"
#include "forge/error.hpp"
#include "forge/frames.hpp"
#include "forge/vmr_eval.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#ifndef FORGE_VERSION
#define FORGE_VERSION "0.0.0"
#endif

namespace forge {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;
using json = nlohmann::json;

// ------------------------------------------------------------------ config

namespace {

class IniReader {
public:
    IniReader(const pt::ptree& tree, std::vector<std::string>& errors) : tree_(tree), errors_(errors) {}

    template <typename T>
    void get(const std::string& key, T& into) {
        auto raw = tree_.get_optional<std::string>(key);
        if (!raw) return;
        std::string v = trim(*raw);
        if constexpr (std::is_same_v<T, bool>) {
            if (v == "true" || v == "1" || v == "yes")
                into = true;
            else if (v == "false" || v == "0" || v == "no")
                into = false;
            else
                errors_.push_back(key + ": expected true or false, got '" + v + "'");
        } else if constexpr (std::is_same_v<T, std::string>) {
            into = v;
        } else {
            std::istringstream in(v);
            T parsed{};
            if (!(in >> parsed) || !(in >> std::ws).eof())
                errors_.push_back(key + ": cannot parse '" + v + "'");
            else
                into = parsed;
        }
    }

    std::optional<std::string> raw(const std::string& key) const {
        auto r = tree_.get_optional<std::string>(key);
        if (!r) return std::nullopt;
        return trim(*r);
    }

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return {};
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    }

private:
    const pt::ptree& tree_;
    std::vector<std::string>& errors_;
};

}  // namespace

PipelineConfig load_config(const fs::path& path) {
    pt::ptree tree;
    try {
        pt::read_ini(path.string(), tree);
    } catch (const pt::ini_parser_error& e) {
        throw IoError(std::string("cannot read config: ") + e.what());
    }
    PipelineConfig c;
    IniReader r(tree, c.parse_errors);
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");

    auto path_of = [&](const std::string& key, fs::path& into) {
        if (auto v = r.raw("paths." + key); v && !v->empty()) {
            fs::path p(*v);
            into = p.is_absolute() ? p : base / p;
        }
    };
    path_of("videos", c.paths.videos);
    path_of("classes", c.paths.classes);
    path_of("annotations", c.paths.annotations);
    path_of("corpus", c.paths.corpus);
    path_of("embeddings", c.paths.embeddings);
    path_of("output", c.paths.output);

    r.get("diffusion.timesteps", c.timesteps);
    r.get("diffusion.beta_start", c.beta_start);
    r.get("diffusion.beta_end", c.beta_end);
    r.get("diffusion.embed_dim", c.embed_dim);
    if (auto v = r.raw("diffusion.latent")) {
        if (*v == "identity")
            c.latent = LatentMode::Identity;
        else if (*v == "pool2")
            c.latent = LatentMode::Pool2;
        else
            c.parse_errors.push_back("diffusion.latent: expected identity or pool2, got '" + *v + "'");
    }
    r.get("diffusion.literal_inversion", c.literal_inversion);

    r.get("frames.select", c.frames_select);
    r.get("frames.raw_phi", c.raw_phi);

    r.get("train.stage1_steps", c.stage1_steps);
    r.get("train.stage2_steps", c.stage2_steps);
    r.get("train.learning_rate", c.learning_rate);
    r.get("train.instance_token", c.instance_token);
    r.get("train.class_prompt", c.class_prompt);

    r.get("edit.inversion_steps", c.inversion_steps);
    r.get("edit.sampling_steps", c.sampling_steps);
    r.get("edit.null_prompt_inversion", c.null_prompt_inversion);

    r.get("curation.k", c.k);
    r.get("curation.l", c.l);
    if (auto v = r.raw("curation.mode")) {
        if (*v == "replace")
            c.mode = AssembleMode::Replace;
        else if (*v == "inject")
            c.mode = AssembleMode::Inject;
        else
            c.parse_errors.push_back("curation.mode: expected replace or inject, got '" + *v + "'");
    }
    if (auto v = r.raw("curation.placement")) {
        if (*v == "after")
            c.placement = InjectPlacement::After;
        else if (*v == "before")
            c.placement = InjectPlacement::Before;
        else
            c.parse_errors.push_back("curation.placement: expected after or before, got '" + *v + "'");
    }
    if (auto v = r.raw("curation.aggregation")) {
        if (*v == "aggregate")
            c.aggregation = HarmonicAggregation::Aggregate;
        else if (*v == "per_sample")
            c.aggregation = HarmonicAggregation::PerSample;
        else
            c.parse_errors.push_back("curation.aggregation: expected aggregate or per_sample, got '" + *v + "'");
    }

    if (auto v = r.raw("eval.thresholds")) {
        c.thresholds.clear();
        std::istringstream in(*v);
        std::string item;
        while (std::getline(in, item, ',')) {
            try {
                std::size_t used = 0;
                const auto t = IniReader::trim(item);
                c.thresholds.push_back(std::stod(t, &used));
                if (used != t.size()) throw std::invalid_argument(t);
            } catch (const std::logic_error&) {
                c.parse_errors.push_back("eval.thresholds: cannot parse '" + item + "'");
            }
        }
    }
    r.get("eval.rank", c.rank);
    r.get("eval.windows", c.windows);

    if (auto v = r.raw("run.seed")) {
        std::uint64_t s = 0;
        r.get("run.seed", s);
        if (!v->empty() && v->front() != '-') c.seed = s;
        if (!v->empty() && v->front() == '-') c.parse_errors.push_back("run.seed: must be nonnegative");
    }
    r.get("run.jobs", c.jobs);
    return c;
}

std::vector<std::string> validate_config(const PipelineConfig& c) {
    std::vector<std::string> errors = c.parse_errors;
    auto need_path = [&](const char* key, const fs::path& p, bool dir) {
        if (p.empty()) {
            errors.push_back(std::string("paths.") + key + " is required");
        } else if (!fs::exists(p)) {
            errors.push_back(std::string("paths.") + key + ": '" + p.string() + "' does not exist");
        } else if (dir != fs::is_directory(p)) {
            errors.push_back(std::string("paths.") + key + ": '" + p.string() + "' must be a " +
                             (dir ? "directory" : "file"));
        }
    };
    need_path("videos", c.paths.videos, true);
    need_path("classes", c.paths.classes, true);
    need_path("annotations", c.paths.annotations, false);
    need_path("corpus", c.paths.corpus, false);
    need_path("embeddings", c.paths.embeddings, true);
    if (c.paths.output.empty()) errors.push_back("paths.output is required");

    if (c.timesteps < 1) errors.push_back("diffusion.timesteps must be at least 1");
    if (!(c.beta_start > 0.0 && c.beta_start < 1.0 && c.beta_end > 0.0 && c.beta_end < 1.0))
        errors.push_back("diffusion.beta_start and beta_end must lie in (0, 1)");
    if (c.embed_dim < 1) errors.push_back("diffusion.embed_dim must be positive");
    if (c.frames_select < 1) errors.push_back("frames.select must be at least 1");
    if (c.stage1_steps < 0 || c.stage2_steps < 0) errors.push_back("train steps must be nonnegative");
    if (!(c.learning_rate > 0.0)) errors.push_back("train.learning_rate must be positive");
    if (!is_special_token(c.instance_token))
        errors.push_back("train.instance_token must be a bracketed token such as [v]");
    if (c.inversion_steps < 0 || c.inversion_steps > c.timesteps || c.sampling_steps < 0 ||
        c.sampling_steps > c.timesteps)
        errors.push_back("edit steps must lie in [0, diffusion.timesteps]");
    if (c.k < 1) errors.push_back("curation.k must be at least 1");
    if (c.l < 1) errors.push_back("curation.l must be at least 1");
    if (c.l > c.k) errors.push_back("curation.l (" + std::to_string(c.l) + ") exceeds curation.k (" + std::to_string(c.k) + ")");
    if (c.thresholds.empty()) errors.push_back("eval.thresholds must list at least one value");
    for (double t : c.thresholds)
        if (!(t >= 0.0 && t <= 1.0)) errors.push_back("eval.thresholds values must lie in [0, 1]");
    if (c.rank < 1) errors.push_back("eval.rank must be at least 1");
    if (c.windows < 1) errors.push_back("eval.windows must be at least 1");
    if (!c.seed) errors.push_back("run.seed is required");
    if (c.jobs < 1) errors.push_back("run.jobs must be at least 1");
    return errors;
}

std::string config_hash(const PipelineConfig& c) {
    json j{{"timesteps", c.timesteps},
           {"beta_start", c.beta_start},
           {"beta_end", c.beta_end},
           {"embed_dim", c.embed_dim},
           {"latent", c.latent == LatentMode::Identity ? "identity" : "pool2"},
           {"literal_inversion", c.literal_inversion},
           {"frames_select", c.frames_select},
           {"raw_phi", c.raw_phi},
           {"stage1_steps", c.stage1_steps},
           {"stage2_steps", c.stage2_steps},
           {"learning_rate", c.learning_rate},
           {"instance_token", c.instance_token},
           {"class_prompt", c.class_prompt},
           {"inversion_steps", c.inversion_steps},
           {"sampling_steps", c.sampling_steps},
           {"null_prompt_inversion", c.null_prompt_inversion},
           {"k", c.k},
           {"l", c.l},
           {"mode", c.mode == AssembleMode::Replace ? "replace" : "inject"},
           {"placement", c.placement == InjectPlacement::After ? "after" : "before"},
           {"aggregation", c.aggregation == HarmonicAggregation::Aggregate ? "aggregate" : "per_sample"},
           {"thresholds", c.thresholds},
           {"rank", c.rank},
           {"windows", c.windows},
           {"seed", c.seed ? json(*c.seed) : json(nullptr)}};
    return sha256_hex(j.dump()).substr(0, 16);
}

std::string manifest_json(const RunManifest& m) {
    json stages = json::array();
    for (const auto& s : m.stages)
        stages.push_back({{"name", s.name},
                          {"input_digest", s.input_digest},
                          {"output_digest", s.output_digest},
                          {"seconds", s.seconds},
                          {"skipped", s.skipped}});
    return json{{"config_hash", m.config_hash}, {"version", m.version}, {"stages", stages}}.dump(2);
}

// ---------------------------------------------------------------- stages

namespace {

struct StageFailure {
    std::string item;
    std::string cause;
};

/// Runs fn(i) for i < n on up to `jobs` threads. The failure with the lowest
/// index is rethrown as a StageError so the report is deterministic.
void parallel_items(const std::string& stage, std::size_t n, int jobs,
                    const std::function<std::string(std::size_t)>& item_name,
                    const std::function<void(std::size_t)>& fn) {
    std::vector<std::optional<std::string>> failures(n);
    auto run = [&](std::size_t i) {
        try {
            fn(i);
        } catch (const std::exception& e) {
            failures[i] = e.what();
        }
    };
    const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, jobs)), n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            run(i);
            if (failures[i]) break;
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) run(i);
            });
    }
    for (std::size_t i = 0; i < n; ++i)
        if (failures[i]) throw StageError(stage, item_name(i), *failures[i]);
}

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

std::string digest_of(const fs::path& p) {
    if (fs::is_directory(p)) return sha256_tree(p);
    return sha256_file(p);
}

struct MomentRef {
    std::string id;  // "<video>_m<i>"
    std::string video_id;
    std::size_t index = 0;
};

class Runner {
public:
    Runner(const PipelineConfig& c, const RunOptions& o)
        : c_(c), opts_(o), hash_(config_hash(c)), seed_(*c.seed),
          sched_(c.timesteps, c.beta_start, c.beta_end), out_(c.paths.output) {}

    RunManifest run() {
        fs::create_directories(out_);
        manifest_.config_hash = hash_;
        manifest_.version = FORGE_VERSION;
        // inputs of each stage: data paths plus upstream stage directories
        stage("split", {c_.paths.annotations, c_.paths.corpus}, [&](const fs::path& d) { split(d); });
        if (stop_after("split")) return finish();
        stage("frames", {c_.paths.videos}, [&](const fs::path& d) { frames(d); });
        if (stop_after("frames")) return finish();
        stage("train", {c_.paths.videos, c_.paths.classes, out_ / "frames"}, [&](const fs::path& d) { train(d); });
        if (stop_after("train")) return finish();
        stage("edit", {c_.paths.videos, out_ / "split", out_ / "train"}, [&](const fs::path& d) { edit(d); });
        if (stop_after("edit")) return finish();
        stage("score", {c_.paths.videos, c_.paths.embeddings, out_ / "edit"}, [&](const fs::path& d) { score(d); });
        if (stop_after("score")) return finish();
        stage("select", {c_.paths.videos, out_ / "score"}, [&](const fs::path& d) { select(d); });
        if (stop_after("select")) return finish();
        stage("assemble", {c_.paths.videos, c_.paths.annotations, out_ / "select"},
              [&](const fs::path& d) { assemble(d); });
        if (stop_after("assemble")) return finish();
        stage("eval", {c_.paths.videos, c_.paths.annotations, out_ / "split", out_ / "assemble"},
              [&](const fs::path& d) { evaluate_stage(d); });
        return finish();
    }

private:
    bool stop_after(const std::string& name) const { return opts_.until == name; }

    RunManifest finish() {
        write_json(out_ / "manifest.json", json::parse(manifest_json(manifest_)));
        return manifest_;
    }

    void stage(const std::string& name, const std::vector<fs::path>& inputs,
               const std::function<void(const fs::path&)>& body) {
        const auto dir = out_ / name;
        Sha256 h;
        h.update(hash_).update(name);
        for (const auto& p : inputs) {
            if (!fs::exists(p)) throw StageError(name, "", "missing input " + p.string());
            h.update(digest_of(p));
        }
        StageRecord rec;
        rec.name = name;
        rec.input_digest = h.hex();

        const auto marker = dir / "_stage.json";
        if (!opts_.force && fs::exists(marker)) {
            try {
                const auto m = read_json(marker);
                if (m.value("input_digest", "") == rec.input_digest &&
                    m.value("output_digest", "") == sha256_tree(dir)) {
                    rec.output_digest = m.at("output_digest").get<std::string>();
                    rec.skipped = true;
                    manifest_.stages.push_back(rec);
                    return;
                }
            } catch (const Error&) {
                // unreadable marker: rerun
            }
        }

        fs::remove_all(dir);
        fs::create_directories(dir);
        const auto t0 = std::chrono::steady_clock::now();
        try {
            body(dir);
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(name, "", e.what());
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rec.output_digest = sha256_tree(dir);
        write_json(marker, {{"stage", name},
                            {"config_hash", hash_},
                            {"input_digest", rec.input_digest},
                            {"output_digest", rec.output_digest}});
        manifest_.stages.push_back(rec);
    }

    std::uint64_t item_seed(const std::string& id) const { return seed_ ^ fnv1a64(id); }

    // --- shared input helpers

    const std::map<std::string, Video>& videos() {
        std::lock_guard lock(videos_mutex_);
        if (videos_.empty()) {
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(c_.paths.videos))
                if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files) {
                auto v = read_video(f);
                if (v.moments.empty()) throw InvalidInput("video '" + v.video_id + "' has no moments");
                const auto id = v.video_id;
                if (!videos_.emplace(id, std::move(v)).second) throw InvalidInput("duplicate video id '" + id + "'");
            }
            if (videos_.empty()) throw InvalidInput("no video descriptions in " + c_.paths.videos.string());
        }
        return videos_;
    }

    std::vector<MomentRef> moments() {
        std::vector<MomentRef> out;
        for (const auto& [id, v] : videos())
            for (std::size_t i = 0; i < v.moments.size(); ++i) out.push_back({moment_id(id, i), id, i});
        return out;
    }

    static std::string moment_id(const std::string& video, std::size_t i) { return video + "_m" + std::to_string(i); }

    FrameSequence moment_frames(const std::string& video, std::size_t i) {
        return frame_io::load_sequence(c_.paths.videos / videos().at(video).moments.at(i).frames);
    }

    std::string source_prompt(const std::string& query) const { return c_.instance_token + " " + query; }

    std::string instance_prompt() const {
        // token goes in front of the last word: "a person" -> "a [v] person"
        const auto pos = c_.class_prompt.find_last_of(' ');
        if (pos == std::string::npos) return c_.instance_token + " " + c_.class_prompt;
        return c_.class_prompt.substr(0, pos + 1) + c_.instance_token + c_.class_prompt.substr(pos);
    }

    double moment_duration(const FrameSequence& frames, const Video& v) const {
        return static_cast<double>(frames.size()) / v.fps;
    }

    // --- stages

    void split(const fs::path& dir) {
        const auto source = read_annotations(c_.paths.annotations);
        const auto corpus = read_annotations(c_.paths.corpus);
        std::set<std::string> vocab;
        for (const auto& a : source)
            for (auto& w : content_words(a.query)) vocab.insert(std::move(w));
        const auto s = novel_word_split(corpus, vocab, seed_);
        if (s.generation.empty()) throw InvalidInput(s.warning.empty() ? "no generation sentences" : s.warning);
        write_annotations(dir / "generation.jsonl", s.generation);
        write_annotations(dir / "test.jsonl", s.test);
        write_json(dir / "novel_words.json", {{"novel_words", s.novel_words},
                                              {"warning", s.warning},
                                              {"vocabulary", vocab},
                                              {"config_hash", hash_}});
    }

    void frames(const fs::path& dir) {
        const auto refs = moments();
        PhiOptions phi{c_.raw_phi};
        parallel_items("frames", refs.size(), c_.jobs, [&](std::size_t i) { return refs[i].id; },
                       [&](std::size_t i) {
                           const auto& r = refs[i];
                           const auto seq = moment_frames(r.video_id, r.index);
                           const auto scores = phi_scores(seq, phi);
                           const auto m = std::min<std::size_t>(static_cast<std::size_t>(c_.frames_select), seq.size());
                           const auto picked = select_top(scores, m);
                           json js = json::array();
                           for (const auto& s : scores)
                               js.push_back({{"index", s.index},
                                             {"dissim_prev", s.dissim_prev},
                                             {"dissim_next", s.dissim_next},
                                             {"clarity", s.clarity},
                                             {"phi", s.phi}});
                           write_json(dir / (r.id + ".json"), {{"id", r.id},
                                                               {"video_id", r.video_id},
                                                               {"moment", r.index},
                                                               {"selected", picked},
                                                               {"scores", js},
                                                               {"config_hash", hash_}});
                       });
    }

    FrameSequence class_images() {
        return frame_io::load_sequence(c_.paths.classes);
    }

    void train(const fs::path& dir) {
        const auto refs = moments();
        const auto classes = class_images();
        parallel_items("train", refs.size(), c_.jobs, [&](std::size_t i) { return refs[i].id; },
                       [&](std::size_t i) {
                           const auto& r = refs[i];
                           const auto seq = moment_frames(r.video_id, r.index);
                           const auto sel = read_json(out_ / "frames" / (r.id + ".json"))
                                                .at("selected")
                                                .get<std::vector<std::size_t>>();
                           TrainingBatch batch;
                           for (auto k : sel) batch.instance_frames.push_back(seq.at(k));
                           batch.class_images = classes;
                           batch.instance_prompt = instance_prompt();
                           batch.class_prompt = c_.class_prompt;

                           const auto seed = item_seed(r.id);
                           DenoiserConfig mc;
                           mc.channels = seq.front().channels();
                           mc.embed_dim = c_.embed_dim;
                           mc.text_dim = c_.embed_dim;
                           mc.instance_tokens = {c_.instance_token};
                           mc.seed = seed;
                           TrainOptions o1{c_.stage1_steps, c_.learning_rate, seed, c_.latent};
                           auto s1 = train_stage1(DenoiserModel::create(mc), batch, sched_, o1);
                           TrainOptions o2{c_.stage2_steps, c_.learning_rate, seed ^ 0x2ULL, c_.latent};
                           const auto prompt = source_prompt(videos().at(r.video_id).moments[r.index].query);
                           auto s2 = train_stage2(std::move(s1.model), seq, prompt, sched_, o2);
                           save_checkpoint(dir / (r.id + ".ckpt"), s2.model);
                           write_json(dir / (r.id + ".json"), {{"id", r.id},
                                                               {"instance_prompt", batch.instance_prompt},
                                                               {"source_prompt", prompt},
                                                               {"seed", seed},
                                                               {"stage1_loss", s1.loss_history},
                                                               {"stage2_loss", s2.loss_history},
                                                               {"config_hash", hash_}});
                       });
    }

    struct Candidate {
        std::string id;
        MomentAnnotation sentence;
        std::string video_id;
        std::size_t moment = 0;
    };

    std::vector<Candidate> candidates() {
        const auto gen = read_annotations(out_ / "split" / "generation.jsonl");
        std::vector<Candidate> out;
        for (std::size_t g = 0; g < gen.size(); ++g) {
            auto it = videos().find(gen[g].video_id);
            if (it == videos().end())
                throw StageError("edit", "g" + std::to_string(g), "unknown video '" + gen[g].video_id + "'");
            for (std::size_t i = 0; i < it->second.moments.size(); ++i)
                out.push_back({"g" + std::to_string(g) + "_" + moment_id(it->first, i), gen[g], it->first, i});
        }
        return out;
    }

    void edit(const fs::path& dir) {
        const auto cands = candidates();
        EditOptions eo{c_.latent, c_.literal_inversion, c_.null_prompt_inversion};
        parallel_items("edit", cands.size(), c_.jobs, [&](std::size_t i) { return cands[i].id; },
                       [&](std::size_t i) {
                           const auto& cd = cands[i];
                           const auto mid = moment_id(cd.video_id, cd.moment);
                           const auto model = load_checkpoint(out_ / "train" / (mid + ".ckpt"));
                           EditRequest req;
                           req.moment = moment_frames(cd.video_id, cd.moment);
                           req.source_prompt = source_prompt(videos().at(cd.video_id).moments[cd.moment].query);
                           req.edit_prompt = source_prompt(cd.sentence.query);
                           req.inversion_steps = c_.inversion_steps;
                           req.sampling_steps = c_.sampling_steps;
                           req.seed = item_seed(cd.id);
                           const auto edited = edit_moment(model, req, sched_, eo);
                           frame_io::save_sequence(dir / cd.id, edited, "config_hash=" + hash_);
                           write_json(dir / cd.id / "provenance.json", {{"id", cd.id},
                                                                        {"source_video_id", cd.video_id},
                                                                        {"source_moment_index", cd.moment},
                                                                        {"query", cd.sentence.query},
                                                                        {"source_prompt", req.source_prompt},
                                                                        {"edit_prompt", req.edit_prompt},
                                                                        {"seed", req.seed},
                                                                        {"inversion_steps", req.inversion_steps},
                                                                        {"sampling_steps", req.sampling_steps},
                                                                        {"checkpoint", "train/" + mid + ".ckpt"},
                                                                        {"config_hash", hash_}});
                       });
    }

    std::size_t variant_slot(std::size_t i) const {
        if (c_.mode == AssembleMode::Replace) return i;
        return c_.placement == InjectPlacement::After ? i + 1 : i;
    }

    Video variant_for(const GeneratedMoment& m, std::size_t frame_count) {
        const auto& v = videos().at(m.source_video_id);
        const auto idx = static_cast<std::size_t>(m.source_moment_index);
        EditedMoment em{static_cast<double>(frame_count) / v.fps, m.edit_prompt, m.frames};
        auto variant = assemble_variant(v, idx, em, c_.mode, c_.placement);
        variant.video_id = m.id;
        return variant;
    }

    void score(const fs::path& dir) {
        const auto cands = candidates();
        const ToyEmbedder embedder(c_.paths.embeddings);
        std::vector<GeneratedMoment> items(cands.size());
        parallel_items("score", cands.size(), c_.jobs, [&](std::size_t i) { return cands[i].id; },
                       [&](std::size_t i) {
                           const auto& cd = cands[i];
                           const auto edited = frame_io::load_sequence(out_ / "edit" / cd.id);
                           const auto source = moment_frames(cd.video_id, cd.moment);
                           GeneratedMoment m;
                           m.id = cd.id;
                           m.source_video_id = cd.video_id;
                           m.source_moment_index = static_cast<int>(cd.moment);
                           m.edit_prompt = cd.sentence.query;
                           m.frames = "edit/" + cd.id;
                           const auto base = "score/emb/" + cd.id;
                           m.joint_embeddings = base + ".joint.femb";
                           m.structure_embeddings = base + ".structure.femb";
                           m.source_structure_embeddings = base + ".source_structure.femb";
                           m.prompt_embedding = base + ".prompt.femb";
                           m.config_hash = hash_;
                           write_embeddings(out_ / m.joint_embeddings, embedder.joint(edited));
                           write_embeddings(out_ / m.structure_embeddings, embedder.structure(edited));
                           write_embeddings(out_ / m.source_structure_embeddings, embedder.structure(source));
                           write_embeddings(out_ / m.prompt_embedding, EmbeddingSet{{embedder.text(m.edit_prompt)}, "joint"});
                           const auto variant = variant_for(m, edited.size());
                           m.span = variant.moments.at(variant_slot(cd.moment)).span;
                           rescore(m, out_);
                           items[i] = std::move(m);
                       });
        CandidatePool pool(std::move(items), hash_);
        write_pool(dir / "pool.jsonl", pool);
        const auto agg = pool_report(pool, HarmonicAggregation::Aggregate);
        const auto per = pool_report(pool, HarmonicAggregation::PerSample);
        write_json(dir / "report.json", {{"candidates", pool.size()},
                                         {"prompt_fidelity", agg.mean_prompt_fid},
                                         {"structure_fidelity", agg.mean_struct_fid},
                                         {"h_score_aggregate", agg.h_score},
                                         {"h_score_per_sample", per.h_score},
                                         {"config_hash", hash_}});
    }

    std::size_t frame_count(const GeneratedMoment& m) {
        return frame_io::load_sequence(out_ / m.frames).size();
    }

    void select(const fs::path& dir) {
        const auto pool = read_pool(out_ / "score" / "pool.jsonl");
        if (static_cast<std::size_t>(c_.k) > pool.size())
            throw InvalidInput("curation.k=" + std::to_string(c_.k) + " exceeds the " + std::to_string(pool.size()) +
                               " generated candidates");
        const auto quant = quantitative_select(pool, static_cast<std::size_t>(c_.k));
        write_pool(dir / "quantitative.jsonl", quant);

        std::map<std::string, VideoContext> contexts;
        for (const auto& m : quant.items()) {
            const auto variant = variant_for(m, frame_count(m));
            VideoContext ctx{m.id, variant.duration(), {}};
            const auto slot = variant_slot(static_cast<std::size_t>(m.source_moment_index));
            for (std::size_t j = 0; j < variant.moments.size(); ++j)
                if (j != slot) ctx.known.push_back({m.id, variant.moments[j].span, variant.moments[j].query});
            contexts.emplace(m.id, std::move(ctx));
        }
        const SlidingWindowScorer scorer(c_.windows);
        const auto scored = per_sample_scores(scorer, quant, contexts, c_.jobs);
        if (!scored.errors.empty()) {
            const auto& [id, msg] = *scored.errors.begin();
            throw StageError("select", id, msg);
        }
        write_scores_csv(dir / "vmr_scores.csv", scored.scores);
        const auto qual = qualitative_select(quant, scored.scores, static_cast<std::size_t>(c_.l));
        write_pool(dir / "selected.jsonl", qual);
    }

    Dataset source_dataset() {
        Dataset d;
        const auto ann = read_annotations(c_.paths.annotations);
        for (std::size_t i = 0; i < ann.size(); ++i)
            d.push_back({"src" + std::to_string(i), ann[i], "source", ann[i].video_id});
        return d;
    }

    void assemble(const fs::path& dir) {
        const auto selected = read_pool(out_ / "select" / "selected.jsonl");
        for (const auto& m : selected.items()) {
            auto variant = variant_for(m, frame_count(m));
            write_video(dir / "variants" / (m.id + ".json"), variant);
        }
        write_dataset(dir / "training_set.jsonl", build_training_set(source_dataset(), selected));
        write_json(dir / "summary.json", {{"selected", selected.size()},
                                          {"mode", c_.mode == AssembleMode::Replace ? "replace" : "inject"},
                                          {"config_hash", hash_}});
    }

    void evaluate_stage(const fs::path& dir) {
        const auto test = read_annotations(out_ / "split" / "test.jsonl");
        const auto training = read_dataset(out_ / "assemble" / "training_set.jsonl");
        const SlidingWindowScorer scorer(c_.windows);

        auto contexts_from = [&](bool with_generated) {
            std::map<std::string, VideoContext> ctx;
            for (const auto& [id, v] : videos()) ctx[id] = VideoContext{id, v.duration(), {}};
            for (const auto& e : training) {
                if (e.origin != "source" && !with_generated) continue;
                auto it = ctx.find(e.context_video_id);
                if (it != ctx.end()) it->second.known.push_back({it->first, e.annotation.span, e.annotation.query});
            }
            return ctx;
        };

        json metrics{{"config_hash", hash_}};
        std::ostringstream table;
        for (const bool augmented : {false, true}) {
            const auto ctx = contexts_from(augmented);
            std::vector<RetrievalPrediction> preds;
            for (const auto& q : test) {
                auto it = ctx.find(q.video_id);
                if (it == ctx.end()) throw StageError("eval", q.query, "unknown video '" + q.video_id + "'");
                preds.push_back({q.video_id, q.query, scorer.score(it->second, q.query)});
            }
            const auto name = augmented ? std::string("augmented") : std::string("baseline");
            write_predictions(dir / ("predictions_" + name + ".jsonl"), preds);
            const auto m = evaluate(preds, test, c_.thresholds, static_cast<std::size_t>(c_.rank));
            metrics[name] = json::parse(metrics_json(m));
            table << "[" << name << "]\n" << metrics_table(m) << "\n";
        }
        write_json(dir / "metrics.json", metrics);
        std::ofstream(dir / "metrics.txt") << table.str();
    }

    const PipelineConfig& c_;
    RunOptions opts_;
    std::string hash_;
    std::uint64_t seed_;
    NoiseSchedule sched_;
    fs::path out_;
    std::mutex videos_mutex_;
    std::map<std::string, Video> videos_;
    RunManifest manifest_;
};

}  // namespace

RunManifest run_pipeline(const PipelineConfig& config, const RunOptions& options) {
    if (auto errors = validate_config(config); !errors.empty()) throw ValidationError(std::move(errors));
    if (!options.until.empty() &&
        std::find(pipeline_stages().begin(), pipeline_stages().end(), options.until) == pipeline_stages().end())
        throw InvalidInput("unknown stage '" + options.until + "'");
    Runner runner(config, options);
    return runner.run();
}

}  // namespace forge
