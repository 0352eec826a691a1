#include "forge/curation.hpp"

#include "forge/error.hpp"

#include "binary_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace forge {

namespace fs = std::filesystem;
using json = nlohmann::json;

// -------------------------------------------------------------- embeddings

EmbeddingSet read_embeddings(const fs::path& path, std::string source_tag) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open embeddings " + path.string());
    const auto what = "embeddings " + path.string();
    detail::expect_magic(in, "FEMB", what);
    const auto frames = detail::read_u32(in, what);
    const auto dim = detail::read_u32(in, what);
    if (dim == 0) throw IoError("zero embedding dimension in " + path.string());
    EmbeddingSet set;
    set.source_tag = std::move(source_tag);
    for (std::uint32_t f = 0; f < frames; ++f) {
        Eigen::VectorXd v(dim);
        for (std::uint32_t d = 0; d < dim; ++d) v(d) = detail::read_f32(in, what);
        set.per_frame.push_back(std::move(v));
    }
    return set;
}

void write_embeddings(const fs::path& path, const EmbeddingSet& set) {
    if (set.per_frame.empty()) throw InvalidInput("cannot write an empty embedding set");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write("FEMB", 4);
    detail::write_u32(out, static_cast<std::uint32_t>(set.frames()));
    detail::write_u32(out, static_cast<std::uint32_t>(set.dim()));
    for (const auto& v : set.per_frame) {
        if (v.size() != set.dim()) throw InvalidInput("embedding rows differ in dimension");
        for (Eigen::Index d = 0; d < v.size(); ++d) detail::write_f32(out, static_cast<float>(v(d)));
    }
}

// ------------------------------------------------------------------ scores

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) throw InvalidInput("cosine similarity of vectors with different dimensions");
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) throw InvalidInput("cosine similarity of a zero-norm vector");
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double prompt_fidelity(const EmbeddingSet& joint, const Eigen::VectorXd& prompt_vec) {
    if (joint.per_frame.empty()) throw InvalidInput("prompt fidelity needs at least one frame embedding");
    double sum = 0.0;
    for (const auto& v : joint.per_frame) sum += cosine_similarity(v, prompt_vec);
    return sum / static_cast<double>(joint.frames());
}

double structure_fidelity(const EmbeddingSet& src, const EmbeddingSet& gen) {
    if (src.frames() != gen.frames()) throw InvalidInput("structure fidelity: frame counts differ");
    if (src.per_frame.empty()) throw InvalidInput("structure fidelity needs at least one frame");
    double sum = 0.0;
    for (std::size_t i = 0; i < src.frames(); ++i) sum += cosine_similarity(src.per_frame[i], gen.per_frame[i]);
    return sum / static_cast<double>(src.frames());
}

double harmonic_score(double p, double s) {
    if (!(p > 0.0) || !(s > 0.0)) throw UndefinedScoreError("harmonic score is undefined for nonpositive inputs");
    return 2.0 * p * s / (p + s);
}

double h_score_or_zero(double p, double s) { return p > 0.0 && s > 0.0 ? harmonic_score(p, s) : 0.0; }

void score_moment(GeneratedMoment& m, const EmbeddingSet& joint, const Eigen::VectorXd& prompt_vec,
                  const EmbeddingSet& source_structure, const EmbeddingSet& structure) {
    m.prompt_fid = prompt_fidelity(joint, prompt_vec);
    m.struct_fid = structure_fidelity(source_structure, structure);
    m.h_score = h_score_or_zero(m.prompt_fid, m.struct_fid);
}

void rescore(GeneratedMoment& m, const fs::path& base_dir) {
    const auto joint = read_embeddings(base_dir / m.joint_embeddings, "joint");
    const auto prompt = read_embeddings(base_dir / m.prompt_embedding, "joint");
    if (prompt.frames() != 1) throw InvalidInput("prompt embedding file must hold exactly one row");
    const auto src = read_embeddings(base_dir / m.source_structure_embeddings, "structure");
    const auto gen = read_embeddings(base_dir / m.structure_embeddings, "structure");
    score_moment(m, joint, prompt.per_frame.front(), src, gen);
}

// -------------------------------------------------------------------- pool

CandidatePool::CandidatePool(std::vector<GeneratedMoment> items, std::string provenance)
    : provenance_(std::move(provenance)) {
    for (auto& m : items) add(std::move(m));
}

void CandidatePool::add(GeneratedMoment m) {
    for (const auto& existing : items_)
        if (existing.id == m.id) throw InvalidInput("duplicate candidate id '" + m.id + "'");
    items_.push_back(std::move(m));
}

namespace {

json to_json(const GeneratedMoment& m) {
    return json{{"id", m.id},
                {"source_video_id", m.source_video_id},
                {"source_moment_index", m.source_moment_index},
                {"edit_prompt", m.edit_prompt},
                {"start", m.span.start},
                {"end", m.span.end},
                {"frames", m.frames},
                {"joint_embeddings", m.joint_embeddings},
                {"structure_embeddings", m.structure_embeddings},
                {"source_structure_embeddings", m.source_structure_embeddings},
                {"prompt_embedding", m.prompt_embedding},
                {"prompt_fid", m.prompt_fid},
                {"struct_fid", m.struct_fid},
                {"h_score", m.h_score},
                {"config_hash", m.config_hash}};
}

GeneratedMoment moment_from_json(const json& j) {
    GeneratedMoment m;
    m.id = j.at("id").get<std::string>();
    m.source_video_id = j.value("source_video_id", "");
    m.source_moment_index = j.value("source_moment_index", 0);
    m.edit_prompt = j.value("edit_prompt", "");
    if (j.contains("start") && j.contains("end"))
        m.span = TemporalSpan(j.at("start").get<double>(), j.at("end").get<double>());
    m.frames = j.value("frames", "");
    m.joint_embeddings = j.value("joint_embeddings", "");
    m.structure_embeddings = j.value("structure_embeddings", "");
    m.source_structure_embeddings = j.value("source_structure_embeddings", "");
    m.prompt_embedding = j.value("prompt_embedding", "");
    m.prompt_fid = j.value("prompt_fid", 0.0);
    m.struct_fid = j.value("struct_fid", 0.0);
    m.h_score = j.value("h_score", 0.0);
    m.config_hash = j.value("config_hash", "");
    return m;
}

template <typename F>
void for_each_jsonl(const fs::path& path, F&& f) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            f(json::parse(line));
        } catch (const json::exception& e) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void open_for_write(std::ofstream& out, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    out.open(path);
    if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace

CandidatePool read_pool(const fs::path& path) {
    CandidatePool pool;
    for_each_jsonl(path, [&](const json& j) {
        auto m = moment_from_json(j);
        if (pool.provenance().empty()) pool.set_provenance(m.config_hash);
        pool.add(std::move(m));
    });
    return pool;
}

void write_pool(const fs::path& path, const CandidatePool& pool) {
    std::ofstream out;
    open_for_write(out, path);
    for (const auto& m : pool.items()) {
        auto j = to_json(m);
        // items without their own hash inherit the pool's
        if (m.config_hash.empty()) j["config_hash"] = pool.provenance();
        out << j.dump() << "\n";
    }
}

CandidatePool quantitative_select(const CandidatePool& pool, std::size_t k) {
    if (k > pool.size())
        throw InvalidInput("quantitative selection: k=" + std::to_string(k) + " exceeds pool size " +
                           std::to_string(pool.size()));
    std::vector<GeneratedMoment> items = pool.items();
    std::sort(items.begin(), items.end(), [](const GeneratedMoment& a, const GeneratedMoment& b) {
        if (a.h_score != b.h_score) return a.h_score > b.h_score;
        return a.id < b.id;
    });
    items.resize(k);
    return CandidatePool(std::move(items), pool.provenance());
}

CandidatePool qualitative_select(const CandidatePool& filtered, const std::map<std::string, double>& vmr_scores,
                                 std::size_t l) {
    if (l > filtered.size())
        throw InvalidInput("qualitative selection: l=" + std::to_string(l) + " exceeds pool size " +
                           std::to_string(filtered.size()));
    for (const auto& m : filtered.items())
        if (!vmr_scores.contains(m.id)) throw InvalidInput("no retrieval score for candidate '" + m.id + "'");
    std::vector<GeneratedMoment> items = filtered.items();
    std::sort(items.begin(), items.end(), [&](const GeneratedMoment& a, const GeneratedMoment& b) {
        const double sa = vmr_scores.at(a.id), sb = vmr_scores.at(b.id);
        if (sa != sb) return sa < sb;
        return a.id < b.id;
    });
    items.resize(l);
    return CandidatePool(std::move(items), filtered.provenance());
}

std::map<std::string, double> read_scores_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::map<std::string, double> scores;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.rfind(',');
        if (comma == std::string::npos) throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected id,score");
        const auto id = line.substr(0, comma);
        const auto value = line.substr(comma + 1);
        if (lineno == 1 && id == "id") continue;
        try {
            std::size_t used = 0;
            const double v = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
            if (!scores.emplace(id, v).second) throw IoError("duplicate id '" + id + "' in " + path.string());
        } catch (const std::logic_error&) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad score '" + value + "'");
        }
    }
    return scores;
}

void write_scores_csv(const fs::path& path, const std::map<std::string, double>& scores) {
    std::ofstream out;
    open_for_write(out, path);
    out << "id,score\n";
    out.precision(17);
    for (const auto& [id, score] : scores) out << id << "," << score << "\n";
}

PoolReport pool_report(const CandidatePool& pool, HarmonicAggregation mode) {
    PoolReport r;
    if (pool.empty()) return r;
    const double n = static_cast<double>(pool.size());
    double h = 0.0;
    for (const auto& m : pool.items()) {
        r.mean_prompt_fid += m.prompt_fid / n;
        r.mean_struct_fid += m.struct_fid / n;
        h += h_score_or_zero(m.prompt_fid, m.struct_fid) / n;
    }
    r.h_score = mode == HarmonicAggregation::Aggregate ? h_score_or_zero(r.mean_prompt_fid, r.mean_struct_fid) : h;
    return r;
}

// ---------------------------------------------------------------- assembly

void validate_video(const Video& video) {
    double cursor = 0.0;
    for (std::size_t i = 0; i < video.moments.size(); ++i) {
        const auto& s = video.moments[i].span;
        if (!(s.start < s.end)) throw InvalidInput("moment " + std::to_string(i) + " has an empty span");
        if (s.start < cursor - 1e-9) throw InvalidInput("moment spans overlap or are out of order");
        cursor = s.end;
    }
}

Video read_video(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    Video v;
    try {
        const auto j = json::parse(in);
        v.video_id = j.at("video_id").get<std::string>();
        v.fps = j.value("fps", 1.0);
        for (const auto& m : j.at("moments")) {
            VideoMoment vm;
            vm.span = TemporalSpan(m.at("start").get<double>(), m.at("end").get<double>());
            vm.query = m.value("query", "");
            vm.frames = m.value("frames", "");
            vm.generated = m.value("generated", false);
            v.moments.push_back(std::move(vm));
        }
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    validate_video(v);
    return v;
}

void write_video(const fs::path& path, const Video& video) {
    json moments = json::array();
    for (const auto& m : video.moments)
        moments.push_back({{"start", m.span.start},
                           {"end", m.span.end},
                           {"query", m.query},
                           {"frames", m.frames},
                           {"generated", m.generated}});
    std::ofstream out;
    open_for_write(out, path);
    out << json{{"video_id", video.video_id}, {"fps", video.fps}, {"moments", moments}}.dump(2) << "\n";
}

Video assemble_variant(const Video& video, std::size_t index, const EditedMoment& edited, AssembleMode mode,
                       InjectPlacement placement) {
    validate_video(video);
    if (index >= video.moments.size())
        throw InvalidInput("moment index " + std::to_string(index) + " out of range");
    if (!(edited.duration > 0.0)) throw InvalidInput("edited moment must have positive duration");
    Video out = video;
    const auto& original = video.moments[index];
    if (mode == AssembleMode::Replace) {
        if (std::abs(edited.duration - original.span.length()) > 1e-9)
            throw InvalidInput("replace requires the edited moment to match the original duration");
        auto& m = out.moments[index];
        m.query = edited.query;
        m.frames = edited.frames;
        m.generated = true;
        return out;
    }
    const double at = placement == InjectPlacement::After ? original.span.end : original.span.start;
    const std::size_t insert_pos = placement == InjectPlacement::After ? index + 1 : index;
    for (std::size_t i = insert_pos; i < out.moments.size(); ++i) {
        out.moments[i].span.start += edited.duration;
        out.moments[i].span.end += edited.duration;
    }
    VideoMoment injected{TemporalSpan(at, at + edited.duration), edited.query, edited.frames, true};
    out.moments.insert(out.moments.begin() + static_cast<std::ptrdiff_t>(insert_pos), std::move(injected));
    return out;
}

// ------------------------------------------------------------- training set

Dataset build_training_set(const Dataset& source, const CandidatePool& selected) {
    std::set<std::string> ids;
    for (const auto& e : source)
        if (!ids.insert(e.id).second) throw InvalidInput("duplicate id '" + e.id + "' in source data");
    Dataset out = source;
    for (const auto& m : selected.items()) {
        if (!ids.insert(m.id).second) throw InvalidInput("generated id '" + m.id + "' collides with existing data");
        out.push_back(TrainingEntry{m.id, MomentAnnotation{m.id, m.span, m.edit_prompt}, "generated", m.source_video_id});
    }
    return out;
}

Dataset read_dataset(const fs::path& path) {
    Dataset d;
    for_each_jsonl(path, [&](const json& j) {
        TrainingEntry e;
        e.annotation.video_id = j.at("video_id").get<std::string>();
        e.annotation.span = TemporalSpan(j.at("start").get<double>(), j.at("end").get<double>());
        e.annotation.query = j.at("query").get<std::string>();
        e.id = j.value("id", e.annotation.video_id + "#" + std::to_string(d.size()));
        e.origin = j.value("origin", "source");
        e.context_video_id = j.value("context_video_id", e.annotation.video_id);
        d.push_back(std::move(e));
    });
    return d;
}

void write_dataset(const fs::path& path, const Dataset& dataset) {
    std::ofstream out;
    open_for_write(out, path);
    for (const auto& e : dataset)
        out << json{{"id", e.id},
                    {"video_id", e.annotation.video_id},
                    {"start", e.annotation.span.start},
                    {"end", e.annotation.span.end},
                    {"query", e.annotation.query},
                    {"origin", e.origin},
                    {"context_video_id", e.context_video_id}}
                   .dump()
            << "\n";
}

}  // namespace forge
