#include "forge/vmr_eval.hpp"

#include "forge/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace forge {

namespace fs = std::filesystem;
using json = nlohmann::json;

double temporal_iou(const TemporalSpan& a, const TemporalSpan& b) {
    const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
    if (inter <= 0.0) return 0.0;
    return std::min(1.0, inter / (a.length() + b.length() - inter));
}

Metrics evaluate(const std::vector<RetrievalPrediction>& preds, const std::vector<MomentAnnotation>& gt,
                 const std::vector<double>& thresholds, std::size_t n) {
    if (n == 0) throw InvalidInput("rank cutoff must be positive");
    std::map<std::pair<std::string, std::string>, const RetrievalPrediction*> by_key;
    for (const auto& p : preds) by_key.emplace(std::pair{p.video_id, p.query}, &p);

    Metrics m;
    m.rank_cutoff = n;
    m.queries = gt.size();
    std::vector<std::size_t> hits(thresholds.size(), 0);
    double iou_sum = 0.0;
    for (const auto& a : gt) {
        auto it = by_key.find({a.video_id, a.query});
        if (it == by_key.end() || it->second->ranked_spans.empty())
            throw InvalidInput("no prediction for query '" + a.query + "' in video '" + a.video_id + "'");
        const auto& ranked = it->second->ranked_spans;
        iou_sum += temporal_iou(ranked.front(), a.span);
        double best = 0.0;
        for (std::size_t r = 0; r < std::min(n, ranked.size()); ++r) best = std::max(best, temporal_iou(ranked[r], a.span));
        for (std::size_t i = 0; i < thresholds.size(); ++i)
            if (best >= thresholds[i]) ++hits[i];
    }
    const double q = gt.empty() ? 1.0 : static_cast<double>(gt.size());
    for (std::size_t i = 0; i < thresholds.size(); ++i)
        m.recall.emplace_back(thresholds[i], gt.empty() ? 0.0 : static_cast<double>(hits[i]) / q);
    m.mean_iou = gt.empty() ? 0.0 : iou_sum / q;
    return m;
}

std::string metrics_json(const Metrics& m) {
    json recall = json::array();
    for (const auto& [mu, r] : m.recall) recall.push_back({{"iou", mu}, {"recall", r}});
    return json{{"n", m.rank_cutoff}, {"queries", m.queries}, {"recall", recall}, {"miou", m.mean_iou}}.dump(2);
}

std::string metrics_table(const Metrics& m) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << std::left << std::setw(18) << "metric" << std::right << std::setw(10) << "value" << "\n";
    for (const auto& [mu, r] : m.recall) {
        std::ostringstream name;
        name << "R@" << m.rank_cutoff << " IoU=" << std::setprecision(2) << std::fixed << mu;
        out << std::left << std::setw(18) << name.str() << std::right << std::setw(10) << r << "\n";
    }
    out << std::left << std::setw(18) << "mIoU" << std::right << std::setw(10) << m.mean_iou << "\n";
    out << std::left << std::setw(18) << "queries" << std::right << std::setw(10) << m.queries << "\n";
    return out.str();
}

// --------------------------------------------------------------------- io

namespace {

template <typename F>
void each_line(const fs::path& path, F&& f) {
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
        } catch (const InvalidInput& e) {
            throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

}  // namespace

std::vector<MomentAnnotation> read_annotations(const fs::path& path) {
    std::vector<MomentAnnotation> out;
    each_line(path, [&](const json& j) {
        MomentAnnotation a{j.at("video_id").get<std::string>(),
                           TemporalSpan(j.at("start").get<double>(), j.at("end").get<double>()),
                           j.at("query").get<std::string>()};
        if (a.query.empty()) throw InvalidInput("empty query");
        out.push_back(std::move(a));
    });
    return out;
}

void write_annotations(const fs::path& path, const std::vector<MomentAnnotation>& annotations) {
    auto out = open_out(path);
    for (const auto& a : annotations)
        out << json{{"video_id", a.video_id}, {"start", a.span.start}, {"end", a.span.end}, {"query", a.query}}.dump()
            << "\n";
}

std::vector<RetrievalPrediction> read_predictions(const fs::path& path) {
    std::vector<RetrievalPrediction> out;
    each_line(path, [&](const json& j) {
        RetrievalPrediction p{j.at("video_id").get<std::string>(), j.at("query").get<std::string>(), {}};
        if (j.contains("ranked")) {
            for (const auto& s : j.at("ranked")) p.ranked_spans.emplace_back(s.at(0).get<double>(), s.at(1).get<double>());
        } else {
            p.ranked_spans.emplace_back(j.at("start").get<double>(), j.at("end").get<double>());
        }
        out.push_back(std::move(p));
    });
    return out;
}

void write_predictions(const fs::path& path, const std::vector<RetrievalPrediction>& preds) {
    auto out = open_out(path);
    for (const auto& p : preds) {
        json ranked = json::array();
        for (const auto& s : p.ranked_spans) ranked.push_back({s.start, s.end});
        json j{{"video_id", p.video_id}, {"query", p.query}, {"ranked", ranked}};
        if (!p.ranked_spans.empty()) {
            j["start"] = p.ranked_spans.front().start;
            j["end"] = p.ranked_spans.front().end;
        }
        out << j.dump() << "\n";
    }
}

// ------------------------------------------------------------------ words

bool is_stopword(const std::string& word) {
    static const std::set<std::string> stop = {
        "a",    "an",   "the",  "and",  "or",   "but",  "of",   "to",   "in",   "on",   "at",   "by",
        "for",  "with", "from", "into", "onto", "up",   "down", "out",  "off",  "over", "is",   "are",
        "was",  "were", "be",   "been", "it",   "its",  "this", "that", "then", "than", "as",   "his",
        "her",  "their", "he",  "she",  "they", "them", "him",  "some", "while", "again", "there", "after",
    };
    return stop.contains(word);
}

std::vector<std::string> content_words(const std::string& sentence) {
    std::vector<std::string> out;
    std::istringstream in(sentence);
    std::string raw;
    while (in >> raw) {
        std::string w;
        for (char c : raw)
            if (std::isalnum(static_cast<unsigned char>(c))) w += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (!w.empty() && !is_stopword(w)) out.push_back(std::move(w));
    }
    return out;
}

NovelWordSplit novel_word_split(const std::vector<MomentAnnotation>& queries, const std::set<std::string>& train_vocab,
                                std::uint64_t seed) {
    if (queries.empty()) throw InvalidInput("novel-word split needs a nonempty corpus");

    std::map<std::string, std::vector<std::size_t>> holders;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const auto words = content_words(queries[i].query);
        for (const auto& w : std::set<std::string>(words.begin(), words.end()))
            if (!train_vocab.contains(w)) holders[w].push_back(i);
    }

    NovelWordSplit split;
    std::mt19937_64 rng(seed);
    std::vector<bool> chosen(queries.size(), false);
    std::vector<bool> in_test(queries.size(), false);
    for (const auto& [word, sentences] : holders) {
        if (sentences.size() < 2) continue;
        split.novel_words.push_back(word);
        std::vector<std::size_t> free;
        for (auto i : sentences)
            if (!chosen[i]) free.push_back(i);
        // every holder already generates for another word: nothing to add
        if (!free.empty()) chosen[free[rng() % free.size()]] = true;
        for (auto i : sentences) in_test[i] = true;
    }
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (chosen[i])
            split.generation.push_back(queries[i]);
        else if (in_test[i])
            split.test.push_back(queries[i]);
    }
    if (split.novel_words.empty()) split.warning = "no novel word occurs in two or more sentences; splits are empty";
    return split;
}

// ----------------------------------------------------------------- scorer

namespace {

double word_jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    if (sa.empty() && sb.empty()) return 0.0;
    std::size_t inter = 0;
    for (const auto& w : sa) inter += sb.count(w);
    return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

}  // namespace

SlidingWindowScorer::SlidingWindowScorer(int divisions) : divisions_(divisions) {
    if (divisions < 1) throw InvalidInput("sliding-window scorer needs at least one division");
}

std::vector<TemporalSpan> SlidingWindowScorer::score(const VideoContext& video, const std::string& query) const {
    if (!(video.duration > 0.0)) throw InvalidInput("video '" + video.video_id + "' has no duration");
    const auto qwords = content_words(query);
    std::vector<std::pair<double, TemporalSpan>> scored;
    const double step = video.duration / divisions_;
    for (int i = 0; i < divisions_; ++i)
        for (int j = i + 1; j <= divisions_; ++j) {
            TemporalSpan w(i * step, j == divisions_ ? video.duration : j * step);
            double best = 0.0;
            for (const auto& a : video.known)
                best = std::max(best, word_jaccard(qwords, content_words(a.query)) * temporal_iou(w, a.span));
            scored.emplace_back(best, w);
        }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<TemporalSpan> ranked;
    if (scored.empty() || scored.front().first <= 0.0)
        ranked.emplace_back(0.25 * video.duration, 0.75 * video.duration);
    for (const auto& [s, w] : scored) ranked.push_back(w);
    return ranked;
}

SampleScores per_sample_scores(const RetrievalScorer& scorer, const CandidatePool& items,
                               const std::map<std::string, VideoContext>& contexts, int jobs) {
    SampleScores out;
    const auto& list = items.items();
    std::vector<double> scores(list.size(), 0.0);
    std::vector<std::string> errors(list.size());

    auto work = [&](std::size_t i) {
        const auto& m = list[i];
        try {
            auto it = contexts.find(m.id);
            if (it == contexts.end()) it = contexts.find(m.source_video_id);
            if (it == contexts.end()) throw InvalidInput("no video context for '" + m.source_video_id + "'");
            const auto ranked = scorer.score(it->second, m.edit_prompt);
            if (ranked.empty()) throw Error("scorer returned no spans");
            scores[i] = temporal_iou(ranked.front(), m.span);
        } catch (const std::exception& e) {
            errors[i] = e.what();
            if (errors[i].empty()) errors[i] = "scorer failure";
        }
    };

    const std::size_t threads = scorer.read_safe() ? static_cast<std::size_t>(std::max(1, jobs)) : 1;
    if (threads <= 1 || list.size() < 2) {
        for (std::size_t i = 0; i < list.size(); ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < std::min(threads, list.size()); ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < list.size(); i = next++) work(i);
            });
    }

    for (std::size_t i = 0; i < list.size(); ++i) {
        if (errors[i].empty())
            out.scores[list[i].id] = scores[i];
        else
            out.errors[list[i].id] = errors[i];
    }
    return out;
}

}  // namespace forge
