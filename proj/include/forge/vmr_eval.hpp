#pragma once

#include "forge/curation.hpp"
#include "forge/moments.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace forge {

/// Intersection over union of two spans; 0 when disjoint.
double temporal_iou(const TemporalSpan& a, const TemporalSpan& b);

struct RetrievalPrediction {
    std::string video_id;
    std::string query;
    /// Best first.
    std::vector<TemporalSpan> ranked_spans;
};

struct Metrics {
    std::size_t rank_cutoff = 1;
    std::size_t queries = 0;
    /// (threshold, R@n) in the order the thresholds were given.
    std::vector<std::pair<double, double>> recall;
    double mean_iou = 0.0;
};

/// Predictions are matched to annotations on (video_id, query). Throws
/// InvalidInput when an annotation has no prediction.
Metrics evaluate(const std::vector<RetrievalPrediction>& preds, const std::vector<MomentAnnotation>& gt,
                 const std::vector<double>& thresholds = {0.3, 0.5, 0.7}, std::size_t n = 1);

std::string metrics_json(const Metrics& m);
std::string metrics_table(const Metrics& m);

/// `{video_id, start, end, query}` per line.
std::vector<MomentAnnotation> read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, const std::vector<MomentAnnotation>& annotations);
/// Same layout plus `ranked: [[s, e], ...]`; a record without `ranked` is
/// read as a single prediction at [start, end].
std::vector<RetrievalPrediction> read_predictions(const std::filesystem::path& path);
void write_predictions(const std::filesystem::path& path, const std::vector<RetrievalPrediction>& preds);

/// Lowercased, punctuation-stripped tokens with stopwords removed.
std::vector<std::string> content_words(const std::string& sentence);
bool is_stopword(const std::string& word);

struct NovelWordSplit {
    std::vector<std::string> novel_words;
    std::vector<MomentAnnotation> generation;
    std::vector<MomentAnnotation> test;
    /// Set when no qualifying novel word exists.
    std::string warning;
};

/// Words missing from `train_vocab` that occur in at least two sentences.
/// One sentence per word (seeded, never reused) goes to generation; the other
/// sentences holding a selected word form the test split.
NovelWordSplit novel_word_split(const std::vector<MomentAnnotation>& queries, const std::set<std::string>& train_vocab,
                                std::uint64_t seed);

struct VideoContext {
    std::string video_id;
    double duration = 0.0;
    std::vector<MomentAnnotation> known;
};

class RetrievalScorer {
public:
    virtual ~RetrievalScorer() = default;
    virtual std::vector<TemporalSpan> score(const VideoContext& video, const std::string& query) const = 0;
    /// Whether score() may be called from several threads at once.
    virtual bool read_safe() const { return false; }
};

/// Windows on a fixed grid over the video, ranked by the best
/// (word overlap x IoU) against the video's known annotations.
class SlidingWindowScorer final : public RetrievalScorer {
public:
    explicit SlidingWindowScorer(int divisions = 12);
    std::vector<TemporalSpan> score(const VideoContext& video, const std::string& query) const override;
    bool read_safe() const override { return true; }

private:
    int divisions_;
};

struct SampleScores {
    std::map<std::string, double> scores;
    /// id -> error message for items the scorer failed on.
    std::map<std::string, std::string> errors;
};

/// Top-1 IoU of each item's edit prompt against its own span. The context
/// is looked up by item id first, then by source_video_id.
SampleScores per_sample_scores(const RetrievalScorer& scorer, const CandidatePool& items,
                               const std::map<std::string, VideoContext>& contexts, int jobs = 1);

}  // namespace forge
