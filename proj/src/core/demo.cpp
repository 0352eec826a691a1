#include "forge/demo.hpp"

#include "forge/curation.hpp"
#include "forge/embedder.hpp"
#include "forge/error.hpp"
#include "forge/frames.hpp"
#include "forge/vmr_eval.hpp"

#include <cmath>
#include <fstream>
#include <random>

namespace forge {

namespace fs = std::filesystem;

namespace {

constexpr int kSize = 8;
constexpr int kFramesPerMoment = 4;

struct MomentSpec {
    const char* query;
    int dx, dy;  // motion per frame
};

struct VideoSpec {
    const char* id;
    double tilt;  // background gradient direction
    MomentSpec moments[3];
};

const VideoSpec kVideos[] = {
    {"vid_a", 0.0, {{"a person opens the door", 1, 0}, {"a person walks to the window", 1, 1}, {"a person sits on the chair", 0, 1}}},
    {"vid_b", 1.0, {{"a person picks up a cup", -1, 0}, {"a person turns on the light", 0, -1}, {"a person closes the door", -1, 1}}},
};

struct CorpusLine {
    const char* video;
    int moment;
    const char* query;
};

const CorpusLine kCorpus[] = {
    {"vid_a", 0, "a person juggles beside the door"},
    {"vid_b", 1, "a person juggles under the light"},
    {"vid_a", 1, "a person dances toward the window"},
    {"vid_b", 0, "a person dances holding a cup"},
    {"vid_a", 2, "a person dances near the chair"},
    {"vid_b", 2, "a person waves beside the door"},
    {"vid_a", 0, "a person waves at the door"},
    {"vid_b", 1, "a person sneezes under the light"},
    {"vid_a", 2, "a person sits on the chair"},
};

Frame blob_frame(double tilt, double cx, double cy, double radius, double level, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> jitter(-0.03, 0.03);
    Frame f(kSize, kSize, 1);
    for (int y = 0; y < kSize; ++y)
        for (int x = 0; x < kSize; ++x) {
            const double u = (1.0 - tilt) * x + tilt * y;
            double v = 0.2 + 0.25 * u / (kSize - 1);
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            v += (level - v) * std::exp(-d2 / (2.0 * radius * radius));
            f.at(0, y, x) = std::clamp(v + jitter(rng), 0.0, 1.0);
        }
    return f;
}

std::string moment_dir(const std::string& video, int i) { return video + "/m" + std::to_string(i); }

}  // namespace

void write_demo_data(const fs::path& dir, std::uint64_t seed) {
    fs::create_directories(dir);
    std::mt19937_64 rng(seed);
    const double fps = 1.0;

    std::vector<MomentAnnotation> source;
    for (const auto& vs : kVideos) {
        Video video{vs.id, fps, {}};
        double t = 0.0;
        for (int i = 0; i < 3; ++i) {
            const auto& ms = vs.moments[i];
            FrameSequence frames;
            double cx = 3.5 - ms.dx * 1.5, cy = 3.5 - ms.dy * 1.5;
            for (int k = 0; k < kFramesPerMoment; ++k) {
                frames.push_back(blob_frame(vs.tilt, cx, cy, 1.2 + 0.2 * i, 0.85, rng));
                cx += ms.dx;
                cy += ms.dy;
            }
            frame_io::save_sequence(dir / "videos" / moment_dir(vs.id, i), frames);
            const double len = kFramesPerMoment / fps;
            VideoMoment vm{TemporalSpan(t, t + len), ms.query, moment_dir(vs.id, i), false};
            source.push_back({vs.id, vm.span, ms.query});
            video.moments.push_back(std::move(vm));
            t += len;
        }
        write_video(dir / "videos" / (std::string(vs.id) + ".json"), video);
    }
    write_annotations(dir / "annotations.jsonl", source);

    std::vector<MomentAnnotation> corpus;
    for (const auto& c : kCorpus) {
        const double start = c.moment * kFramesPerMoment / fps;
        corpus.push_back({c.video, TemporalSpan(start, start + kFramesPerMoment / fps), c.query});
    }
    write_annotations(dir / "target_corpus.jsonl", corpus);

    // generic "person" images for prior preservation
    FrameSequence classes;
    std::uniform_real_distribution<double> pos(1.5, 5.5), tilt(0.0, 1.0), level(0.7, 0.95);
    for (int i = 0; i < 4; ++i) classes.push_back(blob_frame(tilt(rng), pos(rng), pos(rng), 1.3, level(rng), rng));
    frame_io::save_sequence(dir / "classes", classes);

    ToyEmbedder::write_projection(dir / "embeddings", 16, seed ^ 0x5eedULL);

    std::ofstream ini(dir / "forge.ini");
    if (!ini) throw IoError("cannot write " + (dir / "forge.ini").string());
    ini << "[paths]\n"
           "videos = videos\n"
           "classes = classes\n"
           "annotations = annotations.jsonl\n"
           "corpus = target_corpus.jsonl\n"
           "embeddings = embeddings\n"
           "output = run\n"
           "\n"
           "[diffusion]\n"
           "timesteps = 100\n"
           "beta_start = 0.0001\n"
           "beta_end = 0.02\n"
           "embed_dim = 32\n"
           "latent = identity\n"
           "literal_inversion = false\n"
           "\n"
           "[frames]\n"
           "select = 3\n"
           "raw_phi = false\n"
           "\n"
           "[train]\n"
           "stage1_steps = 200\n"
           "stage2_steps = 100\n"
           "learning_rate = 0.01\n"
           "instance_token = [v]\n"
           "class_prompt = a person\n"
           "\n"
           "[edit]\n"
           "inversion_steps = 50\n"
           "sampling_steps = 50\n"
           "null_prompt_inversion = false\n"
           "\n"
           "[curation]\n"
           "k = 8\n"
           "l = 4\n"
           "mode = replace\n"
           "placement = after\n"
           "aggregation = aggregate\n"
           "\n"
           "[eval]\n"
           "thresholds = 0.3,0.5,0.7\n"
           "rank = 1\n"
           "windows = 12\n"
           "\n"
           "[run]\n"
           "seed = 1234\n"
           "jobs = 1\n";
}

}  // namespace forge
