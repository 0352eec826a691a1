// One PASS/FAIL line per acceptance criterion. Exit status is nonzero when
// any criterion fails. Pass criterion numbers to run a subset.
#include "frame_oracles.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

#include "forge/curation.hpp"
#include "forge/demo.hpp"
#include "forge/diffusion.hpp"
#include "forge/editor.hpp"
#include "forge/frames.hpp"
#include "forge/pipeline.hpp"
#include "forge/vmr_eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace forge;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

const NoiseSchedule& sched() {
    static const NoiseSchedule s(100, 1e-4, 2e-2);
    return s;
}

// Demo frames, shared by the criteria that need a real moment.
struct DemoData {
    test_support::TempDir dir{"accept"};
    FrameSequence moment, classes;
    DemoData() {
        write_demo_data(dir.path());
        moment = frame_io::load_sequence(dir / "videos/vid_a/m0");
        classes = frame_io::load_sequence(dir / "classes");
    }
    TrainingBatch batch() const {
        TrainingBatch b;
        b.instance_frames = {moment[0], moment[2], moment[3]};
        b.class_images = classes;
        return b;
    }
};

const DemoData& demo() {
    static const DemoData d;
    return d;
}

DenoiserModel toy(int dim, std::uint64_t seed) {
    DenoiserConfig c;
    c.embed_dim = dim;
    c.text_dim = dim;
    c.seed = seed;
    return DenoiserModel::create(c);
}

// ------------------------------------------------------------------ 1

Outcome harmonic() {
    const double a = harmonic_score(0.263, 0.568), b = harmonic_score(0.282, 0.397);
    return {std::abs(a - 0.359) <= 1e-3 && std::abs(b - 0.329) <= 1e-3,
            fmt("H(0.263,0.568)=%.4f", a) + fmt(" H(0.282,0.397)=%.4f", b)};
}

// ------------------------------------------------------------------ 2

Outcome gradients() {
    std::mt19937_64 rng(11);
    auto m = test_support::tiny_model(2);
    test_support::jitter_parameters(m, 3);
    const std::size_t params = m.parameter_count();
    auto frame = [&] { return test_support::random_frame(rng, 4, 4); };

    FrameSequence clip{frame(), frame(), frame()};
    const auto z_clip = encode(clip);
    const auto f0 = frame();
    const auto z0 = encode(std::span<const Frame>(&f0, 1));
    const std::string prompt = "a [v] person waves";
    std::vector<Latent> inst, cls;
    for (int i = 0; i < 2; ++i) {
        const auto a = frame(), b = frame();
        inst.push_back(encode(std::span<const Frame>(&a, 1)));
        cls.push_back(encode(std::span<const Frame>(&b, 1)));
    }

    double worst = 0.0;
    std::string where;
    auto record = [&](const test_support::GradCheck& g, const std::string& what) {
        if (g.max_rel >= worst) worst = g.max_rel, where = what + ":" + g.worst;
    };

    const auto p = m.embed_prompt(prompt);
    const auto l = ldm_loss(m, z0, p, sched(), 5);
    record(test_support::finite_difference_check(m, l.grads, [&](const DenoiserModel& mm) {
               return ldm_loss_value(mm, z0, mm.embed_prompt(prompt), sched(), 5);
           }),
           "ldm");

    const auto s1 = stage1_objective(m, inst, cls, p, m.embed_prompt("a person"), sched(), 6);
    record(test_support::finite_difference_check(m, s1.grads, [&](const DenoiserModel& mm) {
               return stage1_objective(mm, inst, cls, mm.embed_prompt(prompt), mm.embed_prompt("a person"), sched(), 6)
                   .loss;
           }),
           "idl");

    const auto s2 = stage2_objective(m, z_clip, p, sched(), 7);
    record(test_support::finite_difference_check(
               m, s2.grads, [&](const DenoiserModel& mm) { return stage2_objective(mm, z_clip, p, sched(), 7).loss; }),
           "te");

    return {worst < 1e-4 && params <= 200,
            std::to_string(params) + " params, max rel err " + fmt("%.2e", worst) + " at " + where};
}

// ------------------------------------------------------------------ 3

Outcome freeze() {
    const auto& d = demo();
    const auto init = toy(16, 21);
    const auto s1 = train_stage1(init, d.batch(), sched(), {100, 0.01, 1}).model;
    const auto s2 = train_stage2(s1, d.moment, "[v] a person opens the door", sched(), {100, 0.01, 2}).model;
    std::size_t changed = 0;
    auto count = [&](const DenoiserModel& a, const DenoiserModel& b, ParamGroup g) {
        for (const auto& [name, value] : a.parameters())
            if (group_of(name) == g && b.parameter(name) != value) ++changed;
    };
    count(init, s1, ParamGroup::Temporal);
    count(s1, s2, ParamGroup::Spatial);
    count(s1, s2, ParamGroup::Token);
    const bool moved = parameter_digest(init, ParamGroup::Spatial) != parameter_digest(s1, ParamGroup::Spatial) &&
                       parameter_digest(s1, ParamGroup::Temporal) != parameter_digest(s2, ParamGroup::Temporal);
    return {changed == 0 && moved, std::to_string(changed) + " frozen tensors changed; trained groups moved: " +
                                       (moved ? "yes" : "no")};
}

// ------------------------------------------------------------------ 4

Outcome round_trip() {
    const auto& d = demo();
    const std::string prompt = "[v] a person opens the door";
    auto m = train_stage1(toy(32, 11), d.batch(), sched(), {200, 0.01, 5}).model;
    m = train_stage2(std::move(m), d.moment, prompt, sched(), {200, 0.01, 6}).model;
    const auto z0 = encode(d.moment);
    const auto p = m.embed_prompt(prompt);
    auto err = [&](int steps) {
        const auto rec = ddim_sample(m, ddim_invert(m, z0, p, sched(), steps), p, sched(), steps);
        double e = 0.0;
        for (std::size_t i = 0; i < z0.size(); ++i) e = std::max(e, std::abs(rec.values[i] - z0.values[i]));
        return e;
    };
    const double e50 = err(50), e10 = err(10);
    return {e50 < 1e-2 && e50 < e10, fmt("max err 50 steps %.4f", e50) + fmt(", 10 steps %.4f", e10)};
}

// ------------------------------------------------------------------ 5

Outcome noise_stats() {
    std::mt19937_64 rng(31);
    const auto f = test_support::random_frame(rng, 8, 8);
    const auto z0 = encode(std::span<const Frame>(&f, 1));
    double mean0 = 0.0, var0 = 0.0;
    for (double v : z0.values) mean0 += v / z0.size();
    for (double v : z0.values) var0 += (v - mean0) * (v - mean0) / z0.size();

    double worst = 0.0;
    std::string detail;
    for (int t : {10, 50, 100}) {
        double s = 0.0, s2 = 0.0;
        std::size_t n = 0;
        for (int k = 0; k < 10000; ++k) {
            const auto draw = draw_noise(z0, sched(), derive_seed(77, static_cast<std::uint64_t>(k), 0));
            for (double v : forward_noise(z0, t, draw.eps, sched()).values) s += v, s2 += v * v, ++n;
        }
        const double var = s2 / n - (s / n) * (s / n);
        const double ab = sched().alpha_bar(t);
        const double expect = (1.0 - ab) + ab * var0;
        const double rel = std::abs(var - expect) / expect;
        worst = std::max(worst, rel);
        detail += "t=" + std::to_string(t) + fmt(" %.4f", var) + fmt("/%.4f  ", expect);
    }
    return {worst < 0.05, detail + fmt("worst rel %.4f", worst)};
}

// ------------------------------------------------------------------ 6

Outcome frame_selection() {
    std::mt19937_64 rng(41);
    std::uniform_int_distribution<int> len(1, 64);
    int mismatch = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = len(rng);
        FrameSequence fs;
        for (int i = 0; i < n; ++i) fs.push_back(test_support::random_frame(rng, 6, 5, static_cast<std::size_t>(i)));
        const auto m = static_cast<std::size_t>(std::uniform_int_distribution<int>(1, n)(rng));
        const bool raw = trial % 2 == 1;
        if (select_frames(fs, m, {.raw = raw}) != test_support::ref_select(test_support::ref_phi(fs, raw), m))
            ++mismatch;
    }
    int broken = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto a = test_support::random_frame(rng, 6, 6), b = test_support::random_frame(rng, 6, 6);
        if (histogram_dissimilarity(a, b) != histogram_dissimilarity(b, a)) ++broken;
        if (histogram_dissimilarity(a, a) != 0.0) ++broken;
    }
    return {mismatch == 0 && broken == 0, std::to_string(mismatch) + "/200 oracle mismatches, " +
                                              std::to_string(broken) + " symmetry/identity violations"};
}

// ------------------------------------------------------------------ 7

std::vector<std::string> ids(const CandidatePool& p) {
    std::vector<std::string> out;
    for (const auto& m : p.items()) out.push_back(m.id);
    return out;
}

Outcome selection() {
    std::mt19937_64 rng(51);
    int bad = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng() % 60;
        std::vector<GeneratedMoment> items;
        std::map<std::string, double> vmr;
        for (std::size_t i = 0; i < n; ++i) {
            GeneratedMoment g;
            g.id = "c" + std::to_string(i * 7919 % 1009);
            g.h_score = static_cast<double>(rng() % 8) / 8.0;
            vmr[g.id] = static_cast<double>(rng() % 8) / 8.0;
            items.push_back(g);
        }
        std::shuffle(items.begin(), items.end(), rng);
        const CandidatePool pool(items);
        const std::size_t k = 1 + rng() % n, l = 1 + rng() % k;

        auto top = items;
        std::sort(top.begin(), top.end(),
                  [](auto& a, auto& b) { return a.h_score != b.h_score ? a.h_score > b.h_score : a.id < b.id; });
        std::vector<std::string> want_k;
        for (std::size_t i = 0; i < k; ++i) want_k.push_back(top[i].id);
        const auto got_k = quantitative_select(pool, k);
        if (ids(got_k) != want_k) ++bad;

        std::vector<std::pair<double, std::string>> low;
        for (const auto& g : got_k.items()) low.emplace_back(vmr[g.id], g.id);
        std::sort(low.begin(), low.end());
        std::vector<std::string> want_l;
        for (std::size_t i = 0; i < l; ++i) want_l.push_back(low[i].second);
        const auto got_l = qualitative_select(got_k, vmr, l);
        if (ids(got_l) != want_l) ++bad;

        // idempotence and input-order invariance
        if (ids(quantitative_select(got_k, k)) != want_k) ++bad;
        if (ids(qualitative_select(got_l, vmr, l)) != want_l) ++bad;
        auto perm = items;
        std::shuffle(perm.begin(), perm.end(), rng);
        if (ids(quantitative_select(CandidatePool(perm), k)) != want_k) ++bad;
        auto perm_k = got_k.items();
        std::shuffle(perm_k.begin(), perm_k.end(), rng);
        if (ids(qualitative_select(CandidatePool(perm_k), vmr, l)) != want_l) ++bad;
    }
    return {bad == 0, std::to_string(bad) + " disagreements over 200 pools"};
}

// ------------------------------------------------------------------ 8

bool ordered(const Video& v) {
    for (std::size_t i = 0; i < v.moments.size(); ++i) {
        if (!(v.moments[i].span.start < v.moments[i].span.end)) return false;
        if (i && v.moments[i].span.start < v.moments[i - 1].span.end - 1e-9) return false;
    }
    return true;
}

Outcome assembly() {
    Video v;
    v.video_id = "fixture";
    v.moments = {{TemporalSpan(0, 5), "a", "", false}, {TemporalSpan(5, 9), "b", "", false}, {TemporalSpan(9, 12), "c", "", false}};
    const auto rep = assemble_variant(v, 1, {4.0, "edit", ""}, AssembleMode::Replace);
    const auto inj = assemble_variant(v, 1, {4.0, "edit", ""}, AssembleMode::Inject);
    bool ok = rep.duration() == v.duration() && rep.moments.size() == 3 && rep.moments[1].query == "edit";
    ok = ok && inj.moments.size() == 4 && inj.moments[2].span == TemporalSpan(9, 13) &&
         inj.moments[3].span == TemporalSpan(13, 16) && inj.moments[0].span == v.moments[0].span &&
         inj.moments[1].span == v.moments[1].span;

    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> len(0.25, 7.0);
    int bad = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Video r;
        r.video_id = "r";
        double t = len(rng);
        const std::size_t n = 1 + rng() % 8;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = len(rng);
            r.moments.push_back({TemporalSpan(t, t + d), "q", "", false});
            t += d + (rng() % 2 ? len(rng) : 0.0);
        }
        const std::size_t i = rng() % n;
        const double d = len(rng);
        const auto place = rng() % 2 ? InjectPlacement::After : InjectPlacement::Before;
        const auto a = assemble_variant(r, i, {d, "e", ""}, AssembleMode::Inject, place);
        const std::size_t first_shifted = place == InjectPlacement::After ? i + 1 : i;
        bool good = ordered(a) && a.moments.size() == n + 1 && std::abs(a.duration() - r.duration() - d) < 1e-9;
        for (std::size_t j = 0; j < n; ++j) {
            const auto& after = a.moments[j < first_shifted ? j : j + 1].span;
            const double shift = j < first_shifted ? 0.0 : d;
            good = good && std::abs(after.start - r.moments[j].span.start - shift) < 1e-9 &&
                   std::abs(after.end - r.moments[j].span.end - shift) < 1e-9;
        }
        const auto b = assemble_variant(r, i, {r.moments[i].span.length(), "e", ""}, AssembleMode::Replace);
        good = good && ordered(b) && b.moments.size() == n && b.duration() == r.duration();
        if (!good) ++bad;
    }
    return {ok && bad == 0, std::string("fixture ") + (ok ? "ok" : "wrong") + ", " + std::to_string(bad) +
                                "/100 random assemblies broke an invariant"};
}

// ------------------------------------------------------------------ 9

Outcome metrics() {
    const std::vector<MomentAnnotation> gt{{"a", TemporalSpan(0, 10), "q1"},
                                           {"a", TemporalSpan(0, 10), "q2"},
                                           {"b", TemporalSpan(0, 10), "q3"},
                                           {"b", TemporalSpan(0, 10), "q4"}};
    // top-1 IoU 1.0, 0.6, 0.4, 0.0
    const std::vector<RetrievalPrediction> preds{{"a", "q1", {TemporalSpan(0, 10)}},
                                                 {"a", "q2", {TemporalSpan(0, 6)}},
                                                 {"b", "q3", {TemporalSpan(0, 4)}},
                                                 {"b", "q4", {TemporalSpan(20, 30)}}};
    const auto m = evaluate(preds, gt, {0.3, 0.5, 0.7}, 1);
    const std::vector<std::pair<double, double>> want{{0.3, 0.75}, {0.5, 0.5}, {0.7, 0.25}};
    const double iou = temporal_iou(TemporalSpan(0, 10), TemporalSpan(5, 15));
    const bool ok = m.recall == want && m.mean_iou == 0.5 && std::abs(iou - 1.0 / 3.0) < 1e-9;
    std::ostringstream s;
    s << "R@1 " << m.recall[0].second << "/" << m.recall[1].second << "/" << m.recall[2].second << ", mIoU "
      << m.mean_iou << ", iou([0,10],[5,15])=" << fmt("%.9f", iou);
    return {ok, s.str()};
}

// ----------------------------------------------------------------- 10

Outcome split() {
    std::vector<MomentAnnotation> corpus;
    const std::vector<std::pair<std::string, int>> novel{{"juggles", 2}, {"kayak", 3}, {"lasso", 3}, {"mural", 5}};
    const std::vector<std::string> known{"person", "walks", "door", "opens", "sits", "table", "room"};
    int id = 0;
    for (const auto& [w, k] : novel)
        for (int i = 0; i < k; ++i)
            corpus.push_back({"v" + std::to_string(id++), TemporalSpan(0, 1), "a person " + w + " " + known[i]});
    while (corpus.size() < 20)
        corpus.push_back({"v" + std::to_string(id), TemporalSpan(0, 1), "the person " + known[id % 7]}), ++id;
    const std::set<std::string> vocab(known.begin(), known.end());

    auto as_set = [](const std::vector<MomentAnnotation>& a) {
        std::set<std::string> s;
        for (const auto& x : a) s.insert(x.video_id);
        return s;
    };
    bool ok = true;
    std::size_t gen = 0, test = 0;
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const auto r = novel_word_split(corpus, vocab, seed);
        const auto g = as_set(r.generation), t = as_set(r.test);
        gen = r.generation.size(), test = r.test.size();
        ok = ok && gen == 4 && test == 9 && g.size() == gen && t.size() == test;
        for (const auto& x : g) ok = ok && !t.contains(x);
        const auto again = novel_word_split(corpus, vocab, seed);
        ok = ok && as_set(again.generation) == g && as_set(again.test) == t;
    }
    return {ok, std::to_string(gen) + " generation / " + std::to_string(test) + " test sentences, 25 seeds checked"};
}

// ----------------------------------------------------------------- 11

Outcome end_to_end() {
    test_support::TempDir dir("e2e");
    write_demo_data(dir.path());
    auto c = load_config(dir / "forge.ini");
    c.jobs = 1;
    const auto t0 = std::chrono::steady_clock::now();
    c.paths.output = dir / "run_a";
    const auto a = run_pipeline(c);
    c.paths.output = dir / "run_b";
    const auto b = run_pipeline(c);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool same = a.stages.size() == pipeline_stages().size() && a.stages.size() == b.stages.size();
    for (std::size_t i = 0; same && i < a.stages.size(); ++i)
        same = a.stages[i].output_digest == b.stages[i].output_digest && !b.stages[i].skipped;
    return {same && secs / 2 < 300.0, fmt("two runs in %.1f s, ", secs) + (same ? "digests identical" : "digests differ")};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"harmonic-score reproduction", harmonic},
        {"gradient correctness", gradients},
        {"freeze invariant", freeze},
        {"DDIM round trip", round_trip},
        {"forward-noise statistics", noise_stats},
        {"frame-selection oracle", frame_selection},
        {"selection oracles", selection},
        {"assembly invariants", assembly},
        {"evaluation-metric oracle", metrics},
        {"split construction", split},
        {"end-to-end demo", end_to_end},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i) + 1;
        if (!only.empty() && !only.contains(n)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (n < 10 ? " " : "") << n << ". " << criteria[i].first
                  << ": " << o.detail << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
