#include "gradcheck.hpp"
#include "support.hpp"

#include "forge/demo.hpp"
#include "forge/editor.hpp"
#include "forge/error.hpp"

#include <doctest.h>

#include <cmath>

using namespace forge;

namespace {

const NoiseSchedule& schedule() {
    static const NoiseSchedule s(100, 1e-4, 2e-2);
    return s;
}

struct Fixture {
    test_support::TempDir dir{"editor"};
    FrameSequence moment;
    FrameSequence classes;
    Fixture() {
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

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

DenoiserModel model(int dim, std::uint64_t seed) {
    DenoiserConfig c;
    c.embed_dim = dim;
    c.text_dim = dim;
    c.seed = seed;
    return DenoiserModel::create(c);
}

bool same_params(const DenoiserModel& a, const DenoiserModel& b, ParamGroup g) {
    return parameter_digest(a, g) == parameter_digest(b, g);
}

double mean_abs(const FrameSequence& a, const FrameSequence& b) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t f = 0; f < a.size(); ++f)
        for (std::size_t i = 0; i < a[f].pixels().size(); ++i) s += std::abs(a[f].pixels()[i] - b[f].pixels()[i]), ++n;
    return s / n;
}

// Trained once and shared by the editing cases.
const DenoiserModel& trained() {
    static const DenoiserModel m = [] {
        const auto& fx = fixture();
        auto s1 = train_stage1(model(32, 11), fx.batch(), schedule(), {200, 0.01, 5});
        return train_stage2(std::move(s1.model), fx.moment, "[v] a person opens the door", schedule(), {200, 0.01, 6})
            .model;
    }();
    return m;
}

}  // namespace

TEST_CASE("derived seeds") {
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
    CHECK(derive_seed(1, 0, 0) != derive_seed(2, 0, 0));
}

TEST_CASE("zero steps leave the model untouched") {
    const auto& fx = fixture();
    const auto m = model(8, 1);
    const auto s1 = train_stage1(m, fx.batch(), schedule(), {0, 0.01, 1});
    const auto s2 = train_stage2(m, fx.moment, "[v] person", schedule(), {0, 0.01, 1});
    for (const auto& [name, value] : m.parameters()) {
        CHECK((s1.model.parameter(name) - value).norm() == 0.0);
        CHECK((s2.model.parameter(name) - value).norm() == 0.0);
    }
    CHECK(s1.loss_history.empty());
}

TEST_CASE("stage 1 objective is the sum of its two terms") {
    const auto& fx = fixture();
    auto m = test_support::tiny_model(3);
    test_support::jitter_parameters(m, 4);
    std::vector<Latent> inst, cls;
    for (const auto& f : fx.batch().instance_frames) inst.push_back(encode(std::span<const Frame>(&f, 1)));
    for (const auto& f : fx.classes) cls.push_back(encode(std::span<const Frame>(&f, 1)));
    const auto pi = m.embed_prompt("a [v] person"), pc = m.embed_prompt("a person");
    const std::uint64_t step_seed = 99;
    const auto o = stage1_objective(m, inst, cls, pi, pc, schedule(), step_seed);

    Gradients sum;
    double li = 0.0, lc = 0.0;
    auto add = [&](const std::vector<Latent>& imgs, const PromptEmbedding& p, std::uint64_t slot, double& acc) {
        for (std::size_t j = 0; j < imgs.size(); ++j) {
            const auto r = ldm_loss(m, imgs[j], p, schedule(), derive_seed(step_seed, slot, j), GroupMask::stage1());
            acc += r.loss / imgs.size();
            for (const auto& [n, g] : r.grads) {
                auto [it, fresh] = sum.emplace(n, g / static_cast<double>(imgs.size()));
                if (!fresh) it->second += g / static_cast<double>(imgs.size());
            }
        }
    };
    add(inst, pi, 0, li);
    add(cls, pc, 1, lc);
    CHECK(o.instance_loss == doctest::Approx(li).epsilon(1e-14));
    CHECK(o.class_loss == doctest::Approx(lc).epsilon(1e-14));
    CHECK(o.loss == doctest::Approx(li + lc).epsilon(1e-14));
    REQUIRE(o.grads.size() == sum.size());
    for (const auto& [n, g] : o.grads) {
        CHECK(group_of(n) != ParamGroup::Temporal);
        CHECK((g - sum.at(n)).norm() <= 1e-12 * (1.0 + g.norm()));
    }

    auto loss = [&](const DenoiserModel& mm) {
        return stage1_objective(mm, inst, cls, mm.embed_prompt("a [v] person"), mm.embed_prompt("a person"),
                                schedule(), step_seed)
            .loss;
    };
    const auto fd = test_support::finite_difference_check(m, o.grads, loss);
    INFO("worst " << fd.worst);
    CHECK(fd.max_rel < 1e-4);
}

TEST_CASE("stage 2 objective averages per-frame losses") {
    const auto& fx = fixture();
    auto m = test_support::tiny_model(5);
    test_support::jitter_parameters(m, 6);
    const auto clip = encode(fx.moment);
    const auto p = m.embed_prompt("[v] a person opens the door");
    const std::uint64_t step_seed = 17;
    const auto r = stage2_objective(m, clip, p, schedule(), step_seed);
    for (const auto& [n, _] : r.grads) CHECK(group_of(n) == ParamGroup::Temporal);

    // independent recomputation with the same draw
    const auto draw = draw_noise(clip, schedule(), derive_seed(step_seed, 2, 0));
    CHECK(r.timestep == draw.timestep);
    const auto zt = forward_noise(clip, draw.timestep, draw.eps, schedule());
    const auto pred = m.predict(zt, draw.timestep, p);
    const std::size_t per = clip.size() / clip.frames;
    double mean = 0.0;
    REQUIRE(r.per_frame.size() == fx.moment.size());
    for (int f = 0; f < clip.frames; ++f) {
        double s = 0.0;
        for (std::size_t i = 0; i < per; ++i) {
            const double d = draw.eps.values[f * per + i] - pred.values[f * per + i];
            s += d * d;
        }
        CHECK(r.per_frame[f] == doctest::Approx(s / per).epsilon(1e-12));
        mean += s / per / clip.frames;
    }
    CHECK(r.loss == doctest::Approx(mean).epsilon(1e-12));

    auto loss = [&](const DenoiserModel& mm) { return stage2_objective(mm, clip, p, schedule(), step_seed).loss; };
    const auto fd = test_support::finite_difference_check(m, r.grads, loss);
    INFO("worst " << fd.worst);
    CHECK(fd.max_rel < 1e-4);
}

TEST_CASE("stage 1 reduces the loss and freezes temporal parameters") {
    const auto& fx = fixture();
    const auto m0 = model(16, 2);
    const double before = evaluate_stage1(m0, fx.batch(), schedule(), 3, 8);
    const auto r = train_stage1(m0, fx.batch(), schedule(), {200, 0.01, 4});
    CHECK(evaluate_stage1(r.model, fx.batch(), schedule(), 3, 8) < before);
    CHECK(r.loss_history.size() == 200);
    CHECK(same_params(m0, r.model, ParamGroup::Temporal));
    CHECK_FALSE(same_params(m0, r.model, ParamGroup::Spatial));
    CHECK_FALSE(same_params(m0, r.model, ParamGroup::Token));
}

TEST_CASE("stage 2 reduces the loss and freezes spatial and token parameters") {
    const auto& fx = fixture();
    const auto s1 = train_stage1(model(16, 3), fx.batch(), schedule(), {50, 0.01, 4}).model;
    const std::string prompt = "[v] a person opens the door";
    const double before = evaluate_stage2(s1, fx.moment, prompt, schedule(), 5, 16);
    const auto r = train_stage2(s1, fx.moment, prompt, schedule(), {200, 0.01, 6});
    CHECK(evaluate_stage2(r.model, fx.moment, prompt, schedule(), 5, 16) < before);
    CHECK(same_params(s1, r.model, ParamGroup::Spatial));
    CHECK(same_params(s1, r.model, ParamGroup::Token));
    CHECK_FALSE(same_params(s1, r.model, ParamGroup::Temporal));
}

TEST_CASE("training errors") {
    const auto& fx = fixture();
    auto b = fx.batch();
    b.class_images.clear();
    CHECK_THROWS_AS(train_stage1(model(8, 1), b, schedule(), {1, 0.01, 1}), InvalidInput);
    CHECK_THROWS_AS(train_stage1(model(8, 1), fx.batch(), schedule(), {-1, 0.01, 1}), InvalidInput);

    DenoiserConfig none;
    none.embed_dim = 8;
    none.text_dim = 8;
    none.instance_tokens = {};
    CHECK_THROWS_AS(train_stage2(DenoiserModel::create(none), fx.moment, "a person", schedule(), {1, 0.01, 1}),
                    InvalidInput);

    try {
        train_stage1(model(8, 1), fx.batch(), schedule(), {50, 1e6, 1});
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.step() >= 0);
        CHECK(e.step() < 50);
    }
}

TEST_CASE("editing") {
    const auto& fx = fixture();
    const auto& m = trained();
    EditRequest req;
    req.moment = fx.moment;
    req.source_prompt = "[v] a person opens the door";
    req.edit_prompt = req.source_prompt;
    const auto recon = edit_moment(m, req, schedule());
    REQUIRE(recon.size() == fx.moment.size());
    for (std::size_t i = 0; i < recon.size(); ++i) CHECK(recon[i].same_shape(fx.moment[i]));
    CHECK(mean_abs(recon, fx.moment) < 0.05);

    // prompt orthogonal to the source in the text space
    auto other = req;
    other.edit_prompt = "[v] juggles beside window";
    const auto pa = m.embed_prompt(req.source_prompt).pooled(), pb = m.embed_prompt(other.edit_prompt).pooled();
    MESSAGE("pooled-prompt cosine " << pa.dot(pb) / (pa.norm() * pb.norm()));
    const auto edited = edit_moment(m, other, schedule());
    CHECK(mean_abs(edited, recon) > 1e-3);

    const auto again = edit_moment(m, other, schedule());
    for (std::size_t i = 0; i < edited.size(); ++i) CHECK(edited[i].pixels()[0] == again[i].pixels()[0]);

    auto unknown = req;
    unknown.edit_prompt = "[w] person";
    CHECK_THROWS_AS(edit_moment(m, unknown, schedule()), UnknownTokenError);
    auto too_many = req;
    too_many.inversion_steps = 101;
    CHECK_THROWS_AS(edit_moment(m, too_many, schedule()), InvalidInput);

    const auto null_inv = edit_moment(m, req, schedule(), {.null_prompt_inversion = true});
    CHECK(null_inv.size() == fx.moment.size());
    const auto literal = edit_moment(m, req, schedule(), {.literal_inversion = true});
    CHECK(literal.size() == fx.moment.size());
}
