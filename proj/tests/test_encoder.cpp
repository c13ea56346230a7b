#include "doctest.h"

#include <cmath>

#include "uskel/encoder.hpp"
#include "uskel/loss.hpp"
#include "uskel/rng.hpp"

using namespace uskel;
using namespace uskel::enc;
using num::Array;
using num::GraphCtx;
using num::Init;
using num::Node;
using num::ParamStore;
using num::Tape;

namespace {

skel::SkeletonFormat chain(const std::string& id, size_t k) {
    skel::SkeletonFormat f;
    f.format_id = id;
    for (size_t j = 0; j < k; ++j) {
        f.joints.push_back("j" + std::to_string(j));
        f.parent_of.push_back(j == 0 ? 0 : j - 1);
    }
    f.coord_dims = 3;
    f.max_members = 1;
    return f;
}

struct Fixture {
    skel::SkeletonFormat fmt;
    skel::UnifiedSpace space;
    std::vector<skel::ModalityTriple> mods;
    std::vector<std::vector<uint8_t>> masks;
    EncoderConfig cfg;

    Fixture(size_t k, size_t t, size_t n, uint64_t seed, size_t d_hidden = 8, size_t layers = 1)
        : fmt(chain("fx", k)) {
        space = skel::build_unified_space({fmt});
        Rng rng(seed);
        for (size_t i = 0; i < n; ++i) {
            skel::RawSequence seq;
            seq.format_id = "fx";
            seq.frames = t;
            seq.members = 1;
            seq.label_ids = {static_cast<int>(i % 3)};
            seq.data.resize(t * k * 3);
            for (double& x : seq.data) x = rng.normal();
            auto u = skel::unify(seq, space, fmt, skel::Padding::zero);
            mods.push_back(skel::derive_modalities(u, space, fmt));
            masks.push_back(u.joint_mask);
        }
        cfg.d_hidden = d_hidden;
        cfg.layers = layers;
        cfg.heads = 2;
        cfg.ffn_mult = 2;
        cfg.d_semantic = 8;
        cfg.t_max = t;
        cfg.n_seg = 2;
        cfg.n_part = 2;
        cfg.part_of_slot = default_part_map(space, 2);
    }

    Batch batch(skel::Padding padding = skel::Padding::zero) const {
        std::vector<const skel::ModalityTriple*> mp;
        std::vector<const std::vector<uint8_t>*> kp;
        for (size_t i = 0; i < mods.size(); ++i) {
            mp.push_back(&mods[i]);
            kp.push_back(&masks[i]);
        }
        return make_batch(mp, kp, space.k_unified, space.m_unified, padding);
    }
};

} // namespace

TEST_CASE("sinusoidal positions: zeros and ones at position 0") {
    Array pe = sinusoidal_positions(3, 6);
    for (size_t i = 0; i < 6; ++i) CHECK(pe[i] == (i % 2 == 0 ? 0.0 : 1.0));
    CHECK(pe[2 * 6 + 0] == doctest::Approx(std::sin(2.0)));
    CHECK(pe[2 * 6 + 1] == doctest::Approx(std::cos(2.0)));
}

TEST_CASE("segment bounds distribute floor/ceil lengths, longer first") {
    auto b = segment_bounds(6, 4);
    REQUIRE(b.size() == 4);
    CHECK(b[0].second == 2);
    CHECK(b[1].second == 2);
    CHECK(b[2].second == 1);
    CHECK(b[3].second == 1);
    CHECK(b[3].first + b[3].second == 6);
    CHECK_THROWS_AS(segment_bounds(3, 4), EncError);
}

TEST_CASE("degenerate L=0 temporal stream is exactly H_mmt + E_pos") {
    Fixture fx(4, 5, 2, 31, 8, 0);
    ParamStore store(31);
    Tape tape;
    GraphCtx ctx{tape, store, true};
    Batch b = fx.batch();
    auto [h_mmt, h_mms] = embed_and_fuse(b, fx.cfg, ctx);
    auto [vt, vs] = encode_streams(h_mmt, h_mms, b, fx.cfg, ctx);
    CHECK(vt.shape() == num::Shape{2, 5, 8});
    Array pe = sinusoidal_positions(5, 8);
    for (size_t i = 0; i < 2; ++i)
        for (size_t t = 0; t < 5; ++t)
            for (size_t d = 0; d < 8; ++d) {
                double want = h_mmt.val()[(i * 5 + t) * 8 + d] + pe[t * 8 + d];
                CHECK(vt.val()[(i * 5 + t) * 8 + d] == doctest::Approx(want).epsilon(1e-12));
            }
}

TEST_CASE("forward shape contract") {
    for (size_t t : std::vector<size_t>{4, 6, 9}) {
        Fixture fx(5, t, 3, 17);
        ParamStore store(17);
        Tape tape;
        GraphCtx ctx{tape, store, false};
        FeatureBundle out = forward(fx.batch(), fx.cfg, ctx);
        CHECK(out.vt_seq.shape() == num::Shape{3, t, 8});
        CHECK(out.vs_seq.shape() == num::Shape{3, 5, 8});
        CHECK(out.vg.shape() == num::Shape{3, 16});
        CHECK(out.v.shape() == num::Shape{3, 8});
        CHECK(out.v_t_local.shape() == num::Shape{3, 2, 8});
        CHECK(out.v_s_local.shape() == num::Shape{3, 2, 8});
    }
}

TEST_CASE("fusion: identical modality embeddings average to themselves") {
    Fixture fx(4, 4, 2, 23);
    for (auto& m : fx.mods) {
        m.bone = m.joint;
        m.motion = m.joint;
    }
    ParamStore store(23);
    {
        Tape tape;
        GraphCtx ctx{tape, store, true};
        embed_and_fuse(fx.batch(), fx.cfg, ctx); // materialize parameters
    }
    for (const char* stream : {"t", "s"})
        for (const char* mod : {"bone", "motion"})
            for (const char* p : {"w1", "b1", "w2", "b2"}) {
                std::string src = std::string("embed.") + stream + ".joint." + p;
                std::string dst = std::string("embed.") + stream + "." + mod + "." + p;
                store.at(dst) = store.at(src);
            }
    Tape tape;
    GraphCtx ctx{tape, store, false};
    auto [h_all, hs_all] = embed_and_fuse(fx.batch(), fx.cfg, ctx);

    EncoderConfig joint_only = fx.cfg;
    joint_only.mod_bone = joint_only.mod_motion = false;
    Tape tape2;
    GraphCtx ctx2{tape2, store, false};
    auto [h_single, hs_single] = embed_and_fuse(fx.batch(), joint_only, ctx2);
    for (size_t i = 0; i < h_all.val().size(); ++i)
        CHECK(h_all.val()[i] == doctest::Approx(h_single.val()[i]).epsilon(1e-12));
    for (size_t i = 0; i < hs_all.val().size(); ++i)
        CHECK(hs_all.val()[i] == doctest::Approx(hs_single.val()[i]).epsilon(1e-12));
}

TEST_CASE("fusion: zero logits reproduce the fixed equal weighting") {
    Fixture fx(4, 4, 2, 29);
    ParamStore store(29);
    Tape t1;
    GraphCtx c1{t1, store, true};
    auto [fixed_t, fixed_s] = embed_and_fuse(fx.batch(), fx.cfg, c1);
    EncoderConfig learn = fx.cfg;
    learn.fusion = FusionMode::learnable_softmax;
    Tape t2;
    GraphCtx c2{t2, store, true};
    auto [soft_t, soft_s] = embed_and_fuse(fx.batch(), learn, c2);
    for (size_t i = 0; i < fixed_t.val().size(); ++i)
        CHECK(fixed_t.val()[i] == doctest::Approx(soft_t.val()[i]).epsilon(1e-12));
    for (size_t i = 0; i < fixed_s.val().size(); ++i)
        CHECK(fixed_s.val()[i] == doctest::Approx(soft_s.val()[i]).epsilon(1e-12));
}

TEST_CASE("fusion: single active modality contributes a third under fixed weights") {
    Fixture fx(4, 4, 2, 41);
    ParamStore store(41);
    {
        Tape tape;
        GraphCtx ctx{tape, store, true};
        embed_and_fuse(fx.batch(), fx.cfg, ctx);
    }
    for (const char* stream : {"t", "s"})
        for (const char* mod : {"bone", "motion"})
            for (const char* p : {"w1", "b1", "w2", "b2"}) {
                Array& a = store.at(std::string("embed.") + stream + "." + mod + "." + p);
                for (double& x : a.v) x = 0.0;
            }
    Tape t1;
    GraphCtx c1{t1, store, false};
    auto [h_third, hs_third] = embed_and_fuse(fx.batch(), fx.cfg, c1);

    EncoderConfig joint_only = fx.cfg;
    joint_only.mod_bone = joint_only.mod_motion = false;
    Tape t2;
    GraphCtx c2{t2, store, false};
    auto [h_full, hs_full] = embed_and_fuse(fx.batch(), joint_only, c2);
    // the fuse projection bias starts at zero, so scaling commutes
    for (size_t i = 0; i < h_third.val().size(); ++i)
        CHECK(h_third.val()[i] == doctest::Approx(h_full.val()[i] / 3.0).epsilon(1e-9));
}

TEST_CASE("T=1 with one segment: the local equals the global projection") {
    Fixture fx(4, 1, 2, 53);
    fx.cfg.n_seg = 1;
    fx.cfg.n_part = 1;
    fx.cfg.part_of_slot = default_part_map(fx.space, 1);
    ParamStore store(53);
    Tape tape;
    GraphCtx ctx{tape, store, false};
    FeatureBundle out = forward(fx.batch(), fx.cfg, ctx);
    for (size_t i = 0; i < out.v_t.val().size(); ++i)
        CHECK(out.v_t_local.val()[i] == doctest::Approx(out.v_t.val()[i]).epsilon(1e-12));
}

TEST_CASE("constant sequence: the pooled temporal feature equals any frame") {
    Fixture fx(4, 5, 1, 61);
    fx.cfg.use_pos_encoding = false;
    for (auto& m : fx.mods) {
        size_t stride = 4 * 1 * 3;
        for (size_t t = 1; t < 5; ++t)
            for (size_t i = 0; i < stride; ++i) {
                m.joint[t * stride + i] = m.joint[i];
                m.bone[t * stride + i] = m.bone[i];
                m.motion[t * stride + i] = m.motion[i];
            }
    }
    ParamStore store(61);
    Tape tape;
    GraphCtx ctx{tape, store, false};
    FeatureBundle out = forward(fx.batch(), fx.cfg, ctx);
    for (size_t d = 0; d < 8; ++d)
        CHECK(out.vg_t.val()[d] == doctest::Approx(out.vt_seq.val()[0 * 8 + d]).epsilon(1e-12));
}

TEST_CASE("frame permutation: sensitive with E_pos, invariant pooled without") {
    Fixture fx(4, 6, 1, 71);
    ParamStore store(71);
    {
        Tape tape;
        GraphCtx ctx{tape, store, true};
        forward(fx.batch(), fx.cfg, ctx); // materialize params once
    }

    auto run = [&](const EncoderConfig& cfg, bool permute) {
        Fixture local = fx;
        if (permute)
            for (auto& m : local.mods) {
                size_t stride = 4 * 3;
                auto rotate = [&](num::Array& a) {
                    num::Array orig = a;
                    for (size_t t = 0; t < 6; ++t) {
                        size_t src = (t + 1) % 6;
                        for (size_t i = 0; i < stride; ++i) a[t * stride + i] = orig[src * stride + i];
                    }
                };
                rotate(m.joint);
                rotate(m.bone);
                rotate(m.motion);
            }
        Tape tape;
        GraphCtx ctx{tape, store, false};
        FeatureBundle out = forward(local.batch(), cfg, ctx);
        return std::make_pair(out.vt_seq.val(), out.vg_t.val());
    };

    auto [seq_base, pool_base] = run(fx.cfg, false);
    auto [seq_perm, pool_perm] = run(fx.cfg, true);
    double diff = 0.0;
    for (size_t i = 0; i < seq_base.v.size(); ++i) diff += std::abs(seq_base[i] - seq_perm[i]);
    CHECK(diff > 1e-6); // position encoding makes order matter

    EncoderConfig plain = fx.cfg;
    plain.use_pos_encoding = false;
    plain.layers = 0;
    auto [s0, p0] = run(plain, false);
    auto [s1, p1] = run(plain, true);
    for (size_t i = 0; i < p0.v.size(); ++i) CHECK(p0[i] == doctest::Approx(p1[i]).epsilon(1e-12));
}

TEST_CASE("every parameter receives gradient on a generic batch") {
    skel::SkeletonFormat full = chain("full", 5);
    skel::SkeletonFormat sub = chain("sub", 4);
    skel::UnifiedSpace space = skel::build_unified_space({full, sub});
    Rng rng(83);
    skel::RawSequence seq;
    seq.format_id = "sub"; // one slot stays masked: placeholder table in play
    seq.frames = 6;
    seq.members = 1;
    seq.label_ids = {1};
    seq.data.resize(6 * 4 * 3);
    for (double& x : seq.data) x = rng.normal();
    auto u = skel::unify(seq, space, sub, skel::Padding::learnable_placeholder);
    auto m = skel::derive_modalities(u, space, sub);
    std::vector<const skel::ModalityTriple*> mp{&m, &m, &m};
    std::vector<const std::vector<uint8_t>*> kp{&u.joint_mask, &u.joint_mask, &u.joint_mask};
    Batch b = make_batch(mp, kp, space.k_unified, space.m_unified,
                         skel::Padding::learnable_placeholder);
    EncoderConfig cfg;
    cfg.d_hidden = 8;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.ffn_mult = 2;
    cfg.d_semantic = 8;
    cfg.t_max = 6;
    cfg.n_seg = 2;
    cfg.n_part = 2;
    cfg.part_of_slot = default_part_map(space, 2);
    cfg.fusion = FusionMode::learnable_softmax;

    ParamStore store(83);
    Tape tape;
    GraphCtx ctx{tape, store, true};
    FeatureBundle out = forward(b, cfg, ctx);

    Array a({3, cfg.d_semantic});
    for (size_t i = 0; i < 3; ++i) {
        double n = 0.0;
        for (size_t d = 0; d < cfg.d_semantic; ++d) {
            a[i * cfg.d_semantic + d] = rng.normal();
            n += a[i * cfg.d_semantic + d] * a[i * cfg.d_semantic + d];
        }
        n = std::sqrt(n);
        for (size_t d = 0; d < cfg.d_semantic; ++d) a[i * cfg.d_semantic + d] /= n;
    }
    loss::LossWeights w;
    auto parts = loss::total_loss(out, tape.constant(a), w);
    tape.backward(parts.total);

    for (const auto& binding : ctx.bound) {
        const auto& [name, value] = store.items()[binding.store_idx];
        const auto& rec = tape.rec(binding.node_id);
        INFO("parameter ", name);
        REQUIRE(rec.grad_ready);
        double mag = 0.0;
        for (double g : rec.grad.v) mag += std::abs(g);
        CHECK(mag > 0.0);
    }
}

TEST_CASE("padded-slot attention masking changes spatial outputs") {
    skel::SkeletonFormat full = chain("full", 5);
    skel::SkeletonFormat sub = chain("part", 3);
    skel::UnifiedSpace space = skel::build_unified_space({full, sub});
    Rng rng(97);
    skel::RawSequence seq;
    seq.format_id = "part";
    seq.frames = 4;
    seq.members = 1;
    seq.label_ids = {0};
    seq.data.resize(4 * 3 * 3);
    for (double& x : seq.data) x = rng.normal();
    auto u = skel::unify(seq, space, sub, skel::Padding::zero);
    auto m = skel::derive_modalities(u, space, sub);
    std::vector<const skel::ModalityTriple*> mp{&m};
    std::vector<const std::vector<uint8_t>*> kp{&u.joint_mask};
    Batch b = make_batch(mp, kp, space.k_unified, space.m_unified, skel::Padding::zero);

    EncoderConfig cfg;
    cfg.d_hidden = 8;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.ffn_mult = 2;
    cfg.d_semantic = 8;
    cfg.t_max = 4;
    cfg.n_seg = 2;
    cfg.n_part = 2;
    cfg.part_of_slot = default_part_map(space, 2);

    ParamStore store(97);
    Tape t1;
    GraphCtx c1{t1, store, true};
    FeatureBundle plain = forward(b, cfg, c1);
    cfg.attn_mask_padding = true;
    Tape t2;
    GraphCtx c2{t2, store, false};
    FeatureBundle masked = forward(b, cfg, c2);
    double diff = 0.0;
    for (size_t i = 0; i < plain.vs_seq.val().size(); ++i)
        diff += std::abs(plain.vs_seq.val()[i] - masked.vs_seq.val()[i]);
    CHECK(diff > 1e-9);
}

TEST_CASE("re-running unify and forward on the same input is bit-identical") {
    skel::SkeletonFormat full = chain("full", 5);
    skel::SkeletonFormat sub = chain("sub", 3);
    skel::UnifiedSpace space = skel::build_unified_space({full, sub});
    Rng rng(131);
    skel::RawSequence seq;
    seq.format_id = "sub";
    seq.frames = 5;
    seq.members = 1;
    seq.label_ids = {0};
    seq.data.resize(5 * 3 * 3);
    for (double& x : seq.data) x = rng.normal();

    EncoderConfig cfg;
    cfg.d_hidden = 8;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.ffn_mult = 2;
    cfg.d_semantic = 8;
    cfg.t_max = 5;
    cfg.n_seg = 2;
    cfg.n_part = 2;
    cfg.part_of_slot = default_part_map(space, 2);

    ParamStore store(131);
    auto run = [&]() {
        auto u = skel::unify(seq, space, sub, skel::Padding::zero);
        auto m = skel::derive_modalities(u, space, sub);
        std::vector<const skel::ModalityTriple*> mp{&m};
        std::vector<const std::vector<uint8_t>*> kp{&u.joint_mask};
        Batch b = make_batch(mp, kp, space.k_unified, space.m_unified, skel::Padding::zero);
        Tape tape;
        GraphCtx ctx{tape, store, true};
        return forward(b, cfg, ctx).v.val();
    };
    Array first = run();
    Array second = run();
    CHECK(first.v == second.v); // masked slots embed the zero vector, deterministically
}

TEST_CASE("config validation catches bad setups") {
    Fixture fx(4, 4, 1, 3);
    EncoderConfig bad = fx.cfg;
    bad.d_hidden = 7; // not divisible by heads
    CHECK_THROWS_AS(bad.validate(4), EncError);
    bad = fx.cfg;
    bad.part_of_slot.pop_back();
    CHECK_THROWS_AS(bad.validate(4), EncError);
    Fixture big(4, 6, 1, 3);
    big.cfg.t_max = 4;
    ParamStore store(3);
    Tape tape;
    GraphCtx ctx{tape, store, true};
    CHECK_THROWS_AS(embed_and_fuse(big.batch(), big.cfg, ctx), EncError);
}
