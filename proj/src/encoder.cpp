#include "uskel/encoder.hpp"

#include <cmath>
#include <set>

namespace uskel::enc {

using namespace uskel::num;

void EncoderConfig::validate(size_t k_unified) const {
    if (d_hidden == 0 || d_hidden % heads != 0)
        throw EncError("d_hidden must be a positive multiple of heads");
    if (d_semantic == 0) throw EncError("d_semantic must be set (from the label bank)");
    if (n_seg < 1 || n_part < 1) throw EncError("n_seg and n_part must be >= 1");
    if (t_max < 1) throw EncError("t_max must be >= 1");
    if (active_modalities() == 0) throw EncError("at least one modality must be active");
    if (part_of_slot.size() != k_unified)
        throw EncError("part map must cover every unified slot exactly once");
    std::vector<size_t> sizes(n_part, 0);
    for (size_t p : part_of_slot) {
        if (p >= n_part) throw EncError("part index out of range");
        ++sizes[p];
    }
    for (size_t p = 0; p < n_part; ++p)
        if (sizes[p] == 0) throw EncError("part " + std::to_string(p) + " has no slots");
}

Batch make_batch(const std::vector<const skel::ModalityTriple*>& samples,
                 const std::vector<const std::vector<uint8_t>*>& masks, size_t k, size_t m,
                 skel::Padding padding) {
    if (samples.empty() || samples.size() != masks.size())
        throw EncError("make_batch: empty or inconsistent sample list");
    size_t n = samples.size();
    size_t t = samples[0]->joint.dim(0);
    size_t per = t * k * m * 3;
    Batch b;
    b.n = n;
    b.t = t;
    b.k = k;
    b.m = m;
    b.padding = padding;
    b.joint = Array({n, t, k, m, 3});
    b.bone = Array({n, t, k, m, 3});
    b.motion = Array({n, t, k, m, 3});
    b.mask = Array({n, k, m});
    for (size_t i = 0; i < n; ++i) {
        const auto& mt = *samples[i];
        if (mt.joint.dim(0) != t || mt.joint.size() != per)
            throw EncError("make_batch: sample shape mismatch (batch needs a common frame count)");
        std::copy(mt.joint.v.begin(), mt.joint.v.end(), b.joint.v.begin() + i * per);
        std::copy(mt.bone.v.begin(), mt.bone.v.end(), b.bone.v.begin() + i * per);
        std::copy(mt.motion.v.begin(), mt.motion.v.end(), b.motion.v.begin() + i * per);
        for (size_t j = 0; j < k * m; ++j) b.mask[i * k * m + j] = (*masks[i])[j] ? 1.0 : 0.0;
    }
    return b;
}

num::Array sinusoidal_positions(size_t t, size_t d) {
    Array pe({t, d});
    for (size_t p = 0; p < t; ++p)
        for (size_t i = 0; i < d; ++i) {
            double expo = static_cast<double>(2 * (i / 2)) / static_cast<double>(d);
            double angle = static_cast<double>(p) / std::pow(10000.0, expo);
            pe[p * d + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    return pe;
}

std::vector<std::pair<size_t, size_t>> segment_bounds(size_t t, size_t n_seg) {
    if (n_seg == 0 || t < n_seg)
        throw EncError("segment_bounds: need at least one frame per segment");
    size_t base = t / n_seg, rem = t % n_seg;
    std::vector<std::pair<size_t, size_t>> out;
    size_t pos = 0;
    for (size_t s = 0; s < n_seg; ++s) {
        size_t len = base + (s < rem ? 1 : 0);
        out.emplace_back(pos, len);
        pos += len;
    }
    return out;
}

std::vector<size_t> default_part_map(const skel::UnifiedSpace& space, size_t n_part) {
    if (n_part == 4) {
        static const std::map<std::string, size_t> groups = {
            {"head", 0},      {"neck", 0},      {"nose", 0},       {"l_eye", 0},
            {"r_eye", 0},     {"l_ear", 0},     {"r_ear", 0},      {"l_collar", 1},
            {"r_collar", 1},  {"l_shoulder", 1},{"r_shoulder", 1}, {"l_elbow", 1},
            {"r_elbow", 1},   {"l_wrist", 1},   {"r_wrist", 1},    {"l_hand", 1},
            {"r_hand", 1},    {"l_hand_tip", 1},{"r_hand_tip", 1}, {"l_thumb", 1},
            {"r_thumb", 1},   {"pelvis", 2},    {"spine_mid", 2},  {"spine_chest", 2},
            {"spine_upper", 2},{"l_hip", 3},    {"r_hip", 3},      {"l_knee", 3},
            {"r_knee", 3},    {"l_ankle", 3},   {"r_ankle", 3},    {"l_foot", 3},
            {"r_foot", 3},
        };
        bool all_known = true;
        std::vector<size_t> parts(space.k_unified);
        std::set<size_t> used;
        for (size_t s = 0; s < space.k_unified; ++s) {
            auto it = groups.find(space.slot_joint[s]);
            if (it == groups.end()) {
                all_known = false;
                break;
            }
            parts[s] = it->second;
            used.insert(it->second);
        }
        if (all_known && used.size() == 4) return parts;
    }
    // Contiguous chunks over the sorted slots.
    std::vector<size_t> parts(space.k_unified);
    auto bounds = segment_bounds(space.k_unified, n_part);
    for (size_t p = 0; p < bounds.size(); ++p)
        for (size_t s = bounds[p].first; s < bounds[p].first + bounds[p].second; ++s) parts[s] = p;
    return parts;
}

namespace {

Node mlp2(Node x, const std::string& prefix, size_t in, size_t hidden, size_t out,
          num::GraphCtx& ctx) {
    Node w1 = ctx.param(prefix + ".w1", {in, hidden}, Init::xavier_uniform);
    Node b1 = ctx.param(prefix + ".b1", {hidden}, Init::zeros);
    Node w2 = ctx.param(prefix + ".w2", {hidden, out}, Init::xavier_uniform);
    Node b2 = ctx.param(prefix + ".b2", {out}, Init::zeros);
    return add_bias(matmul(gelu(add_bias(matmul(x, w1), b1)), w2), b2);
}

Node linear(Node x, const std::string& prefix, size_t in, size_t out, num::GraphCtx& ctx) {
    Node w = ctx.param(prefix + ".w", {in, out}, Init::xavier_uniform);
    Node b = ctx.param(prefix + ".b", {out}, Init::zeros);
    return add_bias(matmul(x, w), b);
}

// Substitutes the learnable per-slot placeholder into masked-out slots.
Node with_placeholder(const Array& data, const Batch& b, num::GraphCtx& ctx) {
    Node base = ctx.constant(data);
    if (b.padding != skel::Padding::learnable_placeholder) return base;
    Node table = ctx.param("placeholder", {b.k, 3}, Init::normal_small);
    std::vector<size_t> slot_of_token(b.k * b.m);
    for (size_t k = 0; k < b.k; ++k)
        for (size_t m = 0; m < b.m; ++m) slot_of_token[k * b.m + m] = k;
    Node per_token = index_select(table, 0, slot_of_token);       // [K*M, 3]
    Node tiled = tile_rows(reshape(per_token, {b.k * b.m * 3}), b.n * b.t);
    tiled = reshape(tiled, {b.n, b.t, b.k, b.m, 3});
    Array fill_mask({b.n, b.t, b.k, b.m, 3});
    for (size_t i = 0; i < b.n; ++i)
        for (size_t t = 0; t < b.t; ++t)
            for (size_t j = 0; j < b.k * b.m; ++j) {
                double f = b.mask[i * b.k * b.m + j] == 0.0 ? 1.0 : 0.0;
                for (size_t c = 0; c < 3; ++c)
                    fill_mask[(((i * b.t + t) * b.k * b.m) + j) * 3 + c] = f;
            }
    return add(base, mul(tiled, ctx.constant(std::move(fill_mask))));
}

Node mhsa(Node x, const std::string& prefix, const EncoderConfig& cfg, num::GraphCtx& ctx,
          const Array* attn_mask) {
    size_t n = x.shape()[0], s = x.shape()[1], d = cfg.d_hidden;
    size_t h = cfg.heads, hd = d / h;
    Node q = linear(x, prefix + ".wq", d, d, ctx);
    Node k = linear(x, prefix + ".wk", d, d, ctx);
    Node v = linear(x, prefix + ".wv", d, d, ctx);
    q = transpose(reshape(q, {n, s, h, hd}), 1, 2); // [N,H,S,hd]
    k = transpose(reshape(k, {n, s, h, hd}), 1, 2);
    v = transpose(reshape(v, {n, s, h, hd}), 1, 2);
    Node scores = scale(matmul(q, transpose(k, 2, 3)), 1.0 / std::sqrt(static_cast<double>(hd)));
    Node att = attn_mask ? softmax_last_masked(scores, *attn_mask) : softmax_last(scores);
    Node ctx_heads = transpose(matmul(att, v), 1, 2); // [N,S,H,hd]
    Node merged = reshape(ctx_heads, {n, s, d});
    return linear(merged, prefix + ".wo", d, d, ctx);
}

Node encoder_stack(Node x, const std::string& prefix, const EncoderConfig& cfg, num::GraphCtx& ctx,
                   const Array* attn_mask) {
    size_t d = cfg.d_hidden;
    for (size_t l = 0; l < cfg.layers; ++l) {
        std::string lp = prefix + ".l" + std::to_string(l);
        Node g1 = ctx.param(lp + ".ln1.g", {d}, Init::ones);
        Node c1 = ctx.param(lp + ".ln1.b", {d}, Init::zeros);
        x = add(x, mhsa(layer_norm(x, g1, c1, cfg.ln_eps), lp + ".attn", cfg, ctx, attn_mask));
        Node g2 = ctx.param(lp + ".ln2.g", {d}, Init::ones);
        Node c2 = ctx.param(lp + ".ln2.b", {d}, Init::zeros);
        Node h = layer_norm(x, g2, c2, cfg.ln_eps);
        Node f1 = add_bias(matmul(h, ctx.param(lp + ".ffn.w1", {d, cfg.ffn_mult * d}, Init::xavier_uniform)),
                           ctx.param(lp + ".ffn.b1", {cfg.ffn_mult * d}, Init::zeros));
        Node f2 = add_bias(matmul(gelu(f1), ctx.param(lp + ".ffn.w2", {cfg.ffn_mult * d, d}, Init::xavier_uniform)),
                           ctx.param(lp + ".ffn.b2", {d}, Init::zeros));
        x = add(x, f2);
    }
    return x;
}

} // namespace

std::pair<num::Node, num::Node> embed_and_fuse(const Batch& b, const EncoderConfig& cfg,
                                               num::GraphCtx& ctx) {
    cfg.validate(b.k);
    if (b.t > cfg.t_max) throw EncError("batch has more frames than t_max");
    if (b.t != cfg.t_max)
        throw EncError("spatial slot tokens need t == t_max; resample the batch first");
    size_t d = cfg.d_hidden;
    size_t tok_t = b.k * b.m * 3; // per-frame token width
    size_t tok_s = b.t * 3;       // per-slot token width

    struct Mod {
        const Array* data;
        const char* name;
        bool active;
    };
    const Mod mods[3] = {{&b.joint, "joint", cfg.mod_joint},
                         {&b.bone, "bone", cfg.mod_bone},
                         {&b.motion, "motion", cfg.mod_motion}};

    std::vector<Node> emb_t, emb_s;
    for (const Mod& mod : mods) {
        if (!mod.active) continue;
        Node data = with_placeholder(*mod.data, b, ctx);
        Node frames = reshape(data, {b.n, b.t, tok_t});
        emb_t.push_back(mlp2(frames, std::string("embed.t.") + mod.name, tok_t, d, d, ctx));
        Node slots = reshape(transpose(reshape(data, {b.n, b.t, b.k * b.m, 3}), 1, 2),
                             {b.n, b.k * b.m, tok_s});
        emb_s.push_back(mlp2(slots, std::string("embed.s.") + mod.name, tok_s, d, d, ctx));
    }

    auto fuse = [&](const std::vector<Node>& embs) {
        if (cfg.fusion == FusionMode::fixed_equal) {
            Node acc = scale(embs[0], 1.0 / static_cast<double>(embs.size()));
            for (size_t i = 1; i < embs.size(); ++i)
                acc = add(acc, scale(embs[i], 1.0 / static_cast<double>(embs.size())));
            return acc;
        }
        Node logits = ctx.param("fuse.logits", {3}, Init::zeros);
        if (embs.size() < 3) {
            std::vector<size_t> active;
            for (size_t mi = 0; mi < 3; ++mi)
                if (mods[mi].active) active.push_back(mi);
            logits = index_select(logits, 0, active);
        }
        Node w = softmax_last(logits);
        Node acc = mul(embs[0], slice(w, 0, 0, 1));
        for (size_t i = 1; i < embs.size(); ++i) acc = add(acc, mul(embs[i], slice(w, 0, i, 1)));
        return acc;
    };

    Node h_mmt = linear(fuse(emb_t), "fuse.t.proj", d, d, ctx);
    Node h_mms = linear(fuse(emb_s), "fuse.s.proj", d, d, ctx);
    return {h_mmt, h_mms};
}

std::pair<num::Node, num::Node> encode_streams(num::Node h_mmt, num::Node h_mms, const Batch& b,
                                               const EncoderConfig& cfg, num::GraphCtx& ctx) {
    size_t d = cfg.d_hidden;
    size_t n = b.n, t = h_mmt.shape()[1], s = h_mms.shape()[1];

    Node xt = h_mmt;
    if (cfg.use_pos_encoding) {
        Array pe = sinusoidal_positions(t, d);
        Array tiled({n, t, d});
        for (size_t i = 0; i < n; ++i)
            std::copy(pe.v.begin(), pe.v.end(), tiled.v.begin() + i * t * d);
        xt = add(xt, ctx.constant(std::move(tiled)));
    }

    Node spe = ctx.param("enc.s.pos", {s, d}, Init::normal_small);
    Node xs = add(h_mms, reshape(tile_rows(reshape(spe, {s * d}), n), {n, s, d}));

    // Spatial attention can optionally ignore keys of absent slots.
    Array attn_mask;
    const Array* mask_ptr = nullptr;
    if (cfg.attn_mask_padding) {
        attn_mask = Array({n, cfg.heads, s, s});
        for (size_t i = 0; i < n; ++i)
            for (size_t h = 0; h < cfg.heads; ++h)
                for (size_t qi = 0; qi < s; ++qi)
                    for (size_t kj = 0; kj < s; ++kj)
                        attn_mask[((i * cfg.heads + h) * s + qi) * s + kj] =
                            b.mask[i * s + kj] == 0.0 ? -1e9 : 0.0;
        mask_ptr = &attn_mask;
    }

    Node vt = encoder_stack(xt, "enc.t", cfg, ctx, nullptr);
    Node vs = encoder_stack(xs, "enc.s", cfg, ctx, mask_ptr);
    return {vt, vs};
}

FeatureBundle pool_and_project(num::Node vt_seq, num::Node vs_seq, const EncoderConfig& cfg,
                               num::GraphCtx& ctx, bool need_locals) {
    size_t d = cfg.d_hidden, da = cfg.d_semantic;
    size_t t = vt_seq.shape()[1];
    size_t m = vs_seq.shape()[1] / cfg.part_of_slot.size();

    FeatureBundle out;
    out.vt_seq = vt_seq;
    out.vs_seq = vs_seq;
    out.vg_t = max_over_axis(vt_seq, 1);
    out.vg_s = max_over_axis(vs_seq, 1);
    out.vg = concat({out.vg_t, out.vg_s}, 1);
    out.v = mlp2(out.vg, "proj.global", 2 * d, 2 * d, da, ctx);
    out.v_t = mlp2(out.vg_t, "proj.temporal", d, d, da, ctx);
    out.v_s = mlp2(out.vg_s, "proj.spatial", d, d, da, ctx);

    if (need_locals) {
        if (t < cfg.n_seg) throw EncError("pool_and_project: fewer frames than temporal segments");
        std::vector<Node> seg_nodes;
        for (auto [start, len] : segment_bounds(t, cfg.n_seg)) {
            Node pooled = max_over_axis(slice(vt_seq, 1, start, len), 1);
            Node proj = mlp2(pooled, "proj.temporal", d, d, da, ctx);
            seg_nodes.push_back(reshape(proj, {proj.shape()[0], 1, da}));
        }
        out.v_t_local = concat(seg_nodes, 1);

        std::vector<Node> part_nodes;
        for (size_t p = 0; p < cfg.n_part; ++p) {
            std::vector<size_t> tokens;
            for (size_t k = 0; k < cfg.part_of_slot.size(); ++k)
                if (cfg.part_of_slot[k] == p)
                    for (size_t mm = 0; mm < m; ++mm) tokens.push_back(k * m + mm);
            Node pooled = max_over_axis(index_select(vs_seq, 1, tokens), 1);
            Node proj = mlp2(pooled, "proj.spatial", d, d, da, ctx);
            part_nodes.push_back(reshape(proj, {proj.shape()[0], 1, da}));
        }
        out.v_s_local = concat(part_nodes, 1);
        out.has_locals = true;
    }
    return out;
}

FeatureBundle forward(const Batch& b, const EncoderConfig& cfg, num::GraphCtx& ctx,
                      bool need_locals) {
    auto [h_mmt, h_mms] = embed_and_fuse(b, cfg, ctx);
    auto [vt, vs] = encode_streams(h_mmt, h_mms, b, cfg, ctx);
    return pool_and_project(vt, vs, cfg, ctx, need_locals);
}

} // namespace uskel::enc
