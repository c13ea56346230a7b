#pragma once

#include <string>
#include <vector>

#include "uskel/params.hpp"
#include "uskel/skeleton.hpp"

namespace uskel::enc {

struct EncError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class FusionMode { fixed_equal, learnable_softmax };

struct EncoderConfig {
    size_t d_hidden = 64;  // D_h
    size_t layers = 4;     // L, per stream
    size_t heads = 4;
    size_t ffn_mult = 4;
    size_t d_semantic = 0; // D_a, taken from the label bank
    size_t t_max = 64;     // slot-token temporal window; batches resample to this
    size_t n_seg = 4;
    size_t n_part = 4;
    std::vector<size_t> part_of_slot; // per unified joint slot, in [0, n_part)
    FusionMode fusion = FusionMode::fixed_equal;
    bool attn_mask_padding = false;
    bool use_pos_encoding = true;
    bool mod_joint = true, mod_bone = true, mod_motion = true;
    double ln_eps = 1e-5;

    size_t active_modalities() const {
        return (mod_joint ? 1u : 0u) + (mod_bone ? 1u : 0u) + (mod_motion ? 1u : 0u);
    }
    void validate(size_t k_unified) const;
};

// One forward batch in the unified space, already resampled to t frames.
struct Batch {
    size_t n = 0, t = 0, k = 0, m = 0;
    num::Array joint, bone, motion; // each [N,T,K,M,3]
    num::Array mask;                // [N,K,M], 1 where a real joint exists
    skel::Padding padding = skel::Padding::zero;
};

Batch make_batch(const std::vector<const skel::ModalityTriple*>& samples,
                 const std::vector<const std::vector<uint8_t>*>& masks, size_t k, size_t m,
                 skel::Padding padding);

struct FeatureBundle {
    num::Node vt_seq;    // [N,T,Dh]
    num::Node vs_seq;    // [N,K*M,Dh]
    num::Node vg_t, vg_s; // [N,Dh]
    num::Node vg;         // [N,2Dh]
    num::Node v, v_t, v_s; // [N,Da]
    num::Node v_t_local;   // [N,Nseg,Da]
    num::Node v_s_local;   // [N,Npart,Da]
    bool has_locals = false;
};

// Stage ops of the encoder; `forward` chains them.
std::pair<num::Node, num::Node> embed_and_fuse(const Batch& b, const EncoderConfig& cfg,
                                               num::GraphCtx& ctx);
std::pair<num::Node, num::Node> encode_streams(num::Node h_mmt, num::Node h_mms, const Batch& b,
                                               const EncoderConfig& cfg, num::GraphCtx& ctx);
FeatureBundle pool_and_project(num::Node vt_seq, num::Node vs_seq, const EncoderConfig& cfg,
                               num::GraphCtx& ctx, bool need_locals = true);
FeatureBundle forward(const Batch& b, const EncoderConfig& cfg, num::GraphCtx& ctx,
                      bool need_locals = true);

// PE(p, 2i) = sin(p / 10000^(2i/D)), PE(p, 2i+1) = cos(p / 10000^(2i/D)).
num::Array sinusoidal_positions(size_t t, size_t d);

// Contiguous segment bounds: lengths floor(T/n) or ceil(T/n), longer first.
std::vector<std::pair<size_t, size_t>> segment_bounds(size_t t, size_t n_seg);

// Semantic four-part grouping (head / arms / torso / legs) when n_part == 4 and
// the slots are canonical joints; contiguous chunks otherwise.
std::vector<size_t> default_part_map(const skel::UnifiedSpace& space, size_t n_part);

} // namespace uskel::enc
