#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "uskel/array.hpp"

namespace uskel::skel {

struct SkelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A named heterogeneous skeleton schema: joint set (canonical identifiers),
// bone topology, coordinate dimensionality and member capacity.
struct SkeletonFormat {
    std::string format_id;
    std::vector<std::string> joints; // canonical ids, K' entries, format order
    std::vector<size_t> parent_of;   // parent index per joint; root maps to itself
    int coord_dims = 3;              // 2 or 3
    size_t max_members = 1;

    size_t joint_count() const { return joints.size(); }
    void validate() const; // unique joints, indices in range, acyclic single root
};

// The shared joint/member space all formats embed into.
struct UnifiedSpace {
    size_t k_unified = 0;
    size_t m_unified = 0;
    std::vector<std::string> slot_joint;                   // slot -> canonical id (sorted)
    std::unordered_map<std::string, size_t> slot_by_name;  // canonical id -> slot
    std::map<std::string, std::vector<size_t>> slot_of;    // format_id -> per-joint slot

    bool has_format(const std::string& id) const { return slot_of.count(id) > 0; }
    size_t slot(const std::string& joint) const;
};

enum class Padding { zero, interpolation, learnable_placeholder };
Padding padding_from_string(const std::string& s);
std::string padding_name(Padding p);

struct RawSequence {
    std::string format_id;
    size_t frames = 0;  // T
    size_t members = 1; // <= format max_members
    std::vector<double> data; // [T x K' x members x coord_dims], row-major
    std::vector<int> label_ids;
};

struct UnifiedSequence {
    size_t frames = 0;
    size_t k = 0, m = 0;
    num::Array data;                 // [T x K x M x 3]
    std::vector<uint8_t> joint_mask; // [K x M], 1 where a real joint exists
    std::vector<int> label_ids;
    Padding padding = Padding::zero;

    double at(size_t t, size_t slot, size_t member, size_t c) const {
        return data[((t * k + slot) * m + member) * 3 + c];
    }
    bool present(size_t slot, size_t member) const { return joint_mask[slot * m + member] != 0; }
};

struct ModalityTriple {
    num::Array joint, bone, motion; // each [T x K x M x 3]
};

// Interpolation sources per canonical joint, equal weights over the present ones.
using Adjacency = std::map<std::string, std::vector<std::string>>;

struct FormatRegistry {
    std::vector<SkeletonFormat> formats;
    const SkeletonFormat& get(const std::string& id) const;
    bool has(const std::string& id) const;
    void add(SkeletonFormat f); // validates, rejects duplicate ids
};

UnifiedSpace build_unified_space(const std::vector<SkeletonFormat>& formats);

UnifiedSequence unify(const RawSequence& seq, const UnifiedSpace& space, const SkeletonFormat& fmt,
                      Padding strategy, const Adjacency* adjacency = nullptr);

ModalityTriple derive_modalities(const UnifiedSequence& u, const UnifiedSpace& space,
                                 const SkeletonFormat& fmt);

// Linear time interpolation to a fixed frame count (slot tokens need a fixed
// temporal width).
UnifiedSequence resample_time(const UnifiedSequence& u, size_t t_new);

// ---- canonical skeleton ------------------------------------------------------

struct CanonicalJoint {
    const char* name;
    const char* parent;
    std::array<double, 3> rest;
};

// Full canonical joint vocabulary: names, topology and a rest pose. Every
// format preset selects a subset of these joints.
const std::vector<CanonicalJoint>& canonical_joints();
const std::unordered_map<std::string, size_t>& canonical_index();

// Built-in format presets: kinect-v1 (20 joints, 3D), kinect-v2 (25, 3D),
// pose-2d (17, 2D), smpl-22 (22, 3D). Topology is derived per format as the
// nearest canonical ancestor present in the format; joints with no present
// ancestor attach to the format's root (the first such joint in listing order).
std::vector<SkeletonFormat> builtin_formats();
SkeletonFormat make_format(const std::string& id, const std::vector<std::string>& joints,
                           int coord_dims, size_t max_members);
Adjacency default_adjacency();

// ---- file interfaces ---------------------------------------------------------

// Corpus: one JSON object per line,
// {"format_id","members","label_ids","frames":[[[ [x,y(,z)] x K' ] x members ] x T]}.
std::vector<RawSequence> read_corpus_jsonl(const std::string& path, const FormatRegistry& registry);
void write_corpus_jsonl(const std::string& path, const std::vector<RawSequence>& seqs,
                        const FormatRegistry& registry);

FormatRegistry read_registry(const std::string& path);
void write_registry(const std::string& path, const FormatRegistry& registry,
                    const UnifiedSpace* space = nullptr); // slot maps included when given

Adjacency read_adjacency(const std::string& path);
void write_adjacency(const std::string& path, const Adjacency& adj);

} // namespace uskel::skel
