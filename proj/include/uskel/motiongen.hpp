#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "uskel/skeleton.hpp"

namespace uskel::gen {

struct GenError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ClassSpec {
    std::string name;
    std::string primitive; // wave, squat, walk, jump, kick, turn, clap, bow
    std::map<std::string, std::pair<double, double>> param_ranges; // optional overrides
};

struct ComposePair {
    size_t class_a = 0, class_b = 0;
    size_t count = 0;
};

struct GenSpec {
    std::vector<ClassSpec> classes;
    std::vector<std::string> formats;
    std::vector<size_t> samples_per_class;
    std::vector<ComposePair> multilabel; // two primitives blended in time
    size_t frames = 48;
    double noise_sigma = 0.0;
    uint64_t seed = 1;
    void validate(const skel::FormatRegistry& registry) const;
};

struct GeneratedCorpus {
    // Line i of every per-format corpus is the rendering of sample i.
    std::map<std::string, std::vector<skel::RawSequence>> by_format;
    std::vector<std::string> sample_ids; // "0", "1", ...
    std::vector<std::vector<int>> label_ids;
};

GeneratedCorpus generate(const GenSpec& spec, const skel::FormatRegistry& registry);

// Canonical-space trajectory for one sample (33 joints x 3 per frame);
// exposed so tests can check cross-format consistency at the source.
std::vector<std::vector<std::array<double, 3>>> canonical_trajectory(const GenSpec& spec,
                                                                     size_t sample_index);

const std::vector<std::string>& primitive_names();

GenSpec read_genspec(const std::string& path);

// Emits corpus_<format>.jsonl per format, samples.jsonl, manifest.json,
// registry.json (with slot maps) and adjacency.json into out_dir.
void write_outputs(const GeneratedCorpus& corpus, const GenSpec& spec,
                   const skel::FormatRegistry& registry, const std::string& out_dir);

} // namespace uskel::gen
