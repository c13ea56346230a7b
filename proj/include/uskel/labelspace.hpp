#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "uskel/textbank.hpp"

namespace uskel::labels {

struct LabelSpaceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct KMeansResult {
    size_t k = 0;
    std::vector<int> assignment;                 // per input vector, cluster in [0,k)
    std::vector<std::vector<double>> centroids;  // k x D
    size_t iterations = 0;
};

// Capacity-constrained k-means: k-means++ seeding, then greedy assignment by
// ascending point-centroid distance with per-cluster capacity ceil(n/k) and
// at most n mod k clusters above floor(n/k). Cluster sizes differ by <= 1.
KMeansResult balanced_kmeans(const std::vector<std::vector<double>>& vectors, size_t k,
                             uint64_t seed, size_t max_iter);

struct ClusteredLabelSpace {
    size_t k = 0;
    std::map<int, int> assignment;             // raw label id -> cluster id
    std::vector<std::vector<double>> centroids;
    std::map<int, std::string> cluster_names;  // representative raw label per cluster
};

// Clusters a label bank and derives a cluster-level bank (normalized centroids,
// representative names) for training and inference over the merged label space.
ClusteredLabelSpace cluster_bank(const text::LabelBank& bank, size_t k, uint64_t seed,
                                 size_t max_iter);
text::LabelBank clustered_bank(const ClusteredLabelSpace& space, const text::LabelBank& raw);

enum class Stratum { many, medium, few };
const char* stratum_name(Stratum s);

struct SampleRef {
    std::string sample_id;
    std::vector<int> cluster_ids; // >= 1 entries
};

struct SplitSpec {
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    std::map<int, Stratum> strata; // cluster id -> stratum
};

// Per primary cluster (lowest cluster id of a sample): seeded shuffle, then a
// floor(frac * n) train / remainder test split. Singleton classes go to train.
SplitSpec stratified_split(const std::vector<SampleRef>& samples, double frac, uint64_t seed);

// Descending train-frequency strata: first ceil(0.10 k) clusters are many-shot,
// next ceil(0.30 k) medium, rest few. Ties break on ascending cluster id.
std::map<int, Stratum> stratify_frequency(const std::map<int, size_t>& counts);

// ---- file interfaces ---------------------------------------------------------

void write_cluster_map(const std::string& path, const ClusteredLabelSpace& space,
                       const text::LabelBank& clustered);
ClusteredLabelSpace read_cluster_map(const std::string& path, text::LabelBank* clustered_out);

std::vector<SampleRef> read_sample_manifest(const std::string& path);
void write_split(const std::string& path, const SplitSpec& split);
SplitSpec read_split(const std::string& path);

} // namespace uskel::labels
