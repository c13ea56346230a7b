#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace uskel::text {

struct BankError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LabelEntry {
    std::string name;
    std::vector<double> vec; // unit norm
};

// The semantic space: label embeddings with seen/unseen flags. Vectors are
// L2-normalized on construction. An empty unseen set means everything is seen.
struct LabelBank {
    size_t dim = 0;
    std::map<int, LabelEntry> entries;
    std::set<int> seen;
    std::set<int> unseen;

    const std::vector<double>& vec(int id) const;
    const std::string& name(int id) const;
    bool has(int id) const { return entries.count(id) > 0; }
    bool is_unseen(int id) const { return unseen.count(id) > 0; }
    std::vector<int> ids() const;
    void insert(int id, std::string name, std::vector<double> v); // normalizes, rejects dups
};

LabelBank load_bank(const std::string& path);
void save_bank(const LabelBank& bank, const std::string& path);

// Deterministic synthetic embeddings: per-name gaussian plus 0.5-weighted
// shared components for shared whitespace tokens, so "jump high" and
// "jump far" land closer than unrelated names.
LabelBank synth_bank(const std::vector<std::pair<int, std::string>>& names, size_t dim,
                     uint64_t seed);

} // namespace uskel::text
