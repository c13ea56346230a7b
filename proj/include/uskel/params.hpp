#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "uskel/graph.hpp"
#include "uskel/rng.hpp"

namespace uskel::num {

enum class Init { zeros, ones, xavier_uniform, normal_small };

// Named parameter arrays in creation order. Creation order is deterministic
// (single code path), which makes checkpoints byte-stable across runs.
class ParamStore {
public:
    explicit ParamStore(uint64_t init_seed) : rng_(init_seed) {}

    Array& get_or_create(const std::string& name, const Shape& shape, Init kind);
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    Array& at(const std::string& name);
    const Array& at(const std::string& name) const;

    const std::vector<std::pair<std::string, Array>>& items() const { return items_; }
    std::vector<std::pair<std::string, Array>>& items() { return items_; }
    size_t index_of(const std::string& name) const { return index_.at(name); }

private:
    Rng rng_;
    std::vector<std::pair<std::string, Array>> items_;
    std::unordered_map<std::string, size_t> index_;
};

struct Binding {
    size_t store_idx;
    int node_id;
};

// Per-forward context: binds store parameters into a tape and remembers the
// mapping so the optimizer can read gradients back. Repeated requests for the
// same name return the same node, so shared modules accumulate one gradient.
struct GraphCtx {
    Tape& tape;
    ParamStore& store;
    bool train;
    std::vector<Binding> bound;
    std::unordered_map<std::string, Node> cache;

    GraphCtx(Tape& t, ParamStore& s, bool train_mode = true)
        : tape(t), store(s), train(train_mode) {}

    Node param(const std::string& name, const Shape& shape, Init kind) {
        auto it = cache.find(name);
        if (it != cache.end()) return it->second;
        Array& arr = store.get_or_create(name, shape, kind);
        Node n = tape.leaf(arr, train);
        if (train) bound.push_back({store.index_of(name), n.id});
        cache.emplace(name, n);
        return n;
    }
    Node constant(Array a) { return tape.constant(std::move(a)); }
};

class Adam {
public:
    Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamStore& store, const Tape& tape, const std::vector<Binding>& bound, double lr);

    int64_t steps() const { return t_; }
    void set_steps(int64_t t) { t_ = t; }
    std::unordered_map<std::string, std::pair<Array, Array>>& moments() { return moments_; }

private:
    double beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::unordered_map<std::string, std::pair<Array, Array>> moments_;
};

// Checkpoint container: one line of compact JSON
// {"version":1,"params":[{"name":...,"shape":[...]}...]} followed by the
// concatenated row-major little-endian f64 buffers in header order.
void save_checkpoint(const ParamStore& store, const std::string& path);
void load_checkpoint(ParamStore& store, const std::string& path); // replaces contents
std::vector<std::pair<std::string, Array>> read_checkpoint(const std::string& path);
void write_checkpoint(const std::vector<std::pair<std::string, Array>>& items, const std::string& path);

} // namespace uskel::num
