#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "uskel/array.hpp"

namespace uskel::num {

struct GraphError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Tape;

// Lightweight handle into a Tape. Nodes are created in forward order, so
// creation order is already a topological order of the graph.
struct Node {
    Tape* tape = nullptr;
    int id = -1;

    const Array& val() const;
    const Array& grad() const;
    const Shape& shape() const;
    bool requires_grad() const;
};

class Tape {
public:
    struct Rec {
        Array value;
        Array grad; // materialized during backward
        bool needs_grad = false;
        bool grad_ready = false;
        const char* op = "leaf";
        std::function<void(Tape&, int)> back; // pulls rec(id).grad into parents
    };

    Node leaf(Array value, bool requires_grad);
    Node constant(Array value) { return leaf(std::move(value), false); }

    // Runs the reverse pass from a scalar root; each node's backward fires
    // exactly once, in reverse creation order.
    void backward(Node root);

    Node emit(Array value, bool needs, const char* op, std::function<void(Tape&, int)> back);

    Rec& rec(int id) { return recs_[static_cast<size_t>(id)]; }
    const Rec& rec(int id) const { return recs_[static_cast<size_t>(id)]; }
    Array& grad_buf(int id); // allocate-on-demand, zero-filled
    size_t size() const { return recs_.size(); }

private:
    std::vector<Rec> recs_;
};

// ---- primitives ------------------------------------------------------------
// Elementwise ops accept equal shapes; add/sub/mul also broadcast a 1-element
// operand. Every primitive validates that its result is finite.

Node add(Node a, Node b);
Node sub(Node a, Node b);
Node mul(Node a, Node b);
Node scale(Node a, double c);
Node add_const(Node a, double c);
Node add_bias(Node x, Node b); // b has the extent of x's last axis

Node matmul(Node a, Node b); // [...,M,K] x [...,K,N]; 2-d b broadcasts over batch
Node transpose(Node a, size_t ax0, size_t ax1);
Node reshape(Node a, Shape s);
Node concat(const std::vector<Node>& xs, size_t axis);
Node slice(Node a, size_t axis, size_t start, size_t len);
Node index_select(Node a, size_t axis, const std::vector<size_t>& idx);

Node softmax_last(Node a);
Node softmax_last_masked(Node a, const Array& additive_mask); // mask shape == a shape
Node layer_norm(Node x, Node gain, Node bias, double eps);
Node l2norm_last(Node a);

Node gelu(Node a);
Node relu(Node a);
Node exp_(Node a);
Node log_(Node a);

Node tile_rows(Node a, size_t reps); // -> [reps, numel(a)]; backward sums over reps

Node sum_all(Node a);  // -> shape {1}
Node mean_all(Node a); // -> shape {1}
Node sum_last(Node a); // reduce last axis
Node max_over_axis(Node a, size_t axis); // ties: lowest index

void check_finite(const Array& a, const char* op);

} // namespace uskel::num
