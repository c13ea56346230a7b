#include "uskel/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>

namespace uskel::num {

const Array& Node::val() const { return tape->rec(id).value; }
const Array& Node::grad() const { return tape->rec(id).grad; }
const Shape& Node::shape() const { return tape->rec(id).value.shape; }
bool Node::requires_grad() const { return tape->rec(id).needs_grad; }

void check_finite(const Array& a, const char* op) {
    for (double x : a.v) {
        if (!std::isfinite(x))
            throw GraphError(std::string("non-finite value produced by op '") + op + "'");
    }
}

Node Tape::leaf(Array value, bool requires_grad) {
    check_finite(value, "leaf");
    Rec r;
    r.value = std::move(value);
    r.needs_grad = requires_grad;
    recs_.push_back(std::move(r));
    return Node{this, static_cast<int>(recs_.size() - 1)};
}

Node Tape::emit(Array value, bool needs, const char* op, std::function<void(Tape&, int)> back) {
    check_finite(value, op);
    Rec r;
    r.value = std::move(value);
    r.needs_grad = needs;
    r.op = op;
    if (needs) r.back = std::move(back);
    recs_.push_back(std::move(r));
    return Node{this, static_cast<int>(recs_.size() - 1)};
}

Array& Tape::grad_buf(int id) {
    Rec& r = recs_[static_cast<size_t>(id)];
    if (!r.grad_ready) {
        r.grad = Array(r.value.shape);
        r.grad_ready = true;
    }
    return r.grad;
}

void Tape::backward(Node root) {
    if (root.tape != this) throw GraphError("backward: node belongs to a different tape");
    if (rec(root.id).value.size() != 1) throw GraphError("backward: root must be scalar");
    if (!rec(root.id).needs_grad) throw GraphError("backward: root does not require grad");
    grad_buf(root.id)[0] = 1.0;
    for (int i = root.id; i >= 0; --i) {
        Rec& r = recs_[static_cast<size_t>(i)];
        if (r.needs_grad && r.grad_ready && r.back) r.back(*this, i);
    }
}

// ---- helpers ---------------------------------------------------------------

namespace {

bool scalarish(const Array& a) { return a.size() == 1; }

void require(bool cond, const char* op, const std::string& msg) {
    if (!cond) throw GraphError(std::string(op) + ": " + msg);
}

// C[M,N] (+)= op(A) * op(B); row-major, accumulating.
void mm_acc(const double* A, const double* B, double* C, size_t M, size_t N, size_t K,
            bool tA, bool tB) {
    if (!tA && !tB) {
        for (size_t i = 0; i < M; ++i) {
            double* c = C + i * N;
            const double* a = A + i * K;
            for (size_t k = 0; k < K; ++k) {
                double av = a[k];
                const double* b = B + k * N;
                for (size_t j = 0; j < N; ++j) c[j] += av * b[j];
            }
        }
    } else if (!tA && tB) { // B stored [N,K]
        for (size_t i = 0; i < M; ++i) {
            const double* a = A + i * K;
            double* c = C + i * N;
            for (size_t j = 0; j < N; ++j) {
                const double* b = B + j * K;
                double acc = 0.0;
                for (size_t k = 0; k < K; ++k) acc += a[k] * b[k];
                c[j] += acc;
            }
        }
    } else if (tA && !tB) { // A stored [K,M]
        for (size_t k = 0; k < K; ++k) {
            const double* a = A + k * M;
            const double* b = B + k * N;
            for (size_t i = 0; i < M; ++i) {
                double av = a[i];
                double* c = C + i * N;
                for (size_t j = 0; j < N; ++j) c[j] += av * b[j];
            }
        }
    } else { // A [K,M], B [N,K]
        for (size_t j = 0; j < N; ++j) {
            const double* b = B + j * K;
            for (size_t k = 0; k < K; ++k) {
                double bv = b[k];
                const double* a = A + k * M;
                for (size_t i = 0; i < M; ++i) C[i * N + j] += a[i] * bv;
            }
        }
    }
}

struct AxisSplit {
    size_t outer, n, inner;
};

AxisSplit split_at(const Shape& s, size_t axis) {
    AxisSplit sp{1, s[axis], 1};
    for (size_t i = 0; i < axis; ++i) sp.outer *= s[i];
    for (size_t i = axis + 1; i < s.size(); ++i) sp.inner *= s[i];
    return sp;
}

} // namespace

// ---- elementwise -----------------------------------------------------------

Node add(Node a, Node b) {
    const Array& av = a.val();
    const Array& bv = b.val();
    bool bs = scalarish(bv) && !scalarish(av);
    bool as = scalarish(av) && !scalarish(bv);
    require(as || bs || same_shape(av, bv), "add", "shape mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
    Array out = as ? bv : av;
    if (as) {
        for (double& x : out.v) x += av[0];
    } else if (bs) {
        for (double& x : out.v) x += bv[0];
    } else {
        for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    }
    bool req = a.requires_grad() || b.requires_grad();
    int ia = a.id, ib = b.id;
    return a.tape->emit(std::move(out), req, "add", [ia, ib, as, bs](Tape& t, int self) {
        const Array& g = t.rec(self).grad;
        if (t.rec(ia).needs_grad) {
            Array& ga = t.grad_buf(ia);
            if (as) {
                for (double x : g.v) ga[0] += x;
            } else {
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
        }
        if (t.rec(ib).needs_grad) {
            Array& gb = t.grad_buf(ib);
            if (bs) {
                for (double x : g.v) gb[0] += x;
            } else {
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        }
    });
}

Node sub(Node a, Node b) {
    const Array& av = a.val();
    const Array& bv = b.val();
    bool bs = scalarish(bv) && !scalarish(av);
    bool as = scalarish(av) && !scalarish(bv);
    require(as || bs || same_shape(av, bv), "sub", "shape mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
    Array out = as ? bv : av;
    if (as) {
        for (double& x : out.v) x = av[0] - x;
    } else if (bs) {
        for (double& x : out.v) x -= bv[0];
    } else {
        for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    }
    bool req = a.requires_grad() || b.requires_grad();
    int ia = a.id, ib = b.id;
    return a.tape->emit(std::move(out), req, "sub", [ia, ib, as, bs](Tape& t, int self) {
        const Array& g = t.rec(self).grad;
        if (t.rec(ia).needs_grad) {
            Array& ga = t.grad_buf(ia);
            if (as) {
                for (double x : g.v) ga[0] += x;
            } else {
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
        }
        if (t.rec(ib).needs_grad) {
            Array& gb = t.grad_buf(ib);
            if (bs) {
                for (double x : g.v) gb[0] -= x;
            } else {
                for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        }
    });
}

Node mul(Node a, Node b) {
    const Array& av = a.val();
    const Array& bv = b.val();
    bool bs = scalarish(bv) && !scalarish(av);
    bool as = scalarish(av) && !scalarish(bv);
    require(as || bs || same_shape(av, bv), "mul", "shape mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
    Array out(as ? bv.shape : av.shape);
    if (as) {
        for (size_t i = 0; i < out.size(); ++i) out[i] = av[0] * bv[i];
    } else if (bs) {
        for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[0];
    } else {
        for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    }
    bool req = a.requires_grad() || b.requires_grad();
    int ia = a.id, ib = b.id;
    return a.tape->emit(std::move(out), req, "mul", [ia, ib, as, bs](Tape& t, int self) {
        const Array& g = t.rec(self).grad;
        const Array& av = t.rec(ia).value;
        const Array& bv = t.rec(ib).value;
        if (t.rec(ia).needs_grad) {
            Array& ga = t.grad_buf(ia);
            if (as) {
                for (size_t i = 0; i < g.size(); ++i) ga[0] += g[i] * bv[i];
            } else if (bs) {
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[0];
            } else {
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
            }
        }
        if (t.rec(ib).needs_grad) {
            Array& gb = t.grad_buf(ib);
            if (bs) {
                for (size_t i = 0; i < g.size(); ++i) gb[0] += g[i] * av[i];
            } else if (as) {
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[0];
            } else {
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
            }
        }
    });
}

Node scale(Node a, double c) {
    Array out = a.val();
    for (double& x : out.v) x *= c;
    int ia = a.id;
    return a.tape->emit(std::move(out), a.requires_grad(), "scale", [ia, c](Tape& t, int self) {
        const Array& g = t.rec(self).grad;
        if (!t.rec(ia).needs_grad) return;
        Array& ga = t.grad_buf(ia);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
    });
}

Node add_const(Node a, double c) {
    Array out = a.val();
    for (double& x : out.v) x += c;
    int ia = a.id;
    return a.tape->emit(std::move(out), a.requires_grad(), "add_const", [ia](Tape& t, int self) {
        const Array& g = t.rec(self).grad;
        if (!t.rec(ia).needs_grad) return;
        Array& ga = t.grad_buf(ia);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Node add_bias(Node x, Node b) {
    const Array& xv = x.val();
    const Array& bv = b.val();
    require(xv.rank() >= 1 && bv.rank() == 1 && bv.dim(0) == xv.shape.back(), "add_bias",
            "bias extent must match last axis");
    Array out = xv;
    size_t d = bv.dim(0);
    size_t rows = out.size() / d;
    for (size_t r = 0; r < rows; ++r)
        for (size_t j = 0; j < d; ++j) out[r * d + j] += bv[j];
    bool req = x.requires_grad() || b.requires_grad();
    int ix = x.id, ib = b.id;
    return x.tape->emit(std::move(out), req, "add_bias", [ix, ib, d](Tape& t, int self) {
        const Array& g = t.rec(self).grad;
        size_t rows = g.size() / d;
        if (t.rec(ix).needs_grad) {
            Array& gx = t.grad_buf(ix);
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (t.rec(ib).needs_grad) {
            Array& gb = t.grad_buf(ib);
            for (size_t r = 0; r < rows; ++r)
                for (size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
        }
    });
}

// ---- matmul ----------------------------------------------------------------

Node matmul(Node a, Node b) {
    const Array& av = a.val();
    const Array& bv = b.val();
    require(av.rank() >= 2 && bv.rank() >= 2, "matmul", "operands must be at least 2-d");
    size_t M = av.shape[av.rank() - 2], K = av.shape[av.rank() - 1];
    size_t Kb = bv.shape[bv.rank() - 2], N = bv.shape[bv.rank() - 1];
    require(K == Kb, "matmul", "inner extents differ: " + shape_str(av.shape) + " x " + shape_str(bv.shape));

    bool broadcast_b = (bv.rank() == 2 && av.rank() > 2);
    Shape lead(av.shape.begin(), av.shape.end() - 2);
    if (!broadcast_b) {
        Shape leadb(bv.shape.begin(), bv.shape.end() - 2);
        require(lead == leadb, "matmul", "batch extents differ");
    }
    size_t batch = numel(lead);
    Shape os = lead;
    os.push_back(M);
    os.push_back(N);
    Array out(std::move(os));
    for (size_t bi = 0; bi < batch; ++bi) {
        const double* A = av.v.data() + bi * M * K;
        const double* B = bv.v.data() + (broadcast_b ? 0 : bi * K * N);
        mm_acc(A, B, out.v.data() + bi * M * N, M, N, K, false, false);
    }
    bool req = a.requires_grad() || b.requires_grad();
    int ia = a.id, ib = b.id;
    return a.tape->emit(std::move(out), req, "matmul",
                        [ia, ib, M, N, K, batch, broadcast_b](Tape& t, int self) {
        const Array& g = t.rec(self).grad;
        const Array& av = t.rec(ia).value;
        const Array& bv = t.rec(ib).value;
        if (t.rec(ia).needs_grad) {
            Array& ga = t.grad_buf(ia);
            for (size_t bi = 0; bi < batch; ++bi)
                mm_acc(g.v.data() + bi * M * N, bv.v.data() + (broadcast_b ? 0 : bi * K * N),
                       ga.v.data() + bi * M * K, M, K, N, false, true); // dA = dC * B^T
        }
        if (t.rec(ib).needs_grad) {
            Array& gb = t.grad_buf(ib);
            for (size_t bi = 0; bi < batch; ++bi)
                mm_acc(av.v.data() + bi * M * K, g.v.data() + bi * M * N,
                       gb.v.data() + (broadcast_b ? 0 : bi * K * N), K, N, M, true, false); // dB = A^T * dC
        }
    });
}

// ---- shape ops -------------------------------------------------------------

namespace {

Array transpose_copy(const Array& a, size_t ax0, size_t ax1) {
    Shape os = a.shape;
    std::swap(os[ax0], os[ax1]);
    Array out(os);
    auto ist = a.strides();
    auto ost = out.strides();
    size_t r = a.rank();
    std::vector<size_t> idx(r, 0);
    for (size_t lin = 0; lin < a.size(); ++lin) {
        size_t rem = lin;
        size_t opos = 0;
        for (size_t d = 0; d < r; ++d) {
            idx[d] = rem / ist[d];
            rem %= ist[d];
        }
        std::swap(idx[ax0], idx[ax1]);
        for (size_t d = 0; d < r; ++d) opos += idx[d] * ost[d];
        out[opos] = a[lin];
    }
    return out;
}

} // namespace

Node transpose(Node a, size_t ax0, size_t ax1) {
    const Array& av = a.val();
    require(ax0 < av.rank() && ax1 < av.rank(), "transpose", "axis out of range");
    Array out = transpose_copy(av, ax0, ax1);
    int ia = a.id;
    return a.tape->emit(std::move(out), a.requires_grad(), "transpose", [ia, ax0, ax1](Tape& t, int self) {
        if (!t.rec(ia).needs_grad) return;
        Array gt = transpose_copy(t.rec(self).grad, ax0, ax1);
        Array& ga = t.grad_buf(ia);
        for (size_t i = 0; i < gt.size(); ++i) ga[i] += gt[i];
    });
}

Node reshape(Node a, Shape s) {
    const Array& av = a.val();
    require(numel(s) == av.size(), "reshape", "element count mismatch");
    Array out(std::move(s), av.v);
    int ia = a.id;
    return a.tape->emit(std::move(out), a.requires_grad(), "reshape", [ia](Tape& t, int self) {
        if (!t.rec(ia).needs_grad) return;
        const Array& g = t.rec(self).grad;
        Array& ga = t.grad_buf(ia);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Node concat(const std::vector<Node>& xs, size_t axis) {
    require(!xs.empty(), "concat", "empty input list");
    const Shape& s0 = xs[0].val().shape;
    require(axis < s0.size(), "concat", "axis out of range");
    size_t total = 0;
    for (const Node& x : xs) {
        const Shape& s = x.val().shape;
        require(s.size() == s0.size(), "concat", "rank mismatch");
        for (size_t d = 0; d < s.size(); ++d)
            require(d == axis || s[d] == s0[d], "concat", "non-axis extents differ");
        total += s[axis];
    }
    Shape os = s0;
    os[axis] = total;
    Array out(os);
    auto sp = split_at(os, axis);
    bool req = false;
    std::vector<int> ids;
    std::vector<size_t> lens;
    for (const Node& x : xs) {
        req = req || x.requires_grad();
        ids.push_back(x.id);
        lens.push_back(x.val().shape[axis]);
    }
    size_t off = 0;
    for (size_t xi = 0; xi < xs.size(); ++xi) {
        const Array& v = xs[xi].val();
        size_t n = lens[xi];
        for (size_t o = 0; o < sp.outer; ++o)
            std::memcpy(out.v.data() + (o * sp.n + off) * sp.inner, v.v.data() + o * n * sp.inner,
                        n * sp.inner * sizeof(double));
        off += n;
    }
    return xs[0].tape->emit(std::move(out), req, "concat", [ids, lens, sp](Tape& t, int self) {
        const Array& g = t.rec(self).grad;
        size_t off = 0;
        for (size_t xi = 0; xi < ids.size(); ++xi) {
            size_t n = lens[xi];
            if (t.rec(ids[xi]).needs_grad) {
                Array& gx = t.grad_buf(ids[xi]);
                for (size_t o = 0; o < sp.outer; ++o) {
                    const double* src = g.v.data() + (o * sp.n + off) * sp.inner;
                    double* dst = gx.v.data() + o * n * sp.inner;
                    for (size_t i = 0; i < n * sp.inner; ++i) dst[i] += src[i];
                }
            }
            off += n;
        }
    });
}

Node slice(Node a, size_t axis, size_t start, size_t len) {
    const Array& av = a.val();
    require(axis < av.rank(), "slice", "axis out of range");
    require(start + len <= av.shape[axis] && len > 0, "slice", "range out of bounds");
    Shape os = av.shape;
    os[axis] = len;
    Array out(os);
    auto sp = split_at(av.shape, axis);
    for (size_t o = 0; o < sp.outer; ++o)
        std::memcpy(out.v.data() + o * len * sp.inner, av.v.data() + (o * sp.n + start) * sp.inner,
                    len * sp.inner * sizeof(double));
    int ia = a.id;
    return a.tape->emit(std::move(out), a.requires_grad(), "slice", [ia, sp, start, len](Tape& t, int self) {
        if (!t.rec(ia).needs_grad) return;
        const Array& g = t.rec(self).grad;
        Array& ga = t.grad_buf(ia);
        for (size_t o = 0; o < sp.outer; ++o) {
            const double* src = g.v.data() + o * len * sp.inner;
            double* dst = ga.v.data() + (o * sp.n + start) * sp.inner;
            for (size_t i = 0; i < len * sp.inner; ++i) dst[i] += src[i];
        }
    });
}

Node index_select(Node a, size_t axis, const std::vector<size_t>& idx) {
    const Array& av = a.val();
    require(axis < av.rank(), "index_select", "axis out of range");
    require(!idx.empty(), "index_select", "empty index list");
    for (size_t i : idx) require(i < av.shape[axis], "index_select", "index out of range");
    Shape os = av.shape;
    os[axis] = idx.size();
    Array out(os);
    auto sp = split_at(av.shape, axis);
    for (size_t o = 0; o < sp.outer; ++o)
        for (size_t j = 0; j < idx.size(); ++j)
            std::memcpy(out.v.data() + (o * idx.size() + j) * sp.inner,
                        av.v.data() + (o * sp.n + idx[j]) * sp.inner, sp.inner * sizeof(double));
    int ia = a.id;
    return a.tape->emit(std::move(out), a.requires_grad(), "index_select", [ia, sp, idx](Tape& t, int self) {
        if (!t.rec(ia).needs_grad) return;
        const Array& g = t.rec(self).grad;
        Array& ga = t.grad_buf(ia);
        for (size_t o = 0; o < sp.outer; ++o)
            for (size_t j = 0; j < idx.size(); ++j) {
                const double* src = g.v.data() + (o * idx.size() + j) * sp.inner;
                double* dst = ga.v.data() + (o * sp.n + idx[j]) * sp.inner;
                for (size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
            }
    });
}

// ---- normalizations & activations -------------------------------------------

namespace {

Node softmax_impl(Node a, const Array* mask) {
    const Array& av = a.val();
    require(av.rank() >= 1, "softmax", "rank must be >= 1");
    if (mask) require(mask->shape == av.shape, "softmax", "mask shape mismatch");
    size_t d = av.shape.back();
    size_t rows = av.size() / d;
    Array out(av.shape);
    for (size_t r = 0; r < rows; ++r) {
        const double* x = av.v.data() + r * d;
        const double* m = mask ? mask->v.data() + r * d : nullptr;
        double* y = out.v.data() + r * d;
        double mx = -std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < d; ++j) {
            double xj = x[j] + (m ? m[j] : 0.0);
            y[j] = xj;
            mx = std::max(mx, xj);
        }
        double z = 0.0;
        for (size_t j = 0; j < d; ++j) {
            y[j] = std::exp(y[j] - mx);
            z += y[j];
        }
        for (size_t j = 0; j < d; ++j) y[j] /= z;
    }
    int ia = a.id;
    return a.tape->emit(std::move(out), a.requires_grad(), "softmax", [ia, d](Tape& t, int self) {
        if (!t.rec(ia).needs_grad) return;
        const Array& g = t.rec(self).grad;
        const Array& y = t.rec(self).value;
        Array& ga = t.grad_buf(ia);
        size_t rows = g.size() / d;
        for (size_t r = 0; r < rows; ++r) {
            const double* gr = g.v.data() + r * d;
            const double* yr = y.v.data() + r * d;
            double dot = 0.0;
            for (size_t j = 0; j < d; ++j) dot += gr[j] * yr[j];
            double* dst = ga.v.data() + r * d;
            for (size_t j = 0; j < d; ++j) dst[j] += yr[j] * (gr[j] - dot);
        }
    });
}

} // namespace

Node softmax_last(Node a) { return softmax_impl(a, nullptr); }
Node softmax_last_masked(Node a, const Array& additive_mask) { return softmax_impl(a, &additive_mask); }

Node layer_norm(Node x, Node gain, Node bias, double eps) {
    const Array& xv = x.val();
    const Array& gv = gain.val();
    const Array& bv = bias.val();
    require(eps > 0, "layer_norm", "epsilon must be positive");
    size_t d = xv.shape.back();
    require(gv.rank() == 1 && gv.dim(0) == d && bv.rank() == 1 && bv.dim(0) == d, "layer_norm",
            "gain/bias must have the extent of the last axis");
    size_t rows = xv.size() / d;
    Array out(xv.shape);
    Array xhat(xv.shape);
    Array inv_std({rows});
    for (size_t r = 0; r < rows; ++r) {
        const double* xr = xv.v.data() + r * d;
        double mu = 0.0;
        for (size_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(d);
        double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (size_t j = 0; j < d; ++j) {
            double xh = (xr[j] - mu) * is;
            xhat[r * d + j] = xh;
            out[r * d + j] = xh * gv[j] + bv[j];
        }
    }
    bool req = x.requires_grad() || gain.requires_grad() || bias.requires_grad();
    int ix = x.id, ig = gain.id, ib = bias.id;
    auto xh = std::make_shared<Array>(std::move(xhat));
    auto is = std::make_shared<Array>(std::move(inv_std));
    return x.tape->emit(std::move(out), req, "layer_norm", [ix, ig, ib, d, xh, is](Tape& t, int self) {
        const Array& g = t.rec(self).grad;
        const Array& gv = t.rec(ig).value;
        size_t rows = g.size() / d;
        if (t.rec(ig).needs_grad) {
            Array& gg = t.grad_buf(ig);
            for (size_t r = 0; r < rows; ++r)
                for (size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * (*xh)[r * d + j];
        }
        if (t.rec(ib).needs_grad) {
            Array& gb = t.grad_buf(ib);
            for (size_t r = 0; r < rows; ++r)
                for (size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
        }
        if (t.rec(ix).needs_grad) {
            Array& gx = t.grad_buf(ix);
            for (size_t r = 0; r < rows; ++r) {
                double m1 = 0.0, m2 = 0.0;
                for (size_t j = 0; j < d; ++j) {
                    double dy = g[r * d + j] * gv[j];
                    m1 += dy;
                    m2 += dy * (*xh)[r * d + j];
                }
                m1 /= static_cast<double>(d);
                m2 /= static_cast<double>(d);
                for (size_t j = 0; j < d; ++j) {
                    double dy = g[r * d + j] * gv[j];
                    gx[r * d + j] += (*is)[r] * (dy - m1 - (*xh)[r * d + j] * m2);
                }
            }
        }
    });
}

Node l2norm_last(Node a) {
    const Array& av = a.val();
    size_t d = av.shape.back();
    size_t rows = av.size() / d;
    Array out(av.shape);
    Array norms({rows});
    for (size_t r = 0; r < rows; ++r) {
        const double* x = av.v.data() + r * d;
        double s = 0.0;
        for (size_t j = 0; j < d; ++j) s += x[j] * x[j];
        double n = std::sqrt(s);
        if (n == 0.0) throw GraphError("l2norm_last: zero-norm row");
        norms[r] = n;
        for (size_t j = 0; j < d; ++j) out[r * d + j] = x[j] / n;
    }
    int ia = a.id;
    auto nr = std::make_shared<Array>(std::move(norms));
    return a.tape->emit(std::move(out), a.requires_grad(), "l2norm_last", [ia, d, nr](Tape& t, int self) {
        if (!t.rec(ia).needs_grad) return;
        const Array& g = t.rec(self).grad;
        const Array& y = t.rec(self).value;
        Array& ga = t.grad_buf(ia);
        size_t rows = g.size() / d;
        for (size_t r = 0; r < rows; ++r) {
            const double* gr = g.v.data() + r * d;
            const double* yr = y.v.data() + r * d;
            double dot = 0.0;
            for (size_t j = 0; j < d; ++j) dot += gr[j] * yr[j];
            for (size_t j = 0; j < d; ++j) ga[r * d + j] += (gr[j] - yr[j] * dot) / (*nr)[r];
        }
    });
}

Node gelu(Node a) {
    static const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    static const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
    const Array& av = a.val();
    Array out(av.shape);
    for (size_t i = 0; i < av.size(); ++i)
        out[i] = 0.5 * av[i] * (1.0 + std::erf(av[i] * inv_sqrt2));
    int ia = a.id;
    return a.tape->emit(std::move(out), a.requires_grad(), "gelu", [ia](Tape& t, int self) {
        if (!t.rec(ia).needs_grad) return;
        const Array& g = t.rec(self).grad;
        const Array& x = t.rec(ia).value;
        Array& ga = t.grad_buf(ia);
        for (size_t i = 0; i < g.size(); ++i) {
            double cdf = 0.5 * (1.0 + std::erf(x[i] * inv_sqrt2));
            double pdf = inv_sqrt2pi * std::exp(-0.5 * x[i] * x[i]);
            ga[i] += g[i] * (cdf + x[i] * pdf);
        }
    });
}

Node relu(Node a) {
    const Array& av = a.val();
    Array out(av.shape);
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
    int ia = a.id;
    return a.tape->emit(std::move(out), a.requires_grad(), "relu", [ia](Tape& t, int self) {
        if (!t.rec(ia).needs_grad) return;
        const Array& g = t.rec(self).grad;
        const Array& x = t.rec(ia).value;
        Array& ga = t.grad_buf(ia);
        for (size_t i = 0; i < g.size(); ++i)
            if (x[i] > 0.0) ga[i] += g[i];
    });
}

Node exp_(Node a) {
    const Array& av = a.val();
    Array out(av.shape);
    for (size_t i = 0; i < av.size(); ++i) out[i] = std::exp(av[i]);
    int ia = a.id;
    return a.tape->emit(std::move(out), a.requires_grad(), "exp", [ia](Tape& t, int self) {
        if (!t.rec(ia).needs_grad) return;
        const Array& g = t.rec(self).grad;
        const Array& y = t.rec(self).value;
        Array& ga = t.grad_buf(ia);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    });
}

Node log_(Node a) {
    const Array& av = a.val();
    Array out(av.shape);
    for (size_t i = 0; i < av.size(); ++i) out[i] = std::log(av[i]);
    int ia = a.id;
    return a.tape->emit(std::move(out), a.requires_grad(), "log", [ia](Tape& t, int self) {
        if (!t.rec(ia).needs_grad) return;
        const Array& g = t.rec(self).grad;
        const Array& x = t.rec(ia).value;
        Array& ga = t.grad_buf(ia);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
    });
}

Node tile_rows(Node a, size_t reps) {
    const Array& av = a.val();
    require(reps >= 1, "tile_rows", "reps must be >= 1");
    size_t n = av.size();
    Array out({reps, n});
    for (size_t r = 0; r < reps; ++r)
        std::memcpy(out.v.data() + r * n, av.v.data(), n * sizeof(double));
    int ia = a.id;
    return a.tape->emit(std::move(out), a.requires_grad(), "tile_rows", [ia, reps, n](Tape& t, int self) {
        if (!t.rec(ia).needs_grad) return;
        const Array& g = t.rec(self).grad;
        Array& ga = t.grad_buf(ia);
        for (size_t r = 0; r < reps; ++r)
            for (size_t i = 0; i < n; ++i) ga[i] += g[r * n + i];
    });
}

// ---- reductions ------------------------------------------------------------

Node sum_all(Node a) {
    const Array& av = a.val();
    double s = 0.0;
    for (double x : av.v) s += x;
    int ia = a.id;
    return a.tape->emit(Array({1}, {s}), a.requires_grad(), "sum_all", [ia](Tape& t, int self) {
        if (!t.rec(ia).needs_grad) return;
        double g = t.rec(self).grad[0];
        Array& ga = t.grad_buf(ia);
        for (double& x : ga.v) x += g;
    });
}

Node mean_all(Node a) {
    const Array& av = a.val();
    double s = 0.0;
    for (double x : av.v) s += x;
    double n = static_cast<double>(av.size());
    int ia = a.id;
    return a.tape->emit(Array({1}, {s / n}), a.requires_grad(), "mean_all", [ia, n](Tape& t, int self) {
        if (!t.rec(ia).needs_grad) return;
        double g = t.rec(self).grad[0] / n;
        Array& ga = t.grad_buf(ia);
        for (double& x : ga.v) x += g;
    });
}

Node sum_last(Node a) {
    const Array& av = a.val();
    require(av.rank() >= 1, "sum_last", "rank must be >= 1");
    size_t d = av.shape.back();
    size_t rows = av.size() / d;
    Shape os(av.shape.begin(), av.shape.end() - 1);
    if (os.empty()) os.push_back(1);
    Array out(os);
    for (size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        const double* x = av.v.data() + r * d;
        for (size_t j = 0; j < d; ++j) s += x[j];
        out[r] = s;
    }
    int ia = a.id;
    return a.tape->emit(std::move(out), a.requires_grad(), "sum_last", [ia, d](Tape& t, int self) {
        if (!t.rec(ia).needs_grad) return;
        const Array& g = t.rec(self).grad;
        Array& ga = t.grad_buf(ia);
        for (size_t r = 0; r < g.size(); ++r)
            for (size_t j = 0; j < d; ++j) ga[r * d + j] += g[r];
    });
}

Node max_over_axis(Node a, size_t axis) {
    const Array& av = a.val();
    require(axis < av.rank(), "max_over_axis", "axis out of range");
    auto sp = split_at(av.shape, axis);
    Shape os;
    for (size_t i = 0; i < av.rank(); ++i)
        if (i != axis) os.push_back(av.shape[i]);
    if (os.empty()) os.push_back(1);
    Array out(os);
    auto argmax = std::make_shared<std::vector<size_t>>(out.size());
    for (size_t o = 0; o < sp.outer; ++o) {
        for (size_t i = 0; i < sp.inner; ++i) {
            double best = av[(o * sp.n + 0) * sp.inner + i];
            size_t bi = 0;
            for (size_t k = 1; k < sp.n; ++k) {
                double x = av[(o * sp.n + k) * sp.inner + i];
                if (x > best) { // strict: ties keep the lowest index
                    best = x;
                    bi = k;
                }
            }
            out[o * sp.inner + i] = best;
            (*argmax)[o * sp.inner + i] = bi;
        }
    }
    int ia = a.id;
    return a.tape->emit(std::move(out), a.requires_grad(), "max_over_axis",
                        [ia, sp, argmax](Tape& t, int self) {
        if (!t.rec(ia).needs_grad) return;
        const Array& g = t.rec(self).grad;
        Array& ga = t.grad_buf(ia);
        for (size_t o = 0; o < sp.outer; ++o)
            for (size_t i = 0; i < sp.inner; ++i) {
                size_t k = (*argmax)[o * sp.inner + i];
                ga[(o * sp.n + k) * sp.inner + i] += g[o * sp.inner + i];
            }
    });
}

} // namespace uskel::num
