#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace uskel::num {

using Shape = std::vector<size_t>;

inline size_t numel(const Shape& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Dense row-major f64 array. The whole pipeline runs in double precision:
// the gradient-check oracle is the project's main acceptance gate and needs
// the headroom.
struct Array {
    Shape shape;
    std::vector<double> v;

    Array() = default;
    explicit Array(Shape s) : shape(std::move(s)), v(numel(shape), 0.0) {}
    Array(Shape s, double fill) : shape(std::move(s)), v(numel(shape), fill) {}
    Array(Shape s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
        if (v.size() != numel(shape))
            throw std::invalid_argument("Array: data size does not match shape " + shape_str(shape));
    }

    size_t size() const { return v.size(); }
    size_t dim(size_t i) const { return shape.at(i); }
    size_t rank() const { return shape.size(); }

    double& operator[](size_t i) { return v[i]; }
    double operator[](size_t i) const { return v[i]; }

    // Row-major strides.
    std::vector<size_t> strides() const {
        std::vector<size_t> st(shape.size(), 1);
        for (size_t i = shape.size(); i-- > 1;) st[i - 1] = st[i] * shape[i];
        return st;
    }
};

inline bool same_shape(const Array& a, const Array& b) { return a.shape == b.shape; }

} // namespace uskel::num
