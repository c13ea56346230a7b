#include "uskel/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian");

namespace uskel::num {

Array& ParamStore::get_or_create(const std::string& name, const Shape& shape, Init kind) {
    auto it = index_.find(name);
    if (it != index_.end()) {
        Array& a = items_[it->second].second;
        if (a.shape != shape)
            throw GraphError("parameter '" + name + "' requested with shape " + shape_str(shape) +
                             " but stored as " + shape_str(a.shape));
        return a;
    }
    Array a(shape);
    switch (kind) {
    case Init::zeros:
        break;
    case Init::ones:
        for (double& x : a.v) x = 1.0;
        break;
    case Init::xavier_uniform: {
        size_t fan_in = shape.size() >= 2 ? shape[shape.size() - 2] : shape.back();
        size_t fan_out = shape.back();
        double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (double& x : a.v) x = rng_.uniform(-bound, bound);
        break;
    }
    case Init::normal_small:
        for (double& x : a.v) x = 0.02 * rng_.normal();
        break;
    }
    index_[name] = items_.size();
    items_.emplace_back(name, std::move(a));
    return items_.back().second;
}

Array& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw GraphError("unknown parameter '" + name + "'");
    return items_[it->second].second;
}

const Array& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw GraphError("unknown parameter '" + name + "'");
    return items_[it->second].second;
}

void Adam::step(ParamStore& store, const Tape& tape, const std::vector<Binding>& bound, double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const Binding& b : bound) {
        auto& [name, value] = store.items()[b.store_idx];
        auto& [m, v] = moments_[name];
        if (m.size() != value.size()) {
            m = Array(value.shape);
            v = Array(value.shape);
        }
        const Tape::Rec& rec = tape.rec(b.node_id);
        for (size_t i = 0; i < value.size(); ++i) {
            double g = rec.grad_ready ? rec.grad[i] : 0.0;
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            value[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
        }
    }
}

void write_checkpoint(const std::vector<std::pair<std::string, Array>>& items, const std::string& path) {
    nlohmann::json header;
    header["version"] = 1;
    auto& params = header["params"] = nlohmann::json::array();
    for (const auto& [name, arr] : items) {
        nlohmann::json p;
        p["name"] = name;
        p["shape"] = arr.shape;
        params.push_back(std::move(p));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw GraphError("cannot open checkpoint for writing: " + path);
    out << header.dump() << "\n";
    for (const auto& [name, arr] : items)
        out.write(reinterpret_cast<const char*>(arr.v.data()),
                  static_cast<std::streamsize>(arr.v.size() * sizeof(double)));
    if (!out) throw GraphError("checkpoint write failed: " + path);
}

std::vector<std::pair<std::string, Array>> read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw GraphError("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line)) throw GraphError("checkpoint header missing: " + path);
    nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
    if (header.is_discarded() || header.value("version", 0) != 1)
        throw GraphError("unsupported checkpoint header: " + path);
    std::vector<std::pair<std::string, Array>> items;
    for (const auto& p : header.at("params")) {
        Shape shape = p.at("shape").get<Shape>();
        Array arr(shape);
        in.read(reinterpret_cast<char*>(arr.v.data()),
                static_cast<std::streamsize>(arr.v.size() * sizeof(double)));
        if (!in) throw GraphError("checkpoint truncated: " + path);
        items.emplace_back(p.at("name").get<std::string>(), std::move(arr));
    }
    return items;
}

void save_checkpoint(const ParamStore& store, const std::string& path) {
    write_checkpoint(store.items(), path);
}

void load_checkpoint(ParamStore& store, const std::string& path) {
    auto items = read_checkpoint(path);
    for (auto& [name, arr] : items) {
        Array& dst = store.get_or_create(name, arr.shape, Init::zeros);
        dst = std::move(arr);
    }
}

} // namespace uskel::num
