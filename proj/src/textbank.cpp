#include "uskel/textbank.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "uskel/rng.hpp"

namespace uskel::text {

using nlohmann::json;

const std::vector<double>& LabelBank::vec(int id) const {
    auto it = entries.find(id);
    if (it == entries.end()) throw BankError("unknown label id " + std::to_string(id));
    return it->second.vec;
}

const std::string& LabelBank::name(int id) const {
    auto it = entries.find(id);
    if (it == entries.end()) throw BankError("unknown label id " + std::to_string(id));
    return it->second.name;
}

std::vector<int> LabelBank::ids() const {
    std::vector<int> out;
    out.reserve(entries.size());
    for (const auto& [id, _] : entries) out.push_back(id);
    return out;
}

void LabelBank::insert(int id, std::string name, std::vector<double> v) {
    if (entries.count(id)) throw BankError("duplicate label_id " + std::to_string(id));
    if (v.size() != dim) throw BankError("label " + std::to_string(id) + ": dim mismatch");
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw BankError("label " + std::to_string(id) + ": zero vector");
    // Pre-normalized vectors pass through verbatim.
    if (std::abs(norm - 1.0) > 1e-9)
        for (double& x : v) x /= norm;
    entries[id] = LabelEntry{std::move(name), std::move(v)};
}

LabelBank load_bank(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw BankError("cannot open label bank: " + path);
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw BankError("label bank is not valid JSON: " + path);
    LabelBank bank;
    bank.dim = doc.at("dim").get<size_t>();
    for (const auto& l : doc.at("labels"))
        bank.insert(l.at("id").get<int>(), l.at("name").get<std::string>(),
                    l.at("vector").get<std::vector<double>>());
    if (doc.contains("seen"))
        for (int id : doc["seen"]) bank.seen.insert(id);
    if (doc.contains("unseen"))
        for (int id : doc["unseen"]) bank.unseen.insert(id);
    if (bank.seen.empty())
        for (const auto& [id, _] : bank.entries)
            if (!bank.is_unseen(id)) bank.seen.insert(id);
    for (int id : bank.unseen)
        if (bank.seen.count(id))
            throw BankError("label " + std::to_string(id) + " flagged both seen and unseen");
    return bank;
}

void save_bank(const LabelBank& bank, const std::string& path) {
    json doc;
    doc["dim"] = bank.dim;
    json labels = json::array();
    for (const auto& [id, entry] : bank.entries)
        labels.push_back({{"id", id}, {"name", entry.name}, {"vector", entry.vec}});
    doc["labels"] = std::move(labels);
    doc["seen"] = bank.seen;
    doc["unseen"] = bank.unseen;
    std::ofstream out(path);
    if (!out) throw BankError("cannot open label bank for writing: " + path);
    out << doc.dump() << "\n";
}

LabelBank synth_bank(const std::vector<std::pair<int, std::string>>& names, size_t dim,
                     uint64_t seed) {
    if (dim < 8) throw BankError("synth_bank: dim must be >= 8");
    std::set<std::string> unique;
    for (const auto& [_, name] : names)
        if (!unique.insert(name).second) throw BankError("synth_bank: duplicate name '" + name + "'");
    LabelBank bank;
    bank.dim = dim;
    for (const auto& [id, name] : names) {
        Rng base(derive_seed(seed, "synth-name:" + name));
        std::vector<double> v(dim);
        for (double& x : v) x = base.normal();
        std::istringstream words(name);
        std::string tok;
        while (words >> tok) {
            Rng shared(derive_seed(seed, "synth-token:" + tok));
            for (double& x : v) x += 0.5 * shared.normal();
        }
        bank.insert(id, name, std::move(v));
        bank.seen.insert(id);
    }
    return bank;
}

} // namespace uskel::text
