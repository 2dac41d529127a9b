#ifndef PROTOMARK_PARAMS_HPP
#define PROTOMARK_PARAMS_HPP

#include <map>
#include <string>
#include <vector>

#include "protomark/autodiff.hpp"
#include "protomark/errors.hpp"

namespace protomark {

struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, double fill = 0.0)
        : shape(std::move(s)), data(ad::numel(shape), fill) {}
    std::size_t size() const { return data.size(); }
};

// Ordered, named parameter tensors. Order is the serialization, flat-indexing
// and initialization order, so it must be stable across runs.
class ParamSet {
public:
    Tensor& add(const std::string& name, std::vector<int> shape, double fill = 0.0) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        index_[name] = items_.size();
        items_.push_back({name, Tensor(std::move(shape), fill)});
        return items_.back().second;
    }
    Tensor& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return items_[it->second].second;
    }
    const Tensor& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return items_[it->second].second;
    }
    bool has(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t count() const { return items_.size(); }
    const std::string& name(std::size_t i) const { return items_[i].first; }
    Tensor& tensor(std::size_t i) { return items_[i].second; }
    const Tensor& tensor(std::size_t i) const { return items_[i].second; }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& [name, t] : items_) n += t.size();
        return n;
    }
    double get_flat(std::size_t i) const {
        const auto [item, off] = locate(i);
        return items_[item].second.data[off];
    }
    void set_flat(std::size_t i, double v) {
        const auto [item, off] = locate(i);
        items_[item].second.data[off] = v;
    }

    // Zero-filled clone with identical names/shapes (optimizer state, grads).
    ParamSet zeros_like() const {
        ParamSet out;
        for (const auto& [name, t] : items_) out.add(name, t.shape);
        return out;
    }

    bool same_layout(const ParamSet& other) const {
        if (items_.size() != other.items_.size()) return false;
        for (std::size_t i = 0; i < items_.size(); ++i) {
            if (items_[i].first != other.items_[i].first ||
                items_[i].second.shape != other.items_[i].second.shape)
                return false;
        }
        return true;
    }

private:
    std::pair<std::size_t, std::size_t> locate(std::size_t i) const {
        for (std::size_t item = 0; item < items_.size(); ++item) {
            if (i < items_[item].second.size()) return {item, i};
            i -= items_[item].second.size();
        }
        throw ConfigError("flat parameter index out of range");
    }
    std::vector<std::pair<std::string, Tensor>> items_;
    std::map<std::string, std::size_t> index_;
};

// Leaf handles for a ParamSet pushed onto a tape, keyed by parameter name.
using ParamVars = std::map<std::string, ad::Var>;

inline ParamVars push_params(ad::Tape& tape, const ParamSet& params) {
    ParamVars vars;
    for (std::size_t i = 0; i < params.count(); ++i) {
        const Tensor& t = params.tensor(i);
        vars[params.name(i)] = tape.leaf(t.data, t.shape);
    }
    return vars;
}

// Accumulates tape gradients into `grads` (same layout as params).
inline void pull_grads(const ad::Tape& tape, const ParamVars& vars, ParamSet& grads) {
    for (std::size_t i = 0; i < grads.count(); ++i) {
        const auto& g = tape.grad_of(vars.at(grads.name(i)));
        if (g.empty()) continue;
        auto& dst = grads.tensor(i).data;
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += g[j];
    }
}

} // namespace protomark

#endif
