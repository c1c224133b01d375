#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gff/tensor.hpp"

namespace gff {

/// Named parameter tensors, each flagged frozen or trainable. Frozen entries
/// have requires_grad off and must be bit-identical before and after any run
/// of the optimizer. Iteration follows registration order, which also fixes
/// the weight-file layout.
template <typename S>
class ParameterRegistry {
public:
    struct Entry {
        std::string name;
        Tensor<S> tensor;
        bool frozen;
    };

    /// Registers a tensor and returns a handle sharing its storage. The
    /// handle stays valid across later registrations.
    Tensor<S> add(const std::string& name, Tensor<S> tensor, bool frozen) {
        if (index_.count(name)) throw ContractError("registry: duplicate parameter " + name);
        tensor.set_requires_grad(!frozen);
        index_[name] = entries_.size();
        entries_.push_back({name, tensor, frozen});
        return tensor;
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    Entry& entry(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractError("registry: unknown parameter " + name);
        return entries_[it->second];
    }

    const Entry& entry(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractError("registry: unknown parameter " + name);
        return entries_[it->second];
    }

    Tensor<S>& tensor(const std::string& name) { return entry(name).tensor; }

    std::size_t size() const { return entries_.size(); }
    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }

    /// Allocates/zeroes grad slots of all trainable entries.
    void zero_grads() {
        for (auto& e : entries_)
            if (!e.frozen) e.tensor.zero_grad();
    }

    /// Byte-level snapshot of parameter values, for immutability checks.
    std::vector<std::vector<S>> snapshot(
        const std::function<bool(const Entry&)>& pred = nullptr) const {
        std::vector<std::vector<S>> out;
        for (const auto& e : entries_)
            if (!pred || pred(e))
                out.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
        return out;
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Sum of element counts over non-frozen entries whose name passes the
/// optional filter.
template <typename S>
std::uint64_t count_trainable(const ParameterRegistry<S>& registry,
                              const std::function<bool(const std::string&)>& filter = nullptr) {
    std::uint64_t total = 0;
    for (const auto& e : registry.entries())
        if (!e.frozen && (!filter || filter(e.name))) total += e.tensor.numel();
    return total;
}

}  // namespace gff
