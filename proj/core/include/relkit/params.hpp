#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "relkit/autodiff.hpp"
#include "relkit/tensor.hpp"

namespace relkit::numerics {

// Ordered, named collection of model tensors. Order is fixed at creation
// and shared by checkpoints, the optimizer, and EMA shadows, so iteration
// is always deterministic. `trainable = false` marks frozen tensors: they
// are skipped by the optimizer and receive no gradient slots.
struct ParamStore {
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable = true;
  };

  std::vector<Entry> entries;
  std::unordered_map<std::string, size_t> index;

  Tensor& add(const std::string& name, Tensor value, bool trainable = true) {
    if (index.count(name)) throw UsageError("params: duplicate name " + name);
    index.emplace(name, entries.size());
    entries.push_back(Entry{name, std::move(value), trainable});
    return entries.back().value;
  }

  bool has(const std::string& name) const { return index.count(name) != 0; }

  Tensor& get(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw UsageError("params: unknown name " + name);
    return entries[it->second].value;
  }
  const Tensor& get(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw UsageError("params: unknown name " + name);
    return entries[it->second].value;
  }

  bool trainable(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw UsageError("params: unknown name " + name);
    return entries[it->second].trainable;
  }
};

// Per-tape handles for every entry of a store. Built once per training
// step; lookups by the same names the store uses.
struct LeafMap {
  std::unordered_map<std::string, Var> vars;

  Var at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw UsageError("leaf map: unknown name " + name);
    return it->second;
  }
};

// Registers every store entry on the tape. Values are copied onto the
// tape, so the store itself is never mutated by a training step.
inline LeafMap leaf_all(Tape& tape, const ParamStore& store) {
  LeafMap m;
  for (const auto& e : store.entries)
    m.vars.emplace(e.name, tape.leaf(e.value, e.trainable));
  return m;
}

}  // namespace relkit::numerics
