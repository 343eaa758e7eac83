#include "wavebank/params.hpp"

#include "wavebank/error.hpp"

namespace wavebank {

void ParamStore::add(std::string name, Tensor* value, bool trainable) {
  if (index_.count(name)) throw Error("duplicate parameter name: " + name);
  index_[name] = entries_.size();
  entries_.push_back(Entry{std::move(name), value, trainable});
}

bool ParamStore::has(std::string_view name) const { return index_.count(std::string(name)) > 0; }

Tensor& ParamStore::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw Error("unknown parameter: " + std::string(name));
  return *entries_[it->second].value;
}

const Tensor& ParamStore::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw Error("unknown parameter: " + std::string(name));
  return *entries_[it->second].value;
}

int64_t ParamStore::total_size(bool trainable_only) const {
  int64_t n = 0;
  for (const auto& e : entries_) {
    if (trainable_only && !e.trainable) continue;
    n += e.value->size();
  }
  return n;
}

ParamBinding::ParamBinding(Tape& tape, const ParamStore& store) {
  for (const auto& e : store.entries()) {
    if (!e.trainable) continue;
    vars_[e.name] = tape.leaf(*e.value);
  }
}

Var ParamBinding::var(std::string_view name) const {
  auto it = vars_.find(std::string(name));
  if (it == vars_.end()) throw Error("parameter not bound to tape: " + std::string(name));
  return it->second;
}

}  // namespace wavebank
