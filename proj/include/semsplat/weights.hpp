#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "semsplat/tensor.hpp"

namespace semsplat {

// Ordered registry of named weight tensors. Randomization walks tensors in
// registration order with a single seeded generator, so a (seed, layout) pair
// fully determines every value.
class NetworkWeights {
 public:
  // randomized=false keeps the tensor at zero under randomize() (biases).
  Tensor& add(const std::string& name, std::vector<int64_t> shape, bool randomized = true);

  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;

  struct Entry {
    std::string name;
    Tensor tensor;
    bool randomized;
  };
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  uint64_t seed() const { return seed_; }

  // Uniform fan-in init: each randomized tensor filled with U(-a, a),
  // a = 1/sqrt(fan_in). fan_in = product of all dims but the first.
  void randomize(uint64_t seed);

  // Snapshot: text manifest (name, shape, float offset) followed by a flat
  // little-endian float32 block.
  void save(const std::string& path) const;
  static NetworkWeights load(const std::string& path);

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
  uint64_t seed_ = 0;
};

}  // namespace semsplat
