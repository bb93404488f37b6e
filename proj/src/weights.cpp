#include "semsplat/weights.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "semsplat/common.hpp"

namespace semsplat {

Tensor& NetworkWeights::add(const std::string& name, std::vector<int64_t> shape, bool randomized) {
  if (index_.count(name)) throw ValidationError("NetworkWeights: duplicate tensor " + name);
  index_[name] = entries_.size();
  entries_.push_back(Entry{name, Tensor(std::move(shape)), randomized});
  return entries_.back().tensor;
}

Tensor& NetworkWeights::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("NetworkWeights: missing tensor " + name);
  return entries_[it->second].tensor;
}

const Tensor& NetworkWeights::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("NetworkWeights: missing tensor " + name);
  return entries_[it->second].tensor;
}

bool NetworkWeights::has(const std::string& name) const { return index_.count(name) > 0; }

void NetworkWeights::randomize(uint64_t seed) {
  seed_ = seed;
  std::mt19937_64 rng(seed);
  for (auto& e : entries_) {
    if (!e.randomized) {
      e.tensor.fill(0.0);
      continue;
    }
    int64_t fan_in = 1;
    for (int i = 1; i < e.tensor.ndim(); ++i) fan_in *= e.tensor.dim(i);
    double a = 1.0 / std::sqrt(static_cast<double>(fan_in > 0 ? fan_in : 1));
    std::uniform_real_distribution<double> dist(-a, a);
    for (int64_t i = 0; i < e.tensor.numel(); ++i) e.tensor[i] = dist(rng);
  }
}

void NetworkWeights::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("NetworkWeights::save: cannot open " + path);
  f << "SEMSPLAT_WEIGHTS 1\n";
  f << "seed " << seed_ << "\n";
  f << "tensors " << entries_.size() << "\n";
  int64_t offset = 0;
  for (const auto& e : entries_) {
    f << e.name << " " << (e.randomized ? 1 : 0) << " " << e.tensor.ndim();
    for (int i = 0; i < e.tensor.ndim(); ++i) f << " " << e.tensor.dim(i);
    f << " " << offset << "\n";
    offset += e.tensor.numel();
  }
  f << "DATA\n";
  std::vector<float> buf;
  for (const auto& e : entries_) {
    buf.resize(static_cast<size_t>(e.tensor.numel()));
    for (int64_t i = 0; i < e.tensor.numel(); ++i) buf[static_cast<size_t>(i)] =
        static_cast<float>(e.tensor[i]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
}

NetworkWeights NetworkWeights::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("NetworkWeights::load: cannot open " + path);
  std::string magic;
  int version = 0;
  f >> magic >> version;
  if (magic != "SEMSPLAT_WEIGHTS" || version != 1)
    throw ValidationError("NetworkWeights::load: bad header");
  std::string key;
  uint64_t seed = 0;
  size_t count = 0;
  f >> key >> seed;
  f >> key >> count;
  NetworkWeights w;
  for (size_t i = 0; i < count; ++i) {
    std::string name;
    int randomized = 0, ndim = 0;
    int64_t offset = 0;
    f >> name >> randomized >> ndim;
    std::vector<int64_t> shape(static_cast<size_t>(ndim));
    for (auto& s : shape) f >> s;
    f >> offset;
    w.add(name, shape, randomized != 0);
  }
  w.seed_ = seed;
  std::string line;
  std::getline(f, line);  // rest of last manifest line
  std::getline(f, line);
  if (line != "DATA") throw ValidationError("NetworkWeights::load: missing DATA marker");
  for (auto& e : w.entries_) {
    std::vector<float> buf(static_cast<size_t>(e.tensor.numel()));
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw ValidationError("NetworkWeights::load: truncated data block");
    for (int64_t i = 0; i < e.tensor.numel(); ++i) e.tensor[i] = buf[static_cast<size_t>(i)];
  }
  return w;
}

}  // namespace semsplat
