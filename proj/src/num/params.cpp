#include "num/params.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace bevfuse::num {

ParamId ParamRegistry::add(const std::string& path, std::vector<int> shape,
                           Init init, int fan_in) {
  if (finalized_) throw std::logic_error("params: add after finalize");
  if (index_.count(path)) throw std::invalid_argument("params: duplicate path " + path);
  const std::int64_t n = numel(shape);
  if (n <= 0) throw std::invalid_argument("params: empty shape for " + path);
  if (init == Init::UniformFanIn && fan_in <= 0) {
    // Default fan-in: last extent (input dim of a matrix, length of a vector).
    fan_in = shape.back();
  }
  Entry e;
  e.path = path;
  e.size = n;
  e.rows = shape.size() >= 1 ? shape[0] : 1;
  e.cols = shape.size() >= 2 ? shape[1] : 1;
  e.shape = std::move(shape);
  e.init = init;
  e.fan_in = fan_in;
  entries_.push_back(std::move(e));
  const ParamId id = entries_.size() - 1;
  index_[path] = id;
  return id;
}

void ParamRegistry::finalize(std::uint64_t seed) {
  if (finalized_) throw std::logic_error("params: already finalized");
  std::int64_t total = 0;
  for (auto& e : entries_) {
    e.offset = total;
    total += e.size;
  }
  values_.assign(static_cast<std::size_t>(total), 0.0);
  grads_.assign(static_cast<std::size_t>(total), 0.0);
  for (auto& e : entries_) {
    double* v = values_.data() + e.offset;
    switch (e.init) {
      case Init::Zero:
        break;
      case Init::One:
        for (std::int64_t i = 0; i < e.size; ++i) v[i] = 1.0;
        break;
      case Init::UniformFanIn: {
        Rng rng(mix_seed(seed, hash_str(e.path)));
        const double bound = 1.0 / std::sqrt(static_cast<double>(e.fan_in));
        for (std::int64_t i = 0; i < e.size; ++i) v[i] = rng.uniform(-bound, bound);
        break;
      }
    }
  }
  finalized_ = true;
}

void ParamRegistry::zero_grads() {
  std::fill(grads_.begin(), grads_.end(), 0.0);
}

std::vector<std::uint8_t> ParamRegistry::mask_for_prefixes(
    const std::vector<std::string>& prefixes) const {
  std::vector<std::uint8_t> mask(values_.size(), 0);
  for (const auto& e : entries_) {
    bool hit = false;
    for (const auto& pre : prefixes) {
      if (e.path.rfind(pre, 0) == 0) {
        hit = true;
        break;
      }
    }
    if (hit)
      std::fill_n(mask.begin() + e.offset, e.size, std::uint8_t{1});
  }
  return mask;
}

std::uint64_t ParamRegistry::checksum(const std::vector<std::uint8_t>& mask) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!mask[i]) continue;
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &values_[i], sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::uint64_t ParamRegistry::checksum_all() const {
  std::vector<std::uint8_t> mask(values_.size(), 1);
  return checksum(mask);
}

ParamId ParamRegistry::id(const std::string& path) const {
  auto it = index_.find(path);
  if (it == index_.end()) throw std::invalid_argument("params: unknown path " + path);
  return it->second;
}

void ParamRegistry::set_values(const std::string& path, std::span<const double> v) {
  const Entry& e = entries_[id(path)];
  if (static_cast<std::int64_t>(v.size()) != e.size)
    throw std::invalid_argument("params: size mismatch for " + path);
  std::copy(v.begin(), v.end(), values_.begin() + e.offset);
}

std::span<const double> ParamRegistry::get_values(const std::string& path) const {
  const Entry& e = entries_[id(path)];
  return {values_.data() + e.offset, static_cast<std::size_t>(e.size)};
}

}  // namespace bevfuse::num
