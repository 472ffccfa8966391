#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "num/rng.hpp"
#include "num/tensor.hpp"

namespace bevfuse::num {

enum class Init { Zero, One, UniformFanIn };

using ParamId = std::size_t;

// Owns every learnable tensor of a model in two flat arenas (values and
// gradients). Flat storage keeps the optimizer, checkpoints, checksums and
// freeze masks simple and deterministic.
class ParamRegistry {
 public:
  ParamId add(const std::string& path, std::vector<int> shape,
              Init init = Init::UniformFanIn, int fan_in = 0);

  // Allocates arenas and runs initializers. No further add() calls allowed.
  void finalize(std::uint64_t seed);
  bool finalized() const { return finalized_; }

  double* val(ParamId id) { return values_.data() + entries_[id].offset; }
  const double* val(ParamId id) const { return values_.data() + entries_[id].offset; }
  double* grad(ParamId id) { return grads_.data() + entries_[id].offset; }
  const double* grad(ParamId id) const { return grads_.data() + entries_[id].offset; }
  std::int64_t size(ParamId id) const { return entries_[id].size; }
  int rows(ParamId id) const { return entries_[id].rows; }
  int cols(ParamId id) const { return entries_[id].cols; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> grads() { return grads_; }
  std::span<const double> grads() const { return grads_; }

  void zero_grads();

  std::int64_t total_size() const { return static_cast<std::int64_t>(values_.size()); }

  // True for every arena slot belonging to a path that starts with one of
  // the prefixes.
  std::vector<std::uint8_t> mask_for_prefixes(const std::vector<std::string>& prefixes) const;

  // FNV-1a over the raw bytes of the selected slots.
  std::uint64_t checksum(const std::vector<std::uint8_t>& mask) const;
  std::uint64_t checksum_all() const;

  struct Entry {
    std::string path;
    std::vector<int> shape;
    std::int64_t offset = -1;
    std::int64_t size = 0;
    int rows = 0;
    int cols = 0;
    Init init = Init::Zero;
    int fan_in = 0;
  };
  const std::vector<Entry>& entries() const { return entries_; }
  bool has(const std::string& path) const { return index_.count(path) > 0; }
  ParamId id(const std::string& path) const;

  // Copies values in/out by path. Sizes must match exactly.
  void set_values(const std::string& path, std::span<const double> v);
  std::span<const double> get_values(const std::string& path) const;

 private:
  std::vector<Entry> entries_;
  std::map<std::string, ParamId> index_;
  std::vector<double> values_;
  std::vector<double> grads_;
  bool finalized_ = false;
};

}  // namespace bevfuse::num
