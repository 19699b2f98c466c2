#pragma once

// Named-array container:
//   "CVCK" | u32 version | u64 count |
//   per array: u32 name length, name, u32 dtype (1 = f32, 2 = f64),
//              u32 rank, i64 dims[rank], raw little-endian data.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "covert/layers.hpp"

namespace covert {

struct NamedArray {
  std::string name;
  std::vector<std::int64_t> shape;
  std::uint32_t dtype = 2;
  std::vector<double> data;  // widened on load
};

class Checkpoint {
 public:
  void add(const std::string& name, const Tensor& t);
  void add(const std::string& name, std::span<const double> values);
  void add_params(const ParamRefs& params);

  const NamedArray& get(const std::string& name) const;
  bool has(const std::string& name) const;
  /// Copies the stored array into `t`; shapes must agree.
  void load_into(const std::string& name, Tensor& t) const;
  void load_params(const ParamRefs& params) const;

  const std::vector<NamedArray>& arrays() const { return arrays_; }

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::vector<NamedArray> arrays_;
};

}  // namespace covert
