#include "covert/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

namespace covert {

namespace {

constexpr char kMagic[4] = {'C', 'V', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& o, T v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_value(std::istream& i) {
  T v{};
  if (!i.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void Checkpoint::add(const std::string& name, const Tensor& t) {
  NamedArray a;
  a.name = name;
  const Shape& s = t.shape();
  a.shape = {s.n, s.c, s.h, s.w};
  a.dtype = sizeof(Real) == 4 ? 1 : 2;
  a.data.assign(t.vec().begin(), t.vec().end());
  arrays_.push_back(std::move(a));
}

void Checkpoint::add(const std::string& name, std::span<const double> values) {
  NamedArray a;
  a.name = name;
  a.shape = {static_cast<std::int64_t>(values.size())};
  a.dtype = 2;
  a.data.assign(values.begin(), values.end());
  arrays_.push_back(std::move(a));
}

void Checkpoint::add_params(const ParamRefs& params) {
  for (const Param* p : params) add(p->name, p->value);
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& a : arrays_)
    if (a.name == name) return true;
  return false;
}

const NamedArray& Checkpoint::get(const std::string& name) const {
  for (const auto& a : arrays_)
    if (a.name == name) return a;
  throw std::out_of_range("checkpoint: no array named '" + name + "'");
}

void Checkpoint::load_into(const std::string& name, Tensor& t) const {
  const NamedArray& a = get(name);
  if (a.data.size() != t.size())
    throw ConfigError("checkpoint: size mismatch for '" + name + "'");
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<Real>(a.data[i]);
}

void Checkpoint::load_params(const ParamRefs& params) const {
  for (Param* p : params) load_into(p->name, p->value);
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, arrays_.size());
  for (const auto& a : arrays_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    put<std::uint32_t>(out, a.dtype);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) put<std::int64_t>(out, d);
    if (a.dtype == 1) {
      for (double v : a.data) put<float>(out, static_cast<float>(v));
    } else {
      for (double v : a.data) put<double>(out, v);
    }
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic))
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  if (read_value<std::uint32_t>(in) != kVersion)
    throw std::runtime_error("checkpoint: unsupported version");
  Checkpoint ck;
  const auto count = read_value<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name.resize(read_value<std::uint32_t>(in));
    in.read(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    a.dtype = read_value<std::uint32_t>(in);
    if (a.dtype != 1 && a.dtype != 2) throw std::runtime_error("checkpoint: unknown dtype");
    const auto rank = read_value<std::uint32_t>(in);
    std::int64_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      a.shape.push_back(read_value<std::int64_t>(in));
      if (a.shape.back() < 0) throw std::runtime_error("checkpoint: negative dimension");
      n *= a.shape.back();
    }
    a.data.resize(static_cast<std::size_t>(n));
    for (auto& v : a.data) v = a.dtype == 1 ? read_value<float>(in) : read_value<double>(in);
    ck.arrays_.push_back(std::move(a));
  }
  return ck;
}

}  // namespace covert
