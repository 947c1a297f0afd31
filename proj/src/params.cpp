#include "textloc/params.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace textloc::ad {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  require(!has(name), "ParamStore::add: duplicate parameter '", name, "'");
  order_.push_back(name);
  return by_name_.emplace(name, std::move(t)).first->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = by_name_.find(name);
  require(it != by_name_.end(), "ParamStore: unknown parameter '", name, "'");
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = by_name_.find(name);
  require(it != by_name_.end(), "ParamStore: unknown parameter '", name, "'");
  return it->second;
}

Tensor& ParamStore::add_glorot(const std::string& name, int fan_in, int fan_out,
                               Rng& rng) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t({fan_in, fan_out});
  for (double& x : t.v) x = rng.uniform(-a, a);
  return add(name, std::move(t));
}

Tensor& ParamStore::add_zeros(const std::string& name, Shape shape) {
  return add(name, Tensor(std::move(shape), 0.0));
}

namespace {

constexpr char kMagic[4] = {'T', 'L', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t x) {
  os.write(reinterpret_cast<const char*>(&x), sizeof x);
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t x = 0;
  is.read(reinterpret_cast<char*>(&x), sizeof x);
  return x;
}

}  // namespace

void save_checkpoint(const ParamStore& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "save_checkpoint: cannot open '", path, "'");
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& name : params.names()) {
    const Tensor& t = params.at(name);
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) write_u32(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.v.data()),
             static_cast<std::streamsize>(t.v.size() * sizeof(double)));
  }
  require(os.good(), "save_checkpoint: write failed for '", path, "'");
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "load_checkpoint: cannot open '", path, "'");
  char magic[4];
  is.read(magic, 4);
  require(is.good() && std::memcmp(magic, kMagic, 4) == 0,
          "load_checkpoint: '", path, "' is not a checkpoint file");
  const std::uint32_t version = read_u32(is);
  require(version == kVersion, "load_checkpoint: unsupported version ", version);
  const std::uint32_t count = read_u32(is);
  ParamStore out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t rank = read_u32(is);
    Shape shape(rank);
    for (std::uint32_t r = 0; r < rank; ++r)
      shape[r] = static_cast<int>(read_u32(is));
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    require(is.good(), "load_checkpoint: truncated file '", path, "'");
    out.add(name, std::move(t));
  }
  return out;
}

Var BoundParams::operator()(const std::string& name) {
  auto it = vars_.find(name);
  if (it != vars_.end()) return it->second;
  Var v = tape_->leaf(store_->at(name));
  vars_.emplace(name, v);
  return v;
}

GradMap BoundParams::grads() const {
  GradMap out;
  for (const auto& [name, var] : vars_) out.emplace(name, tape_->grad(var));
  return out;
}

void accumulate_grads(GradMap& into, const GradMap& other) {
  for (const auto& [name, g] : other) {
    auto it = into.find(name);
    if (it == into.end()) {
      into.emplace(name, g);
    } else {
      require(it->second.same_shape(g), "accumulate_grads: shape mismatch for '",
              name, "'");
      for (int i = 0; i < g.numel(); ++i) it->second.at(i) += g.at(i);
    }
  }
}

void scale_grads(GradMap& g, double s) {
  for (auto& [name, t] : g)
    for (double& x : t.v) x *= s;
}

}  // namespace textloc::ad
