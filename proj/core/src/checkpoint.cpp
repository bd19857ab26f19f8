#include "msfs/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "msfs/common.hpp"

namespace msfs {

namespace {

constexpr char kMagic[4] = {'M', 'S', 'F', 'S'};

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& what) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (in.gcount() != sizeof(T)) throw FormatError("checkpoint truncated while reading " + what);
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const std::string& what) {
  const auto len = read_pod<std::uint32_t>(in, what + " length");
  if (len > (1u << 24)) throw FormatError("checkpoint: implausible " + what + " length");
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (static_cast<std::uint32_t>(in.gcount()) != len)
    throw FormatError("checkpoint truncated while reading " + what);
  return s;
}

void write_floats(std::ostream& out, const std::vector<float>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void read_floats(std::istream& in, std::vector<float>& v, const std::string& what) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != v.size() * sizeof(float))
    throw FormatError("checkpoint truncated while reading " + what);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out.write(kMagic, 4);
  write_pod<std::uint32_t>(out, Checkpoint::kVersion);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params) {
    write_string(out, name);
    write_pod<std::int32_t>(out, t->shape.n);
    write_pod<std::int32_t>(out, t->shape.c);
    write_pod<std::int32_t>(out, t->shape.h);
    write_pod<std::int32_t>(out, t->shape.w);
    write_floats(out, t->data);
  }
  write_pod<std::uint8_t>(out, ckpt.has_optimizer ? 1 : 0);
  if (ckpt.has_optimizer) {
    if (ckpt.opt_m.size() != ckpt.params.size() || ckpt.opt_v.size() != ckpt.params.size())
      throw ContractError("save_checkpoint: optimizer state not aligned with params");
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
      write_floats(out, ckpt.opt_m[i]);
      write_floats(out, ckpt.opt_v[i]);
    }
    write_pod<std::uint64_t>(out, ckpt.opt_step);
  }
  write_pod<std::uint32_t>(out, ckpt.epoch);
  write_string(out, ckpt.config_text);
  if (!out) throw FormatError("write error on " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path + ": bad magic (not a checkpoint)");
  const auto version = read_pod<std::uint32_t>(in, "version");
  if (version != Checkpoint::kVersion)
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  const auto count = read_pod<std::uint32_t>(in, "entry count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = read_string(in, "parameter name");
    Shape s;
    s.n = read_pod<std::int32_t>(in, "shape");
    s.c = read_pod<std::int32_t>(in, "shape");
    s.h = read_pod<std::int32_t>(in, "shape");
    s.w = read_pod<std::int32_t>(in, "shape");
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1 || s.numel() > (1ll << 31))
      throw FormatError(path + ": implausible shape for " + name);
    auto t = make_tensor<float>(s, true);
    read_floats(in, t->data, name);
    ckpt.params.emplace_back(name, t);
  }
  ckpt.has_optimizer = read_pod<std::uint8_t>(in, "optimizer flag") != 0;
  if (ckpt.has_optimizer) {
    for (const auto& [name, t] : ckpt.params) {
      std::vector<float> m(t->data.size()), v(t->data.size());
      read_floats(in, m, "optimizer m");
      read_floats(in, v, "optimizer v");
      ckpt.opt_m.push_back(std::move(m));
      ckpt.opt_v.push_back(std::move(v));
    }
    ckpt.opt_step = read_pod<std::uint64_t>(in, "optimizer step");
  }
  ckpt.epoch = read_pod<std::uint32_t>(in, "epoch");
  ckpt.config_text = read_string(in, "config");
  return ckpt;
}

void restore_params(const Checkpoint& ckpt, const ParamList<float>& params) {
  std::map<std::string, Tensor<float>> by_name;
  for (const auto& [name, t] : ckpt.params) by_name[name] = t;
  if (by_name.size() != params.size())
    throw ContractError("restore_params: checkpoint has " + std::to_string(by_name.size()) +
                        " entries, model expects " + std::to_string(params.size()));
  for (const auto& [name, t] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ContractError("restore_params: missing parameter " + name);
    if (it->second->shape != t->shape)
      throw ContractError("restore_params: shape mismatch for " + name);
    t->data = it->second->data;
  }
}

}  // namespace msfs
