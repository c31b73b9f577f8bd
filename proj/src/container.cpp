#include "tsf/container.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tsf::io {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'F', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_str(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& in) {
  const std::uint64_t n = read_u64(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

}  // namespace

const nn::Tensor& Container::tensor(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::runtime_error("Container: missing tensor '" + name + "'");
  return it->second;
}

const std::string& Container::str(const std::string& name) const {
  auto it = strings_.find(name);
  if (it == strings_.end()) throw std::runtime_error("Container: missing string '" + name + "'");
  return it->second;
}

void Container::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("Container: cannot open " + path + " for writing");
  out.write(kMagic, 4);
  write_u64(out, tensors_.size());
  for (const auto& [name, t] : tensors_) {
    write_str(out, name);
    write_u64(out, t.shape.size());
    for (auto d : t.shape) write_u64(out, d);
    static_assert(sizeof(double) == 8);
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * 8));
  }
  write_u64(out, strings_.size());
  for (const auto& [name, s] : strings_) {
    write_str(out, name);
    write_str(out, s);
  }
  if (!out) throw std::runtime_error("Container: write failed for " + path);
}

Container Container::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("Container: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("Container: bad magic in " + path);
  Container c;
  const std::uint64_t nt = read_u64(in);
  for (std::uint64_t i = 0; i < nt; ++i) {
    std::string name = read_str(in);
    const std::uint64_t nd = read_u64(in);
    std::vector<std::size_t> shape(nd);
    for (auto& d : shape) d = read_u64(in);
    nn::Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * 8));
    c.tensors_[name] = std::move(t);
  }
  const std::uint64_t ns = read_u64(in);
  for (std::uint64_t i = 0; i < ns; ++i) {
    std::string name = read_str(in);
    c.strings_[name] = read_str(in);
  }
  if (!in) throw std::runtime_error("Container: truncated file " + path);
  return c;
}

}  // namespace tsf::io
