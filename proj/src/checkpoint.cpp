#include "binpick/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "binpick/errors.hpp"

namespace binpick {

namespace {

constexpr char kMagic[4] = {'B', 'P', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw DataError("truncated checkpoint: " + path);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<Param<float>*>& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write checkpoint: " + path);
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const Param<float>* p : params) {
    write_u32(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_u32(os, static_cast<std::uint32_t>(p->value.rank()));
    for (int i = 0; i < p->value.rank(); ++i)
      write_u32(os, static_cast<std::uint32_t>(p->value.dim(i)));
    static_assert(sizeof(float) == 4);
    os.write(reinterpret_cast<const char*>(p->value.data()),
             static_cast<std::streamsize>(p->value.size() * sizeof(float)));
  }
  if (!os) throw DataError("write failed: " + path);
}

std::map<std::string, TensorF> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("bad checkpoint magic: " + path);
  const std::uint32_t version = read_u32(is, path);
  if (version != kVersion)
    throw DataError("unsupported checkpoint version " +
                    std::to_string(version) + ": " + path);
  const std::uint32_t count = read_u32(is, path);
  std::map<std::string, TensorF> store;
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::uint32_t name_len = read_u32(is, path);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw DataError("truncated checkpoint: " + path);
    const std::uint32_t rank = read_u32(is, path);
    if (rank > 8) throw DataError("implausible tensor rank in " + path);
    std::vector<int> shape(rank);
    std::size_t total = 1;
    for (auto& d : shape) {
      d = static_cast<int>(read_u32(is, path));
      total *= static_cast<std::size_t>(d);
    }
    TensorF t(shape);
    if (!is.read(reinterpret_cast<char*>(t.data()),
                 static_cast<std::streamsize>(total * sizeof(float))))
      throw DataError("truncated checkpoint: " + path);
    if (!store.emplace(name, std::move(t)).second)
      throw DataError("duplicate tensor '" + name + "' in " + path);
  }
  return store;
}

void assign_params(const std::map<std::string, TensorF>& store,
                   const std::vector<Param<float>*>& params) {
  for (Param<float>* p : params) {
    auto it = store.find(p->name);
    if (it == store.end())
      throw ContractViolation("checkpoint missing tensor '" + p->name + "'");
    if (it->second.shape() != p->value.shape())
      throw ContractViolation("shape mismatch for '" + p->name + "': stored " +
                              it->second.shape_str() + " vs declared " +
                              p->value.shape_str());
    p->value = it->second;
  }
}

}  // namespace binpick
