#include "mklab/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace mklab {

namespace {

constexpr char kMagic[16] = {'M', 'K', 'F', '1', '\0', 'v', '1', '\0',
                             '\0', '\0', '\0', '\0', '\0', '\0', '\0', '\0'};

static_assert(std::endian::native == std::endian::little,
              "MKF1 writer assumes a little-endian host");

void put_i64(std::ostream& os, std::int64_t v) {
  os.write(reinterpret_cast<const char*>(&v), 8);
}

std::int64_t get_i64(std::istream& is) {
  std::int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

}  // namespace

void mkf_write(const std::string& path, const PeriodicField& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("mkf_write: cannot open " + path);
  os.write(kMagic, 16);
  put_i64(os, f.grid.n);
  put_i64(os, static_cast<std::int64_t>(f.rank));
  put_i64(os, f.ncomp());
  for (const auto& a : f.c)
    os.write(reinterpret_cast<const char*>(a.data()), a.size() * 8);
  if (!os) throw ConfigError("mkf_write: write failed on " + path);
}

PeriodicField mkf_read(const std::string& path, double dealias_fraction) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("mkf_read: cannot open " + path);
  char magic[16];
  is.read(magic, 16);
  if (!is || std::memcmp(magic, kMagic, 5) != 0)
    throw ConfigError("mkf_read: bad magic in " + path);
  const std::int64_t n = get_i64(is);
  const std::int64_t rank_code = get_i64(is);
  const std::int64_t ncomp = get_i64(is);
  if (rank_code < 0 || rank_code > 2) throw ConfigError("mkf_read: bad rank code");
  const Rank rank = static_cast<Rank>(rank_code);
  if (ncomp != component_count(rank)) throw ConfigError("mkf_read: component count mismatch");
  PeriodicField f(GridSpec(int(n), dealias_fraction), rank);
  for (auto& a : f.c) {
    is.read(reinterpret_cast<char*>(a.data()), a.size() * 8);
    if (!is) throw ConfigError("mkf_read: truncated file " + path);
  }
  return f;
}

}  // namespace mklab
