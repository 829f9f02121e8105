#pragma once

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "skslab/grid.hpp"
#include "skslab/moments.hpp"

namespace sks {

using json = nlohmann::json;

// FNV-1a 64-bit over raw bytes, hex encoded; the checksum recorded in grid
// dump sidecars
inline std::string fnv1a_hex(const void* data, size_t nbytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < nbytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return std::string(buf);
}

// shortest round-trip decimal for doubles in text outputs
inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

// Moment series CSV: t, mass, Cx, Cy, V, L2, S_neg, status
inline void write_moments_csv(const std::string& path, const MomentSeries& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "t,mass,Cx,Cy,V,L2,S_neg,status\n";
  for (const auto& row : series.rows) {
    out << fmt_double(row.t) << ',' << fmt_double(row.m.mass) << ',' << fmt_double(row.m.center.x)
        << ',' << fmt_double(row.m.center.y) << ',' << fmt_double(row.m.v) << ','
        << fmt_double(row.m.l2) << ',' << fmt_double(row.m.s_neg) << ',' << to_string(row.status)
        << '\n';
  }
}

// Grid dump: little-endian float64 row-major N x N plus a JSON sidecar
// {N, L, time, field_name, checksum}. Paths get ".f64" and ".json" suffixes.
inline void write_grid_dump(const std::string& path_base, const GridField& f, double time,
                            const std::string& field_name) {
  static_assert(sizeof(double) == 8);
  const std::string bin_path = path_base + ".f64";
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open for writing: " + bin_path);
  bin.write(reinterpret_cast<const char*>(f.data()),
            static_cast<std::streamsize>(f.size() * sizeof(double)));
  bin.close();

  json side;
  side["N"] = f.n();
  side["L"] = f.box();
  side["time"] = time;
  side["field_name"] = field_name;
  side["checksum"] = fnv1a_hex(f.data(), f.size() * sizeof(double));
  std::ofstream js(path_base + ".json", std::ios::binary);
  js << side.dump(2) << '\n';
}

inline GridField read_grid_dump(const std::string& path_base) {
  std::ifstream js(path_base + ".json");
  if (!js) throw std::runtime_error("cannot open sidecar: " + path_base + ".json");
  json side = json::parse(js);
  const int n = side.at("N").get<int>();
  const double box = side.at("L").get<double>();
  GridField f(n, box);
  std::ifstream bin(path_base + ".f64", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open dump: " + path_base + ".f64");
  bin.read(reinterpret_cast<char*>(f.data()),
           static_cast<std::streamsize>(f.size() * sizeof(double)));
  if (!bin) throw std::runtime_error("short read: " + path_base + ".f64");
  const std::string sum = fnv1a_hex(f.data(), f.size() * sizeof(double));
  if (sum != side.at("checksum").get<std::string>())
    throw std::runtime_error("checksum mismatch: " + path_base);
  return f;
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace sks
