#pragma once

// Minimal PLY reader/writer for point clouds.
//
// Vertex properties understood: x y z, nx ny nz, and the integer labels
// `semantic` and `instance`. Colors and any other properties or elements
// (faces, ...) are parsed and skipped. Formats: ascii, binary_little_endian
// and binary_big_endian.

#include "rescan/core/point_cloud.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace rescan::ply {

using Rgb = std::array<std::uint8_t, 3>;

namespace detail {

enum class Format { Ascii, BinaryLe, BinaryBe };

enum class Scalar { I8, U8, I16, U16, I32, U32, F32, F64 };

inline std::optional<Scalar> parse_scalar(const std::string& t) {
  if (t == "char" || t == "int8") return Scalar::I8;
  if (t == "uchar" || t == "uint8") return Scalar::U8;
  if (t == "short" || t == "int16") return Scalar::I16;
  if (t == "ushort" || t == "uint16") return Scalar::U16;
  if (t == "int" || t == "int32") return Scalar::I32;
  if (t == "uint" || t == "uint32") return Scalar::U32;
  if (t == "float" || t == "float32") return Scalar::F32;
  if (t == "double" || t == "float64") return Scalar::F64;
  return std::nullopt;
}

inline std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::I8:
    case Scalar::U8:
      return 1;
    case Scalar::I16:
    case Scalar::U16:
      return 2;
    case Scalar::I32:
    case Scalar::U32:
    case Scalar::F32:
      return 4;
    case Scalar::F64:
      return 8;
  }
  return 0;
}

struct Property {
  std::string name;
  Scalar type = Scalar::F32;
  bool is_list = false;
  Scalar count_type = Scalar::U8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> props;
};

class Reader {
 public:
  Reader(std::istream& in, Format fmt) : in_(in), fmt_(fmt) {}

  double read(Scalar s) {
    if (fmt_ == Format::Ascii) {
      std::string tok;
      if (!(in_ >> tok)) throw IoError("parse error: unexpected end of PLY data");
      try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw IoError("parse error: bad PLY value '" + tok + "'");
        return v;
      } catch (const std::logic_error&) {
        throw IoError("parse error: bad PLY value '" + tok + "'");
      }
    }
    unsigned char buf[8];
    const std::size_t n = scalar_size(s);
    if (!in_.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n))) {
      throw IoError("parse error: truncated binary PLY");
    }
    const bool swap = (fmt_ == Format::BinaryBe) == (std::endian::native == std::endian::little);
    if (swap) std::reverse(buf, buf + n);
    switch (s) {
      case Scalar::I8: return static_cast<double>(static_cast<std::int8_t>(buf[0]));
      case Scalar::U8: return static_cast<double>(buf[0]);
      case Scalar::I16: return static_cast<double>(load<std::int16_t>(buf));
      case Scalar::U16: return static_cast<double>(load<std::uint16_t>(buf));
      case Scalar::I32: return static_cast<double>(load<std::int32_t>(buf));
      case Scalar::U32: return static_cast<double>(load<std::uint32_t>(buf));
      case Scalar::F32: return static_cast<double>(load<float>(buf));
      case Scalar::F64: return load<double>(buf);
    }
    return 0.0;
  }

 private:
  template <class T>
  static T load(const unsigned char* b) {
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }

  std::istream& in_;
  Format fmt_;
};

}  // namespace detail

inline PointCloud read(std::istream& in) {
  using namespace detail;
  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply") {
    throw IoError("parse error: missing 'ply' magic");
  }
  std::optional<Format> fmt;
  std::vector<Element> elements;
  bool header_done = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key.empty() || key == "comment" || key == "obj_info") continue;
    if (key == "format") {
      std::string f;
      ls >> f;
      if (f == "ascii") fmt = Format::Ascii;
      else if (f == "binary_little_endian") fmt = Format::BinaryLe;
      else if (f == "binary_big_endian") fmt = Format::BinaryBe;
      else throw IoError("parse error: unknown PLY format '" + f + "'");
    } else if (key == "element") {
      Element e;
      long long count = -1;
      ls >> e.name >> count;
      if (count < 0) throw IoError("parse error: bad element count");
      e.count = static_cast<std::size_t>(count);
      elements.push_back(std::move(e));
    } else if (key == "property") {
      if (elements.empty()) throw IoError("parse error: property before element");
      Property p;
      std::string t;
      ls >> t;
      if (t == "list") {
        std::string ct, it;
        ls >> ct >> it >> p.name;
        auto c = parse_scalar(ct);
        auto v = parse_scalar(it);
        if (!c || !v) throw IoError("parse error: bad list property types");
        p.is_list = true;
        p.count_type = *c;
        p.type = *v;
      } else {
        auto s = parse_scalar(t);
        if (!s) throw IoError("parse error: unknown property type '" + t + "'");
        p.type = *s;
        ls >> p.name;
      }
      elements.back().props.push_back(std::move(p));
    } else if (key == "end_header") {
      header_done = true;
      break;
    } else {
      throw IoError("parse error: unexpected header line '" + line + "'");
    }
  }
  if (!header_done || !fmt) throw IoError("parse error: incomplete PLY header");

  PointCloud cloud;
  Reader reader(in, *fmt);
  bool seen_vertex = false;
  for (const Element& e : elements) {
    if (e.name != "vertex") {
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const Property& p : e.props) {
          if (p.is_list) {
            const auto n = static_cast<long long>(reader.read(p.count_type));
            for (long long k = 0; k < n; ++k) reader.read(p.type);
          } else {
            reader.read(p.type);
          }
        }
      }
      continue;
    }
    seen_vertex = true;
    int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1, isem = -1, iinst = -1;
    for (std::size_t k = 0; k < e.props.size(); ++k) {
      const std::string& n = e.props[k].name;
      const int kk = static_cast<int>(k);
      if (n == "x") ix = kk;
      else if (n == "y") iy = kk;
      else if (n == "z") iz = kk;
      else if (n == "nx") inx = kk;
      else if (n == "ny") iny = kk;
      else if (n == "nz") inz = kk;
      else if (n == "semantic") isem = kk;
      else if (n == "instance") iinst = kk;
    }
    if (ix < 0 || iy < 0 || iz < 0) throw IoError("parse error: vertex lacks x/y/z");
    const bool with_normals = inx >= 0 && iny >= 0 && inz >= 0;
    const bool with_labels = isem >= 0 && iinst >= 0;
    cloud.points.resize(e.count);
    if (with_normals) cloud.normals.resize(e.count);
    if (with_labels) {
      cloud.semantic.resize(e.count);
      cloud.instance.resize(e.count);
    }
    std::vector<double> row(e.props.size());
    for (std::size_t i = 0; i < e.count; ++i) {
      for (std::size_t k = 0; k < e.props.size(); ++k) {
        const Property& p = e.props[k];
        if (p.is_list) {
          const auto n = static_cast<long long>(reader.read(p.count_type));
          for (long long j = 0; j < n; ++j) reader.read(p.type);
          row[k] = 0.0;
        } else {
          row[k] = reader.read(p.type);
        }
      }
      cloud.points[i] = {row[ix], row[iy], row[iz]};
      if (with_normals) cloud.normals[i] = {row[inx], row[iny], row[inz]};
      if (with_labels) {
        cloud.semantic[i] = static_cast<int>(row[isem]);
        cloud.instance[i] = static_cast<int>(row[iinst]);
      }
    }
  }
  if (!seen_vertex) throw IoError("parse error: PLY has no vertex element");
  for (const Vec3& p : cloud.points) {
    if (!p.allFinite()) throw IoError("parse error: non-finite vertex position");
  }
  // Normalize stored normals; drop them entirely if any is unusable.
  for (Vec3& n : cloud.normals) {
    const double len = n.norm();
    if (!(len > 1e-12) || !std::isfinite(len)) {
      cloud.normals.clear();
      break;
    }
    if (std::abs(len - 1.0) > 1e-9) n /= len;
  }
  return cloud;
}

inline PointCloud read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return read(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

struct WriteOptions {
  bool binary = true;
  bool with_normals = true;
  bool with_labels = true;
  /// Per-vertex colors; written as red/green/blue when non-empty.
  std::vector<Rgb> colors;
};

inline void write(std::ostream& out, const PointCloud& cloud, const WriteOptions& opt = {}) {
  const bool normals = opt.with_normals && cloud.has_normals();
  const bool labels = opt.with_labels && cloud.has_labels();
  const bool colors = !opt.colors.empty();
  if (colors && opt.colors.size() != cloud.size()) throw Error("ply: color count mismatch");

  out << "ply\n"
      << "format " << (opt.binary ? "binary_little_endian" : "ascii") << " 1.0\n"
      << "element vertex " << cloud.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n";
  if (normals) out << "property double nx\nproperty double ny\nproperty double nz\n";
  if (labels) out << "property int semantic\nproperty int instance\n";
  if (colors) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";

  auto put = [&](auto v) {
    static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  if (!opt.binary) out.precision(17);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    if (opt.binary) {
      put(p.x());
      put(p.y());
      put(p.z());
      if (normals) {
        put(cloud.normals[i].x());
        put(cloud.normals[i].y());
        put(cloud.normals[i].z());
      }
      if (labels) {
        put(static_cast<std::int32_t>(cloud.semantic[i]));
        put(static_cast<std::int32_t>(cloud.instance[i]));
      }
      if (colors) {
        for (std::uint8_t c : opt.colors[i]) put(c);
      }
    } else {
      out << p.x() << ' ' << p.y() << ' ' << p.z();
      if (normals) {
        out << ' ' << cloud.normals[i].x() << ' ' << cloud.normals[i].y() << ' '
            << cloud.normals[i].z();
      }
      if (labels) out << ' ' << cloud.semantic[i] << ' ' << cloud.instance[i];
      if (colors) {
        for (std::uint8_t c : opt.colors[i]) out << ' ' << static_cast<int>(c);
      }
      out << '\n';
    }
  }
}

inline void write(const std::filesystem::path& path, const PointCloud& cloud,
                  const WriteOptions& opt = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write(out, cloud, opt);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace rescan::ply
