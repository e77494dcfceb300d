#include <algorithm>
#include <cstring>
#include <sstream>

#include "sopose/io.hpp"
#include "sopose/primitives.hpp"

namespace sopose {

Units parse_units(const std::string& s) {
  if (s == "m") return Units::kMeters;
  if (s == "mm") return Units::kMillimeters;
  throw Error(ErrorKind::kUsage, "units must be 'm' or 'mm', got '" + s + "'");
}

const char* to_string(Units u) { return u == Units::kMeters ? "m" : "mm"; }

namespace {

double unit_scale(Units u) { return u == Units::kMillimeters ? 1e-3 : 1.0; }

[[noreturn]] void parse_fail(const std::string& what) { throw Error(ErrorKind::kParse, what); }

void fan(const std::vector<int>& poly, std::vector<std::array<int, 3>>& faces) {
  for (size_t i = 1; i + 1 < poly.size(); ++i) faces.push_back({poly[0], poly[i], poly[i + 1]});
}

TriangleMesh finish(std::vector<Vec3> v, std::vector<std::array<int, 3>> f, Units units,
                    const std::string& source) {
  const double s = unit_scale(units);
  for (Vec3& p : v) p *= s;
  try {
    return make_mesh(std::move(v), std::move(f));
  } catch (const Error& e) {
    throw Error(ErrorKind::kParse, source + ": " + e.what());
  }
}

bool ends_with(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  std::string tail = s.substr(s.size() - suffix.size());
  std::transform(tail.begin(), tail.end(), tail.begin(), ::tolower);
  return tail == suffix;
}

}  // namespace

TriangleMesh parse_obj(const std::string& text, Units units) {
  std::vector<Vec3> v;
  std::vector<std::array<int, 3>> f;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z()))
        parse_fail("OBJ line " + std::to_string(lineno) + ": malformed vertex");
      v.push_back(p);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string tok;
      while (ls >> tok) {
        const std::string head = tok.substr(0, tok.find('/'));
        int idx = 0;
        try {
          size_t used = 0;
          idx = std::stoi(head, &used);
          if (used != head.size()) throw std::invalid_argument(head);
        } catch (const std::exception&) {
          parse_fail("OBJ line " + std::to_string(lineno) + ": bad face index '" + tok + "'");
        }
        if (idx == 0) parse_fail("OBJ line " + std::to_string(lineno) + ": face index 0");
        const int resolved = idx > 0 ? idx - 1 : static_cast<int>(v.size()) + idx;
        if (resolved < 0 || resolved >= static_cast<int>(v.size()))
          parse_fail("OBJ line " + std::to_string(lineno) + ": face index out of range");
        poly.push_back(resolved);
      }
      if (poly.size() < 3)
        parse_fail("OBJ line " + std::to_string(lineno) + ": face needs >= 3 vertices");
      fan(poly, f);
    }
  }
  return finish(std::move(v), std::move(f), units, "OBJ");
}

namespace {

enum class Scalar { kI8, kU8, kI16, kU16, kI32, kU32, kF32, kF64 };

Scalar scalar_from(const std::string& s, int lineno) {
  if (s == "char" || s == "int8") return Scalar::kI8;
  if (s == "uchar" || s == "uint8") return Scalar::kU8;
  if (s == "short" || s == "int16") return Scalar::kI16;
  if (s == "ushort" || s == "uint16") return Scalar::kU16;
  if (s == "int" || s == "int32") return Scalar::kI32;
  if (s == "uint" || s == "uint32") return Scalar::kU32;
  if (s == "float" || s == "float32") return Scalar::kF32;
  if (s == "double" || s == "float64") return Scalar::kF64;
  parse_fail("PLY header line " + std::to_string(lineno) + ": unknown type '" + s + "'");
}

size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::kI8: case Scalar::kU8: return 1;
    case Scalar::kI16: case Scalar::kU16: return 2;
    case Scalar::kI32: case Scalar::kU32: case Scalar::kF32: return 4;
    case Scalar::kF64: return 8;
  }
  return 0;
}

struct Property {
  std::string name;
  bool is_list = false;
  Scalar count_type = Scalar::kU8;
  Scalar type = Scalar::kF32;
};

struct Element {
  std::string name;
  size_t count = 0;
  std::vector<Property> props;
};

class BinaryReader {
 public:
  BinaryReader(std::span<const std::uint8_t> bytes, size_t offset, bool big_endian)
      : bytes_(bytes), pos_(offset), big_(big_endian) {}

  double read(Scalar s) {
    const size_t n = scalar_size(s);
    if (pos_ + n > bytes_.size())
      parse_fail("PLY byte offset " + std::to_string(pos_) + ": unexpected end of data");
    std::uint8_t buf[8];
    std::memcpy(buf, bytes_.data() + pos_, n);
    if (big_) std::reverse(buf, buf + n);
    pos_ += n;
    switch (s) {
      case Scalar::kI8: { std::int8_t v; std::memcpy(&v, buf, 1); return v; }
      case Scalar::kU8: { std::uint8_t v; std::memcpy(&v, buf, 1); return v; }
      case Scalar::kI16: { std::int16_t v; std::memcpy(&v, buf, 2); return v; }
      case Scalar::kU16: { std::uint16_t v; std::memcpy(&v, buf, 2); return v; }
      case Scalar::kI32: { std::int32_t v; std::memcpy(&v, buf, 4); return v; }
      case Scalar::kU32: { std::uint32_t v; std::memcpy(&v, buf, 4); return v; }
      case Scalar::kF32: { float v; std::memcpy(&v, buf, 4); return v; }
      case Scalar::kF64: { double v; std::memcpy(&v, buf, 8); return v; }
    }
    return 0.0;
  }
  size_t offset() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  size_t pos_;
  bool big_;
};

}  // namespace

TriangleMesh parse_ply(std::span<const std::uint8_t> bytes, Units units) {
  // Header
  size_t pos = 0;
  int lineno = 0;
  auto next_line = [&]() -> std::string {
    if (pos >= bytes.size()) parse_fail("PLY header: missing end_header");
    size_t end = pos;
    while (end < bytes.size() && bytes[end] != '\n') ++end;
    std::string line(reinterpret_cast<const char*>(bytes.data()) + pos, end - pos);
    pos = end < bytes.size() ? end + 1 : end;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  if (next_line() != "ply") parse_fail("PLY header line 1: missing 'ply' magic");
  std::string format;
  std::vector<Element> elements;
  for (;;) {
    const std::string line = next_line();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "end_header") break;
    if (kw == "format") {
      ls >> format;
    } else if (kw == "element") {
      Element e;
      long long count = -1;
      if (!(ls >> e.name >> count) || count < 0)
        parse_fail("PLY header line " + std::to_string(lineno) + ": malformed element");
      e.count = static_cast<size_t>(count);
      elements.push_back(e);
    } else if (kw == "property") {
      if (elements.empty())
        parse_fail("PLY header line " + std::to_string(lineno) + ": property before element");
      Property p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string ct, it;
        if (!(ls >> ct >> it >> p.name))
          parse_fail("PLY header line " + std::to_string(lineno) + ": malformed list property");
        p.is_list = true;
        p.count_type = scalar_from(ct, lineno);
        p.type = scalar_from(it, lineno);
      } else {
        p.type = scalar_from(type, lineno);
        if (!(ls >> p.name))
          parse_fail("PLY header line " + std::to_string(lineno) + ": malformed property");
      }
      elements.back().props.push_back(p);
    } else if (kw == "comment" || kw == "obj_info" || kw.empty()) {
      continue;
    } else {
      parse_fail("PLY header line " + std::to_string(lineno) + ": unknown keyword '" + kw + "'");
    }
  }
  const bool ascii = format == "ascii";
  const bool big = format == "binary_big_endian";
  if (!ascii && !big && format != "binary_little_endian")
    parse_fail("PLY header: unsupported format '" + format + "'");

  std::vector<Vec3> v;
  std::vector<std::array<int, 3>> f;

  auto handle = [&](const Element& e, const std::vector<std::vector<double>>& values,
                    const std::string& where) {
    if (e.name == "vertex") {
      Vec3 p = Vec3::Zero();
      int found = 0;
      for (size_t k = 0; k < e.props.size(); ++k) {
        const std::string& n = e.props[k].name;
        if (e.props[k].is_list) continue;
        if (n == "x") { p.x() = values[k][0]; found |= 1; }
        if (n == "y") { p.y() = values[k][0]; found |= 2; }
        if (n == "z") { p.z() = values[k][0]; found |= 4; }
      }
      if (found != 7) parse_fail(where + ": vertex lacks x/y/z");
      v.push_back(p);
    } else if (e.name == "face") {
      for (size_t k = 0; k < e.props.size(); ++k) {
        const std::string& n = e.props[k].name;
        if (!e.props[k].is_list || (n != "vertex_indices" && n != "vertex_index")) continue;
        std::vector<int> poly;
        for (double d : values[k]) poly.push_back(static_cast<int>(d));
        if (poly.size() < 3) parse_fail(where + ": face needs >= 3 vertices");
        fan(poly, f);
      }
    }
  };

  if (ascii) {
    std::string body(reinterpret_cast<const char*>(bytes.data()) + pos, bytes.size() - pos);
    std::istringstream in(body);
    for (const Element& e : elements) {
      for (size_t i = 0; i < e.count; ++i) {
        std::string line;
        do {
          if (!std::getline(in, line))
            parse_fail("PLY line " + std::to_string(lineno + 1) + ": unexpected end of file");
          ++lineno;
        } while (line.find_first_not_of(" \t\r") == std::string::npos);
        std::istringstream ls(line);
        const std::string where = "PLY line " + std::to_string(lineno);
        std::vector<std::vector<double>> values;
        for (const Property& p : e.props) {
          std::vector<double> vals;
          size_t n = 1;
          if (p.is_list) {
            double c;
            if (!(ls >> c) || c < 0) parse_fail(where + ": bad list count");
            n = static_cast<size_t>(c);
          }
          for (size_t j = 0; j < n; ++j) {
            double x;
            if (!(ls >> x)) parse_fail(where + ": expected value for '" + p.name + "'");
            vals.push_back(x);
          }
          values.push_back(std::move(vals));
        }
        handle(e, values, where);
      }
    }
  } else {
    BinaryReader rd(bytes, pos, big);
    for (const Element& e : elements) {
      for (size_t i = 0; i < e.count; ++i) {
        const std::string where = "PLY byte offset " + std::to_string(rd.offset());
        std::vector<std::vector<double>> values;
        for (const Property& p : e.props) {
          std::vector<double> vals;
          size_t n = 1;
          if (p.is_list) {
            const double c = rd.read(p.count_type);
            if (c < 0) parse_fail(where + ": negative list count");
            n = static_cast<size_t>(c);
          }
          for (size_t j = 0; j < n; ++j) vals.push_back(rd.read(p.type));
          values.push_back(std::move(vals));
        }
        handle(e, values, where);
      }
    }
  }
  for (const auto& tri : f)
    for (int idx : tri)
      if (idx < 0 || idx >= static_cast<int>(v.size()))
        parse_fail("PLY: face index " + std::to_string(idx) + " out of range");
  return finish(std::move(v), std::move(f), units, "PLY");
}

TriangleMesh load_mesh(const std::filesystem::path& path, Units units) {
  const std::string s = path.string();
  if (is_builtin_mesh_name(s)) {
    TriangleMesh m = builtin_mesh(s);
    return units == Units::kMeters ? m : finish(m.vertices, m.faces, units, s);
  }
  if (!std::filesystem::exists(path))
    throw Error(ErrorKind::kIo, "mesh file not found: " + s);
  if (ends_with(s, ".obj")) return parse_obj(read_file_text(path), units);
  if (ends_with(s, ".ply")) {
    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    return parse_ply(bytes, units);
  }
  throw Error(ErrorKind::kUsage, "unsupported mesh extension: " + s);
}

std::string format_obj(const TriangleMesh& mesh) {
  std::ostringstream out;
  out.precision(17);
  for (const Vec3& p : mesh.vertices) out << "v " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  for (const auto& f : mesh.faces)
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  return out.str();
}

std::vector<std::uint8_t> format_ply(const TriangleMesh& mesh, bool binary) {
  std::ostringstream out;
  out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
      << "element vertex " << mesh.vertices.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n"
      << "element face " << mesh.faces.size() << "\n"
      << "property list uchar int vertex_indices\nend_header\n";
  std::string text = out.str();
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  if (!binary) {
    std::ostringstream body;
    body.precision(17);
    for (const Vec3& p : mesh.vertices) body << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    for (const auto& f : mesh.faces) body << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    const std::string b = body.str();
    bytes.insert(bytes.end(), b.begin(), b.end());
    return bytes;
  }
  auto put = [&](const void* p, size_t n) {
    const auto* c = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), c, c + n);  // host is little-endian
  };
  for (const Vec3& p : mesh.vertices)
    for (int i = 0; i < 3; ++i) put(&p[i], sizeof(double));
  for (const auto& f : mesh.faces) {
    const std::uint8_t n = 3;
    put(&n, 1);
    for (int idx : f) {
      const std::int32_t v = idx;
      put(&v, sizeof v);
    }
  }
  return bytes;
}

}  // namespace sopose
