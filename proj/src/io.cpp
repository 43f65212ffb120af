#include "kernelsurf/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "kernelsurf/error.hpp"

namespace kernelsurf {
namespace {

static_assert(std::endian::native == std::endian::little, "binary ply I/O assumes a little-endian host");

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

std::ifstream open_input(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::out | std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  return out;
}

// Parses every whitespace separated number of a line; false on junk.
bool parse_numbers(std::string_view line, std::vector<double>& out) {
  out.clear();
  const char* p = line.data();
  const char* end = p + line.size();
  while (p < end) {
    while (p < end && std::isspace(static_cast<unsigned char>(*p))) ++p;
    if (p == end) break;
    double v = 0.0;
    // from_chars rejects a leading '+'.
    if (*p == '+') ++p;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc() || (next < end && !std::isspace(static_cast<unsigned char>(*next)))) return false;
    out.push_back(v);
    p = next;
  }
  return true;
}

void normalize_normals(std::vector<Vec3>& normals, const std::string& source) {
  for (std::size_t i = 0; i < normals.size(); ++i) {
    const double len = normals[i].norm();
    if (!(len > 0.0) || !std::isfinite(len)) {
      throw Error(ErrorCode::ParseError, source + ": zero or non-finite normal at record " + std::to_string(i));
    }
    // Leave already-unit normals untouched so binary round trips are exact.
    if (std::abs(len - 1.0) > 1e-12) normals[i] /= len;
  }
}

OrientedPointCloud load_xyz(const std::filesystem::path& path) {
  auto in = open_input(path);
  OrientedPointCloud cloud;
  std::string line;
  std::vector<double> values;
  std::size_t line_no = 0;
  std::size_t columns = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    if (!parse_numbers(line, values) || (values.size() != 3 && values.size() != 6)) {
      throw Error(ErrorCode::ParseError, path.string() + ": malformed record at line " + std::to_string(line_no));
    }
    if (columns == 0) columns = values.size();
    if (values.size() != columns) {
      throw Error(ErrorCode::ParseError,
                  path.string() + ": inconsistent column count at line " + std::to_string(line_no));
    }
    const Vec3 p(values[0], values[1], values[2]);
    if (!p.allFinite()) {
      throw Error(ErrorCode::ParseError, path.string() + ": non-finite position at line " + std::to_string(line_no));
    }
    cloud.positions.push_back(p);
    if (columns == 6) cloud.normals.emplace_back(values[3], values[4], values[5]);
  }
  if (cloud.positions.empty()) throw Error(ErrorCode::EmptyInput, path.string() + ": no points");
  normalize_normals(cloud.normals, path.string());
  return cloud;
}

// ---------------------------------------------------------------------------
// PLY

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

PlyType parse_ply_type(const std::string& name) {
  if (name == "char" || name == "int8") return PlyType::i8;
  if (name == "uchar" || name == "uint8") return PlyType::u8;
  if (name == "short" || name == "int16") return PlyType::i16;
  if (name == "ushort" || name == "uint16") return PlyType::u16;
  if (name == "int" || name == "int32") return PlyType::i32;
  if (name == "uint" || name == "uint32") return PlyType::u32;
  if (name == "float" || name == "float32") return PlyType::f32;
  if (name == "double" || name == "float64") return PlyType::f64;
  throw Error(ErrorCode::ParseError, "unknown ply property type '" + name + "'");
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::f32;
  bool is_list = false;
  PlyType count_type = PlyType::u8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;

  int find(const std::string& prop) const {
    for (std::size_t i = 0; i < properties.size(); ++i) {
      if (properties[i].name == prop) return static_cast<int>(i);
    }
    return -1;
  }
};

struct PlyHeader {
  bool binary = false;
  std::vector<PlyElement> elements;
};

PlyHeader read_ply_header(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply") {
    throw Error(ErrorCode::ParseError, source + ": missing ply magic");
  }
  PlyHeader header;
  bool have_format = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string keyword;
    ss >> keyword;
    if (keyword == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt == "ascii") {
        header.binary = false;
      } else if (fmt == "binary_little_endian") {
        header.binary = true;
      } else {
        throw Error(ErrorCode::ParseError, source + ": unsupported ply format " + fmt);
      }
      have_format = true;
    } else if (keyword == "element") {
      PlyElement e;
      ss >> e.name >> e.count;
      if (!ss) throw Error(ErrorCode::ParseError, source + ": malformed element line");
      header.elements.push_back(std::move(e));
    } else if (keyword == "property") {
      if (header.elements.empty()) throw Error(ErrorCode::ParseError, source + ": property before element");
      PlyProperty p;
      std::string type;
      ss >> type;
      if (type == "list") {
        std::string count_type, item_type;
        ss >> count_type >> item_type >> p.name;
        p.is_list = true;
        p.count_type = parse_ply_type(count_type);
        p.type = parse_ply_type(item_type);
      } else {
        p.type = parse_ply_type(type);
        ss >> p.name;
      }
      header.elements.back().properties.push_back(p);
    } else if (keyword == "end_header") {
      if (!have_format) throw Error(ErrorCode::ParseError, source + ": missing format line");
      return header;
    }
    // comment / obj_info lines are ignored
  }
  throw Error(ErrorCode::ParseError, source + ": truncated ply header");
}

template <typename T>
T read_raw(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

double read_binary_value(std::istream& in, PlyType t) {
  switch (t) {
    case PlyType::i8: return read_raw<std::int8_t>(in);
    case PlyType::u8: return read_raw<std::uint8_t>(in);
    case PlyType::i16: return read_raw<std::int16_t>(in);
    case PlyType::u16: return read_raw<std::uint16_t>(in);
    case PlyType::i32: return read_raw<std::int32_t>(in);
    case PlyType::u32: return read_raw<std::uint32_t>(in);
    case PlyType::f32: return read_raw<float>(in);
    case PlyType::f64: return read_raw<double>(in);
  }
  return 0.0;
}

// Reads every element of a ply body into per-element record tables. Each
// record is a flat list: scalar properties in order, list properties as
// their items (list lengths are kept separately).
struct PlyRecord {
  std::vector<double> scalars;
  std::vector<std::vector<double>> lists;
};

class PlyReader {
 public:
  PlyReader(std::istream& in, const PlyHeader& header, std::string source)
      : in_(in), header_(header), source_(std::move(source)) {}

  // Calls sink(record_index, record) for each record of `element`; other
  // elements are skipped.
  template <typename Sink>
  void read_all(const std::string& element, Sink&& sink) {
    for (const auto& e : header_.elements) {
      PlyRecord rec;
      for (std::size_t r = 0; r < e.count; ++r) {
        read_record(e, r, rec);
        if (e.name == element) sink(r, rec);
      }
    }
  }

 private:
  void read_record(const PlyElement& e, std::size_t index, PlyRecord& rec) {
    rec.scalars.clear();
    rec.lists.clear();
    if (header_.binary) {
      for (const auto& p : e.properties) {
        if (p.is_list) {
          const double count = read_binary_value(in_, p.count_type);
          std::vector<double> items(static_cast<std::size_t>(count));
          for (auto& v : items) v = read_binary_value(in_, p.type);
          rec.lists.push_back(std::move(items));
        } else {
          rec.scalars.push_back(read_binary_value(in_, p.type));
        }
      }
      if (!in_) fail(e, index);
      return;
    }
    std::string line;
    do {
      if (!std::getline(in_, line)) fail(e, index);
    } while (line.find_first_not_of(" \t\r") == std::string::npos);
    if (!parse_numbers(line, values_)) fail(e, index);
    std::size_t pos = 0;
    for (const auto& p : e.properties) {
      if (pos >= values_.size()) fail(e, index);
      if (p.is_list) {
        const auto count = static_cast<std::size_t>(values_[pos++]);
        if (pos + count > values_.size()) fail(e, index);
        rec.lists.emplace_back(values_.begin() + static_cast<std::ptrdiff_t>(pos),
                               values_.begin() + static_cast<std::ptrdiff_t>(pos + count));
        pos += count;
      } else {
        rec.scalars.push_back(values_[pos++]);
      }
    }
  }

  [[noreturn]] void fail(const PlyElement& e, std::size_t index) const {
    throw Error(ErrorCode::ParseError,
                source_ + ": malformed or truncated " + e.name + " record " + std::to_string(index));
  }

  std::istream& in_;
  const PlyHeader& header_;
  std::string source_;
  std::vector<double> values_;
};

// Maps scalar property names of an element to their position among the
// element's scalar properties.
int scalar_slot(const PlyElement& e, const std::string& name) {
  int slot = 0;
  for (const auto& p : e.properties) {
    if (p.is_list) continue;
    if (p.name == name) return slot;
    ++slot;
  }
  return -1;
}

const PlyElement* find_element(const PlyHeader& h, const std::string& name) {
  for (const auto& e : h.elements) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

struct PlyContents {
  OrientedPointCloud cloud;
  std::vector<Triangle> triangles;
};

PlyContents load_ply(const std::filesystem::path& path, bool want_faces) {
  auto in = open_input(path, std::ios::in | std::ios::binary);
  const std::string source = path.string();
  const PlyHeader header = read_ply_header(in, source);
  const PlyElement* vertex = find_element(header, "vertex");
  if (!vertex) throw Error(ErrorCode::ParseError, source + ": no vertex element");

  const int sx = scalar_slot(*vertex, "x"), sy = scalar_slot(*vertex, "y"), sz = scalar_slot(*vertex, "z");
  if (sx < 0 || sy < 0 || sz < 0) throw Error(ErrorCode::ParseError, source + ": vertex lacks x/y/z");
  const int nx = scalar_slot(*vertex, "nx"), ny = scalar_slot(*vertex, "ny"), nz = scalar_slot(*vertex, "nz");
  const bool has_normals = nx >= 0 && ny >= 0 && nz >= 0;
  const int cr = scalar_slot(*vertex, "red"), cg = scalar_slot(*vertex, "green"), cb = scalar_slot(*vertex, "blue");
  const bool has_colors = cr >= 0 && cg >= 0 && cb >= 0;
  const int ox = scalar_slot(*vertex, "sensor_x"), oy = scalar_slot(*vertex, "sensor_y"),
            oz = scalar_slot(*vertex, "sensor_z");
  const bool has_sensors = ox >= 0 && oy >= 0 && oz >= 0;
  const int sw = scalar_slot(*vertex, "weight");
  double color_scale = 1.0;
  if (has_colors) {
    for (const auto& p : vertex->properties) {
      if (p.name == "red" && p.type == PlyType::u8) color_scale = 1.0 / 255.0;
    }
  }

  PlyContents out;
  auto& cloud = out.cloud;
  cloud.positions.reserve(vertex->count);
  // Single pass over all elements in file order.
  for (const auto& e : header.elements) {
    PlyHeader single{header.binary, {e}};
    PlyReader element_reader(in, single, source);
    if (e.name == "vertex") {
      element_reader.read_all("vertex", [&](std::size_t r, const PlyRecord& rec) {
        const Vec3 p(rec.scalars[static_cast<std::size_t>(sx)], rec.scalars[static_cast<std::size_t>(sy)],
                     rec.scalars[static_cast<std::size_t>(sz)]);
        if (!p.allFinite()) {
          throw Error(ErrorCode::ParseError, source + ": non-finite position in vertex record " + std::to_string(r));
        }
        cloud.positions.push_back(p);
        if (has_normals) {
          cloud.normals.emplace_back(rec.scalars[static_cast<std::size_t>(nx)],
                                     rec.scalars[static_cast<std::size_t>(ny)],
                                     rec.scalars[static_cast<std::size_t>(nz)]);
        }
        if (has_colors) {
          cloud.colors.emplace_back(rec.scalars[static_cast<std::size_t>(cr)] * color_scale,
                                    rec.scalars[static_cast<std::size_t>(cg)] * color_scale,
                                    rec.scalars[static_cast<std::size_t>(cb)] * color_scale);
        }
        if (has_sensors) {
          cloud.sensor_origins.emplace_back(rec.scalars[static_cast<std::size_t>(ox)],
                                            rec.scalars[static_cast<std::size_t>(oy)],
                                            rec.scalars[static_cast<std::size_t>(oz)]);
        }
        if (sw >= 0) {
          const double w = rec.scalars[static_cast<std::size_t>(sw)];
          if (!(w >= 0.0 && w <= 1.0)) {
            throw Error(ErrorCode::ParseError, source + ": weight outside [0,1] in vertex record " + std::to_string(r));
          }
          cloud.weights.push_back(w);
        }
      });
    } else if (e.name == "face" && want_faces) {
      const int list_slot = [&] {
        int slot = 0;
        for (const auto& p : e.properties) {
          if (!p.is_list) continue;
          if (p.name == "vertex_indices" || p.name == "vertex_index") return slot;
          ++slot;
        }
        return -1;
      }();
      if (list_slot < 0) throw Error(ErrorCode::ParseError, source + ": face element lacks vertex_indices");
      element_reader.read_all("face", [&](std::size_t r, const PlyRecord& rec) {
        const auto& idx = rec.lists[static_cast<std::size_t>(list_slot)];
        if (idx.size() < 3) {
          throw Error(ErrorCode::ParseError, source + ": face record " + std::to_string(r) + " has < 3 vertices");
        }
        for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
          out.triangles.push_back({static_cast<std::uint32_t>(idx[0]), static_cast<std::uint32_t>(idx[k]),
                                   static_cast<std::uint32_t>(idx[k + 1])});
        }
      });
    } else {
      element_reader.read_all("", [](std::size_t, const PlyRecord&) {});
    }
  }
  normalize_normals(cloud.normals, source);
  return out;
}

std::uint8_t to_byte(double c) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
}

template <typename T>
void write_raw(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

OrientedPointCloud load_point_cloud(const std::filesystem::path& path, PointFormat format) {
  OrientedPointCloud cloud = format == PointFormat::xyz ? load_xyz(path) : load_ply(path, false).cloud;
  if (cloud.positions.empty()) throw Error(ErrorCode::EmptyInput, path.string() + ": no points");
  return cloud;
}

OrientedPointCloud load_point_cloud(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".ply") return load_point_cloud(path, PointFormat::ply);
  if (ext == ".xyz" || ext == ".txt" || ext == ".pts") return load_point_cloud(path, PointFormat::xyz);
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  throw Error(ErrorCode::ParseError, path.string() + ": unknown point cloud extension '" + ext + "'");
}

void save_mesh(const TriangleMesh& mesh, const std::filesystem::path& path, MeshFormat format) {
  auto out = open_output(path);
  if (format == MeshFormat::obj) {
    out << std::setprecision(17);
    for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  } else {
    const bool colors = !mesh.vertex_colors.empty();
    out << "ply\nformat binary_little_endian 1.0\ncomment kernelsurf\n";
    out << "element vertex " << mesh.vertices.size() << '\n';
    out << "property double x\nproperty double y\nproperty double z\n";
    if (colors) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "element face " << mesh.triangles.size() << '\n';
    out << "property list uchar uint vertex_indices\nend_header\n";
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
      const auto& v = mesh.vertices[i];
      write_raw(out, v.x());
      write_raw(out, v.y());
      write_raw(out, v.z());
      if (colors) {
        for (int c = 0; c < 3; ++c) write_raw(out, to_byte(mesh.vertex_colors[i][c]));
      }
    }
    for (const auto& t : mesh.triangles) {
      write_raw<std::uint8_t>(out, 3);
      for (auto idx : t) write_raw<std::uint32_t>(out, idx);
    }
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

void save_mesh(const TriangleMesh& mesh, const std::filesystem::path& path) {
  save_mesh(mesh, path, lower_extension(path) == ".obj" ? MeshFormat::obj : MeshFormat::ply);
}

TriangleMesh load_mesh(const std::filesystem::path& path) {
  TriangleMesh mesh;
  const std::string ext = lower_extension(path);
  if (ext == ".ply") {
    auto contents = load_ply(path, true);
    mesh.vertices = std::move(contents.cloud.positions);
    mesh.vertex_colors = std::move(contents.cloud.colors);
    mesh.triangles = std::move(contents.triangles);
  } else if (ext == ".obj") {
    auto in = open_input(path);
    std::string line;
    std::size_t line_no = 0;
    std::vector<double> values;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.size() < 2) continue;
      if (line[0] == 'v' && line[1] == ' ') {
        if (!parse_numbers(std::string_view(line).substr(2), values) || values.size() < 3) {
          throw Error(ErrorCode::ParseError, path.string() + ": malformed vertex at line " + std::to_string(line_no));
        }
        mesh.vertices.emplace_back(values[0], values[1], values[2]);
      } else if (line[0] == 'f' && line[1] == ' ') {
        std::istringstream ss(line.substr(2));
        std::string token;
        std::vector<std::int64_t> idx;
        while (ss >> token) {
          std::int64_t v = 0;
          const auto slash = token.find('/');
          const std::string head = token.substr(0, slash);
          auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), v);
          if (ec != std::errc() || v == 0) {
            throw Error(ErrorCode::ParseError, path.string() + ": malformed face at line " + std::to_string(line_no));
          }
          idx.push_back(v > 0 ? v - 1 : static_cast<std::int64_t>(mesh.vertices.size()) + v);
        }
        if (idx.size() < 3) {
          throw Error(ErrorCode::ParseError, path.string() + ": face with < 3 vertices at line " + std::to_string(line_no));
        }
        for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
          mesh.triangles.push_back({static_cast<std::uint32_t>(idx[0]), static_cast<std::uint32_t>(idx[k]),
                                    static_cast<std::uint32_t>(idx[k + 1])});
        }
      }
    }
  } else {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    throw Error(ErrorCode::ParseError, path.string() + ": unknown mesh extension '" + ext + "'");
  }
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    for (auto idx : mesh.triangles[t]) {
      if (idx >= mesh.vertices.size()) {
        throw Error(ErrorCode::ParseError, path.string() + ": face " + std::to_string(t) + " index out of range");
      }
    }
  }
  return mesh;
}

void save_point_cloud(const OrientedPointCloud& cloud, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "ply\nformat binary_little_endian 1.0\ncomment kernelsurf\n";
  out << "element vertex " << cloud.size() << '\n';
  out << "property double x\nproperty double y\nproperty double z\n";
  if (cloud.has_normals()) out << "property double nx\nproperty double ny\nproperty double nz\n";
  if (cloud.has_colors()) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (cloud.has_sensors()) out << "property double sensor_x\nproperty double sensor_y\nproperty double sensor_z\n";
  if (cloud.has_weights()) out << "property double weight\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int c = 0; c < 3; ++c) write_raw(out, cloud.positions[i][c]);
    if (cloud.has_normals()) {
      for (int c = 0; c < 3; ++c) write_raw(out, cloud.normals[i][c]);
    }
    if (cloud.has_colors()) {
      for (int c = 0; c < 3; ++c) write_raw(out, to_byte(cloud.colors[i][c]));
    }
    if (cloud.has_sensors()) {
      for (int c = 0; c < 3; ++c) write_raw(out, cloud.sensor_origins[i][c]);
    }
    if (cloud.has_weights()) write_raw(out, cloud.weights[i]);
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

}  // namespace kernelsurf
