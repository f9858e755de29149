#include "nse/tensor_store.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <regex>
#include <set>

#include <fmt/format.h>
#include "json.hpp"

#include "nse/errors.hpp"

namespace nse {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; add byte swapping for big-endian hosts");

namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;
constexpr std::size_t kPreambleLen = 10;  // magic + version + uint16 header length
constexpr std::size_t kAlignment = 64;

std::vector<char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}' for reading", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

DType parse_descr(const std::string& descr, std::uint64_t offset) {
  if (descr == "<f8") return DType::f64;
  if (descr == "<f4") return DType::f32;
  throw FormatError(fmt::format("unsupported dtype '{}' (expected '<f4' or '<f8')", descr), offset);
}

std::vector<std::size_t> parse_shape(const std::string& text, std::uint64_t offset) {
  std::vector<std::size_t> dims;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == ',')) ++pos;
    if (pos >= text.size()) break;
    std::size_t end = pos;
    while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
    if (end == pos) throw FormatError(fmt::format("malformed shape '({})'", text), offset);
    dims.push_back(std::stoull(text.substr(pos, end - pos)));
    pos = end;
  }
  return dims;
}

std::string header_dict(DType dtype, std::size_t rows, std::size_t cols) {
  return fmt::format("{{'descr': '{}', 'fortran_order': False, 'shape': ({}, {}), }}", dtype_descr(dtype), rows,
                     cols);
}

}  // namespace

std::size_t dtype_width(DType dtype) { return dtype == DType::f64 ? 8 : 4; }

const char* dtype_descr(DType dtype) { return dtype == DType::f64 ? "<f8" : "<f4"; }

void MatrixRecord::validate() const {
  if (rows * cols != data.size()) {
    throw ValidationError(
        fmt::format("matrix '{}': shape {}x{} does not match {} values", name, rows, cols, data.size()));
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw ValidationError(fmt::format("matrix '{}': non-finite value at index {}", name, i));
    }
  }
}

Matrix MatrixRecord::to_matrix() const {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const RowMajor>(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MatrixRecord MatrixRecord::from_matrix(std::string name, const Matrix& m, DType dtype) {
  MatrixRecord rec;
  rec.name = std::move(name);
  rec.rows = static_cast<std::size_t>(m.rows());
  rec.cols = static_cast<std::size_t>(m.cols());
  rec.dtype = dtype;
  rec.data.resize(rec.rows * rec.cols);
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<RowMajor>(rec.data.data(), m.rows(), m.cols()) = m;
  if (dtype == DType::f32) {
    for (auto& v : rec.data) v = static_cast<double>(static_cast<float>(v));
  }
  return rec;
}

MatrixRecord read_matrix(const fs::path& path) {
  const std::vector<char> bytes = slurp(path);
  if (bytes.size() < kPreambleLen || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
    throw FormatError(fmt::format("'{}' is not an NPY file (bad magic)", path.string()), 0);
  }
  const auto major = static_cast<unsigned char>(bytes[6]);
  const auto minor = static_cast<unsigned char>(bytes[7]);
  if (major != 1 || minor != 0) {
    throw FormatError(fmt::format("unsupported NPY version {}.{} (expected 1.0)", major, minor), 6);
  }
  const std::size_t header_len =
      static_cast<unsigned char>(bytes[8]) | (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
  if (bytes.size() < kPreambleLen + header_len) throw FormatError("truncated header", 8);
  const std::string header(bytes.data() + kPreambleLen, header_len);

  static const std::regex descr_re(R"('descr'\s*:\s*'([^']*)')");
  static const std::regex fortran_re(R"('fortran_order'\s*:\s*(True|False))");
  static const std::regex shape_re(R"('shape'\s*:\s*\(([^)]*)\))");
  std::smatch m_descr, m_fortran, m_shape;
  if (header.empty() || header.front() != '{' || !std::regex_search(header, m_descr, descr_re) ||
      !std::regex_search(header, m_fortran, fortran_re) || !std::regex_search(header, m_shape, shape_re)) {
    throw FormatError("malformed header dictionary", kPreambleLen);
  }
  const DType dtype = parse_descr(m_descr[1].str(), kPreambleLen + m_descr.position(1));
  if (m_fortran[1].str() == "True") {
    throw FormatError("fortran_order arrays are not supported", kPreambleLen + m_fortran.position(1));
  }
  const auto dims = parse_shape(m_shape[1].str(), kPreambleLen + m_shape.position(1));
  if (dims.empty() || dims.size() > 2) {
    throw FormatError(fmt::format("expected a 1-D or 2-D array, got {} dimensions", dims.size()),
                      kPreambleLen + m_shape.position(1));
  }

  MatrixRecord rec;
  rec.name = path.stem().string();
  rec.rows = dims[0];
  rec.cols = dims.size() == 2 ? dims[1] : 1;
  rec.dtype = dtype;

  const std::size_t width = dtype_width(dtype);
  const std::size_t count = rec.rows * rec.cols;
  const std::size_t data_start = kPreambleLen + header_len;
  if (bytes.size() - data_start < count * width) {
    throw FormatError(fmt::format("payload holds {} bytes, shape needs {}", bytes.size() - data_start, count * width),
                      bytes.size());
  }
  rec.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const char* src = bytes.data() + data_start + i * width;
    double v;
    if (dtype == DType::f64) {
      std::memcpy(&v, src, 8);
    } else {
      float f;
      std::memcpy(&f, src, 4);
      v = f;
    }
    if (!std::isfinite(v)) throw FormatError("non-finite value in payload", data_start + i * width);
    rec.data[i] = v;
  }
  return rec;
}

void write_matrix(const MatrixRecord& record, const fs::path& path) {
  record.validate();
  std::string header = header_dict(record.dtype, record.rows, record.cols);
  const std::size_t unpadded = kPreambleLen + header.size() + 1;
  header.append((kAlignment - unpadded % kAlignment) % kAlignment, ' ');
  header.push_back('\n');
  if (header.size() > 0xFFFF) throw ValidationError("NPY header too large for version 1.0");

  std::string out;
  const std::size_t width = dtype_width(record.dtype);
  out.reserve(kPreambleLen + header.size() + record.data.size() * width);
  out.append(kMagic, kMagicLen);
  out.push_back('\x01');
  out.push_back('\x00');
  out.push_back(static_cast<char>(header.size() & 0xFF));
  out.push_back(static_cast<char>((header.size() >> 8) & 0xFF));
  out += header;
  for (double v : record.data) {
    char buf[8];
    if (record.dtype == DType::f64) {
      std::memcpy(buf, &v, 8);
    } else {
      const float f = static_cast<float>(v);
      std::memcpy(buf, &f, 4);
    }
    out.append(buf, width);
  }

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw IoError(fmt::format("write to '{}' failed", path.string()));
}

Matrix read_eigen(const fs::path& path) { return read_matrix(path).to_matrix(); }

void write_eigen(const Matrix& m, const fs::path& path, DType dtype) {
  write_matrix(MatrixRecord::from_matrix(path.stem().string(), m, dtype), path);
}

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ValidationError(fmt::format("{}: unknown key '{}'", where, key));
  }
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(fmt::format("{}: missing required key '{}'", where, key));
  return *it;
}

fs::path resolve(const fs::path& base, const json& value, const char* key) {
  if (!value.is_string()) throw ValidationError(fmt::format("manifest: '{}' must be a path string", key));
  fs::path p = value.get<std::string>();
  return p.is_absolute() ? p : base / p;
}

}  // namespace

TaskManifest parse_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError(fmt::format("cannot open manifest '{}'", manifest_path.string()));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(fmt::format("manifest '{}' is not valid JSON: {}", manifest_path.string(), e.what()));
  }
  if (!doc.is_object()) throw ValidationError("manifest: top level must be an object");
  reject_unknown_keys(doc, {"layers", "erase", "anchor", "retain", "invariants", "hyperparams", "seed"}, "manifest");

  const fs::path base = manifest_path.parent_path();
  TaskManifest m;

  const json& layers = require(doc, "layers", "manifest");
  if (!layers.is_array() || layers.empty()) throw ValidationError("manifest: 'layers' must be a non-empty array");
  for (const auto& entry : layers) {
    if (!entry.is_object()) throw ValidationError("manifest: each layer must be an object with 'id' and 'path'");
    reject_unknown_keys(entry, {"id", "path"}, "manifest layer");
    const json& id = require(entry, "id", "manifest layer");
    if (!id.is_string()) throw ValidationError("manifest layer: 'id' must be a string");
    m.layers.push_back({id.get<std::string>(), resolve(base, require(entry, "path", "manifest layer"), "path")});
  }
  m.erase = resolve(base, require(doc, "erase", "manifest"), "erase");
  m.anchor = resolve(base, require(doc, "anchor", "manifest"), "anchor");
  m.retain = resolve(base, require(doc, "retain", "manifest"), "retain");
  if (auto it = doc.find("invariants"); it != doc.end() && !it->is_null()) {
    m.invariants = resolve(base, *it, "invariants");
  }

  const json& hp = require(doc, "hyperparams", "manifest");
  if (!hp.is_object()) throw ValidationError("manifest: 'hyperparams' must be an object");
  for (const auto& [key, value] : hp.items()) {
    if (key == "seed") throw ValidationError("manifest hyperparams: 'seed' belongs at the top level");
    if (!value.is_number()) throw ValidationError(fmt::format("manifest hyperparams: '{}' must be a number", key));
    m.hp.set(key, value.dump());
  }

  const json& seed = require(doc, "seed", "manifest");
  if (!seed.is_number_unsigned()) throw ValidationError("manifest: 'seed' must be an unsigned integer");
  m.seed = seed.get<std::uint64_t>();
  m.hp.seed = m.seed;
  m.hp.validate();
  return m;
}

EraseTask load_task(const fs::path& manifest_path) {
  const TaskManifest m = parse_manifest(manifest_path);
  EraseTask task;
  task.hp = m.hp;
  for (const auto& entry : m.layers) task.layers.push_back({entry.id, read_eigen(entry.path)});
  task.C1 = {read_eigen(m.erase), ConceptRole::erase};
  task.C_star = {read_eigen(m.anchor), ConceptRole::anchor};
  task.C0 = {read_eigen(m.retain), ConceptRole::retain};
  if (m.invariants.empty()) {
    task.C2 = {Matrix(task.C1.dim(), 0), ConceptRole::invariant};
  } else {
    task.C2 = {read_eigen(m.invariants), ConceptRole::invariant};
  }
  task.validate();
  return task;
}

std::string sanitize_id(const std::string& layer_id) {
  std::string out = layer_id;
  std::replace_if(out.begin(), out.end(), [](char c) { return c == '/' || c == '\\' || c == ':'; }, '_');
  return out;
}

fs::path save_task(const EraseTask& task, const fs::path& dir, DType dtype) {
  task.validate();
  fs::create_directories(dir);
  json doc;
  json layers = json::array();
  for (const auto& layer : task.layers) {
    const std::string file = "W_" + sanitize_id(layer.layer_id) + ".npy";
    write_eigen(layer.W, dir / file, dtype);
    layers.push_back({{"id", layer.layer_id}, {"path", file}});
  }
  doc["layers"] = layers;
  write_eigen(task.C1.embeddings, dir / "C1.npy", dtype);
  write_eigen(task.C_star.embeddings, dir / "C_star.npy", dtype);
  write_eigen(task.C0.embeddings, dir / "C0.npy", dtype);
  doc["erase"] = "C1.npy";
  doc["anchor"] = "C_star.npy";
  doc["retain"] = "C0.npy";
  if (task.C2.count() > 0) {
    write_eigen(task.C2.embeddings, dir / "C2.npy", dtype);
    doc["invariants"] = "C2.npy";
  }
  const auto& hp = task.hp;
  doc["hyperparams"] = {{"alpha", hp.alpha},   {"beta", hp.beta},   {"lambda_reg", hp.lambda_reg},
                        {"svd_tol", hp.svd_tol}, {"r", hp.r},         {"n_aug", hp.n_aug},
                        {"filter_scale", hp.filter_scale}, {"lambda_inv", hp.lambda_inv}};
  doc["seed"] = hp.seed;

  const fs::path manifest = dir / "manifest.json";
  std::ofstream os(manifest);
  if (!os) throw IoError(fmt::format("cannot write '{}'", manifest.string()));
  os << doc.dump(2) << '\n';
  return manifest;
}

}  // namespace nse
