#include "w2k/io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "w2k/graph.hpp"

namespace w2k::io {

namespace {

constexpr std::string_view kEmbeddingMagic = "EMBE1";
constexpr std::string_view kKgMagic = "EMBK1";
constexpr std::string_view kParamsMagic = "EMBR1";

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), 8);
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 8)) throw DataError("truncated binary file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return v;
}

void put_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }

std::uint8_t get_u8(std::istream& in) {
  const int c = in.get();
  if (c == std::char_traits<char>::eof()) throw DataError("truncated binary file");
  return static_cast<std::uint8_t>(c);
}

void put_f64s(std::ostream& out, std::span<const double> xs) {
  for (double x : xs) put_u64(out, std::bit_cast<std::uint64_t>(x));
}

void get_f64s(std::istream& in, std::span<double> xs) {
  for (double& x : xs) x = std::bit_cast<double>(get_u64(in));
}

void put_vec(std::ostream& out, const std::vector<double>& v) {
  put_u64(out, v.size());
  put_f64s(out, v);
}

// Guards allocations against corrupt headers.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

std::vector<double> get_vec(std::istream& in) {
  const std::uint64_t len = get_u64(in);
  if (len > kMaxElements) throw DataError("binary vector length out of range");
  std::vector<double> v(len);
  get_f64s(in, v);
  return v;
}

void put_mat(std::ostream& out, const Matrix& m) {
  put_u64(out, m.rows());
  put_u64(out, m.cols());
  put_f64s(out, m.values());
}

Matrix get_mat(std::istream& in) {
  const std::uint64_t rows = get_u64(in);
  const std::uint64_t cols = get_u64(in);
  if (rows > kMaxElements || cols > kMaxElements || (cols != 0 && rows > kMaxElements / cols)) {
    throw DataError("binary matrix shape out of range");
  }
  Matrix m(rows, cols);
  get_f64s(in, m.values());
  return m;
}

void expect_magic(std::istream& in, std::string_view magic, const std::filesystem::path& path) {
  std::string got(magic.size(), '\0');
  if (!in.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic) {
    throw DataError(path.string() + ": bad magic, expected " + std::string(magic));
  }
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

Provenance checked_provenance(std::uint8_t v) {
  if (v > static_cast<std::uint8_t>(Provenance::kTransformed)) throw DataError("unknown provenance tag");
  return static_cast<Provenance>(v);
}

void put_embedding_body(std::ostream& out, const EmbeddingMatrix& e) {
  put_u8(out, static_cast<std::uint8_t>(e.provenance));
  put_u64(out, e.values.rows());
  put_u64(out, e.values.cols());
  put_f64s(out, e.values.values());
}

EmbeddingMatrix get_embedding_body(std::istream& in) {
  const Provenance p = checked_provenance(get_u8(in));
  const std::uint64_t n = get_u64(in);
  const std::uint64_t d = get_u64(in);
  if (n > kMaxElements || d > kMaxElements || (d != 0 && n > kMaxElements / d)) {
    throw DataError("embedding shape out of range");
  }
  Matrix m(n, d);
  get_f64s(in, m.values());
  return EmbeddingMatrix(std::move(m), p);
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_embedding_text(std::ostream& out, const Matrix& m) {
  out << m.rows() << ' ' << m.cols() << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out << ' ';
      out << m(i, j);
    }
    out << '\n';
  }
}

Matrix read_embedding_text(std::istream& in) {
  std::size_t n = 0, d = 0;
  if (!(in >> n >> d)) throw DataError("embedding text: missing 'n d' header");
  if (n > kMaxElements || d > kMaxElements || (d != 0 && n > kMaxElements / d)) {
    throw DataError("embedding text: shape out of range");
  }
  Matrix m(n, d);
  for (double& x : m.values()) {
    if (!(in >> x)) throw DataError("embedding text: expected " + std::to_string(n * d) + " values");
  }
  return m;
}

void save_embedding_text(const std::filesystem::path& path, const Matrix& m) {
  std::ostringstream out;
  write_embedding_text(out, m);
  write_file_atomic(path, out.str());
}

Matrix load_embedding_text(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_embedding_text(in);
}

void save_embedding(const std::filesystem::path& path, const EmbeddingMatrix& e) {
  std::ostringstream out(std::ios::binary);
  out.write(kEmbeddingMagic.data(), static_cast<std::streamsize>(kEmbeddingMagic.size()));
  put_embedding_body(out, e);
  write_file_atomic(path, out.str());
}

EmbeddingMatrix load_embedding(const std::filesystem::path& path) {
  auto in = open_in(path);
  expect_magic(in, kEmbeddingMagic, path);
  return get_embedding_body(in);
}

void save_kg_model(const std::filesystem::path& path, const KgModelFile& model) {
  std::ostringstream out(std::ios::binary);
  out.write(kKgMagic.data(), static_cast<std::streamsize>(kKgMagic.size()));
  put_embedding_body(out, model.embeddings);
  const RelationParams& rel = model.relation;
  put_u8(out, static_cast<std::uint8_t>(rel.kind));
  put_u8(out, static_cast<std::uint8_t>(rel.norm_order));
  put_vec(out, rel.r);
  put_vec(out, rel.normal);
  put_vec(out, rel.projection);
  put_vec(out, rel.inverse);
  put_mat(out, rel.bilinear);
  put_mat(out, model.aux.values);
  write_file_atomic(path, out.str());
}

KgModelFile load_kg_model(const std::filesystem::path& path) {
  auto in = open_in(path);
  expect_magic(in, kKgMagic, path);
  KgModelFile model;
  model.embeddings = get_embedding_body(in);
  RelationParams& rel = model.relation;
  const std::uint8_t kind = get_u8(in);
  if (kind > static_cast<std::uint8_t>(KgModelKind::kSimplE)) throw DataError(path.string() + ": unknown model kind");
  rel.kind = static_cast<KgModelKind>(kind);
  rel.norm_order = get_u8(in);
  rel.dim = model.embeddings.dim();
  rel.r = get_vec(in);
  rel.normal = get_vec(in);
  rel.projection = get_vec(in);
  rel.inverse = get_vec(in);
  rel.bilinear = get_mat(in);
  model.aux.values = get_mat(in);
  return model;
}

void write_params(std::ostream& out, const AttentionParams& theta) {
  out.write(kParamsMagic.data(), static_cast<std::streamsize>(kParamsMagic.size()));
  put_u64(out, theta.dim());
  theta.for_each_block([&](std::span<const double> block) { put_f64s(out, block); });
}

AttentionParams read_params(std::istream& in) {
  std::string got(kParamsMagic.size(), '\0');
  if (!in.read(got.data(), static_cast<std::streamsize>(got.size())) || got != kParamsMagic) {
    throw DataError("attention parameters: bad magic, expected EMBR1");
  }
  const std::uint64_t d = get_u64(in);
  if (d == 0 || d > (1u << 16)) throw DataError("attention parameters: dimension out of range");
  AttentionParams theta(d);
  theta.for_each_block([&](std::span<double> block) { get_f64s(in, block); });
  return theta;
}

void save_params(const std::filesystem::path& path, const AttentionParams& theta) {
  std::ostringstream out(std::ios::binary);
  write_params(out, theta);
  write_file_atomic(path, out.str());
}

AttentionParams load_params(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_params(in);
}

std::string params_to_json(const AttentionParams& theta) {
  auto mat = [](const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
      rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
    }
    return rows;
  };
  nlohmann::json j;
  j["format"] = "EMBR1";
  j["dim"] = theta.dim();
  j["W_K"] = mat(theta.w_key);
  j["W_Q"] = mat(theta.w_query);
  j["W_V"] = mat(theta.w_value);
  j["b_K"] = theta.b_key;
  j["b_Q"] = theta.b_query;
  j["b_V"] = theta.b_value;
  return j.dump(2) + "\n";
}

}  // namespace w2k::io
