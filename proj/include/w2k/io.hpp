#ifndef W2K_IO_HPP_
#define W2K_IO_HPP_

#include <filesystem>
#include <iosfwd>
#include <string>

#include "w2k/embedding.hpp"
#include "w2k/kg.hpp"
#include "w2k/transform.hpp"

namespace w2k::io {

// Text: "n d" then n lines of d space-separated decimals (round-trip precision).
void write_embedding_text(std::ostream& out, const Matrix& m);
Matrix read_embedding_text(std::istream& in);
void save_embedding_text(const std::filesystem::path& path, const Matrix& m);
Matrix load_embedding_text(const std::filesystem::path& path);

// Binary embedding container:
//   "EMBE1" | u8 provenance | u64 n | u64 d | n*d f64
// All integers and floats little-endian.
void save_embedding(const std::filesystem::path& path, const EmbeddingMatrix& e);
EmbeddingMatrix load_embedding(const std::filesystem::path& path);

// KG model container: the embedding container body followed by a relation
// block keyed by model kind and the entity auxiliary matrix.
//   "EMBK1" | u8 provenance | u64 n | u64 d | n*d f64
//   | u8 kind | u8 norm_order | vec r | vec normal | vec projection | vec inverse
//   | mat bilinear | mat aux
// where vec = u64 len + f64s and mat = u64 rows + u64 cols + f64s.
struct KgModelFile {
  EmbeddingMatrix embeddings;
  RelationParams relation;
  EntityAuxParams aux;
};
void save_kg_model(const std::filesystem::path& path, const KgModelFile& model);
KgModelFile load_kg_model(const std::filesystem::path& path);

// Attention parameters: "EMBR1" | u64 d | W_K | W_Q | W_V | b_K | b_Q | b_V,
// each tensor row-major f64.
void write_params(std::ostream& out, const AttentionParams& theta);
AttentionParams read_params(std::istream& in);
void save_params(const std::filesystem::path& path, const AttentionParams& theta);
AttentionParams load_params(const std::filesystem::path& path);

// Human-readable dump of the same parameters.
std::string params_to_json(const AttentionParams& theta);

// Writes through a temporary file and renames, so readers never see partial files.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace w2k::io

#endif  // W2K_IO_HPP_
