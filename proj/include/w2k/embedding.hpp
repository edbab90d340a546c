#ifndef W2K_EMBEDDING_HPP_
#define W2K_EMBEDDING_HPP_

#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "w2k/matrix.hpp"

namespace w2k {

enum class Provenance : std::uint8_t { kSource = 0, kInitial = 1, kTarget = 2, kFinetuned = 3, kTransformed = 4 };

std::string_view to_string(Provenance p);
std::optional<Provenance> parse_provenance(std::string_view s);

// n x d node embeddings tagged with the pipeline stage that produced them.
struct EmbeddingMatrix {
  Matrix values;
  Provenance provenance = Provenance::kSource;

  EmbeddingMatrix() = default;
  EmbeddingMatrix(Matrix m, Provenance p) : values(std::move(m)), provenance(p) {}

  std::size_t node_count() const { return values.rows(); }
  std::size_t dim() const { return values.cols(); }

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;
};

}  // namespace w2k

#endif  // W2K_EMBEDDING_HPP_
