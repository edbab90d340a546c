#include "w2k/embedding.hpp"

namespace w2k {

namespace {
constexpr std::string_view kProvenanceNames[] = {"source", "initial", "target", "finetuned", "transformed"};
}

std::string_view to_string(Provenance p) { return kProvenanceNames[static_cast<std::size_t>(p)]; }

std::optional<Provenance> parse_provenance(std::string_view s) {
  for (std::size_t i = 0; i < std::size(kProvenanceNames); ++i)
    if (kProvenanceNames[i] == s) return static_cast<Provenance>(i);
  return std::nullopt;
}

}  // namespace w2k
