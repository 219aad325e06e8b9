#include "prefixrank/vocab.hpp"

#include "prefixrank/types.hpp"

namespace prefixrank {

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  for (const auto& t : tokens) {
    if (find(t)) throw Error("duplicate vocabulary entry '" + t + "'");
    add(t);
  }
}

std::size_t Vocabulary::add(std::string_view token) {
  std::string key(token);
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  const std::size_t id = tokens_.size();
  tokens_.push_back(key);
  index_.emplace(std::move(key), id);
  return id;
}

std::optional<std::size_t> Vocabulary::find(std::string_view token) const {
  if (auto it = index_.find(std::string(token)); it != index_.end()) return it->second;
  return std::nullopt;
}

std::size_t Vocabulary::id_or(std::string_view token, std::size_t fallback) const {
  return find(token).value_or(fallback);
}

}  // namespace prefixrank
