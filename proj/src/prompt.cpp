#include "idrestore/prompt.hpp"

#include <cctype>
#include <sstream>
#include <stdexcept>

#include "idrestore/rng.hpp"

namespace idr {

std::vector<std::string> ToyTextEncoder::tokenize(const std::string& prompt) const {
  std::vector<std::string> tokens;
  std::istringstream in(prompt);
  std::string word;
  while (in >> word) {
    std::string trailing;
    while (!word.empty() && std::ispunct(static_cast<unsigned char>(word.back()))) {
      trailing.insert(trailing.begin(), word.back());
      word.pop_back();
    }
    if (!word.empty()) tokens.push_back(word);
    for (char c : trailing) tokens.emplace_back(1, c);
  }
  return tokens;
}

PromptEmbedding ToyTextEncoder::encode(const std::string& prompt, const std::string& replace_word) const {
  const auto tokens = tokenize(prompt);
  PromptEmbedding out;
  out.token_index = -1;
  nn::Tensor values({static_cast<int>(tokens.size()), dim_});
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::uint64_t h = seed_;
    for (char c : tokens[i]) h = derive_seed(h, static_cast<unsigned char>(c));
    Rng rng(h);
    for (int j = 0; j < dim_; ++j) values[i * dim_ + j] = standard_normal(rng);
    if (tokens[i] == replace_word && out.token_index < 0) out.token_index = static_cast<int>(i);
  }
  if (out.token_index < 0) throw std::invalid_argument("prompt does not contain '" + replace_word + "'");
  out.tokens = nn::constant(std::move(values));
  return out;
}

}  // namespace idr
