#pragma once

#include <string>
#include <vector>

#include "idrestore/autograd.hpp"

namespace idr {

// Ordered token vectors [L, d]. `token_index` marks the replaceable token and
// `span_length` how many rows currently occupy that position (1 for the plain
// text prompt, N after identity rows are spliced in).
struct PromptEmbedding {
  nn::Var tokens;
  int token_index = 0;
  int span_length = 1;

  int length() const { return tokens.defined() ? tokens.value().dim(0) : 0; }
  int dim() const { return tokens.defined() ? tokens.value().dim(1) : 0; }
};

// Maps the fixed prompt to token embeddings.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::vector<std::string> tokenize(const std::string& prompt) const = 0;
  virtual PromptEmbedding encode(const std::string& prompt, const std::string& replace_word) const = 0;
  virtual int dim() const = 0;
};

inline constexpr const char* kFixedPrompt = "a photo of face.";
inline constexpr const char* kIdentityWord = "face";

// Whitespace tokenizer that splits trailing punctuation into its own token and
// embeds each token as a fixed pseudo-random vector seeded by its spelling.
class ToyTextEncoder final : public TextEncoder {
 public:
  ToyTextEncoder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}
  std::vector<std::string> tokenize(const std::string& prompt) const override;
  PromptEmbedding encode(const std::string& prompt, const std::string& replace_word) const override;
  int dim() const override { return dim_; }

 private:
  int dim_;
  std::uint64_t seed_;
};

}  // namespace idr
