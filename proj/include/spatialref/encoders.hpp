#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "spatialref/autodiff.hpp"
#include "spatialref/params.hpp"

namespace spatialref {

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary();
  // Every token of every text gets an id (minimum frequency 1).
  static Vocabulary build(std::span<const std::string> texts);

  int add(const std::string& token);
  int id(const std::string& token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Lowercased maximal alphanumeric runs; punctuation and whitespace separate tokens.
std::vector<std::string> split_words(std::string_view text);

// Throws DataError on an instruction with no tokens.
std::vector<int> tokenize(std::string_view text, const Vocabulary& vocab);

struct EncoderDims {
  std::size_t vocab = 2;
  std::size_t word_dim = 256;
  std::size_t hidden_dim = 256;
  std::size_t feature_dim = 12;
  std::size_t block_dim = 64;
};

// Registers zero-valued encoder parameters under `prefix`.
void add_encoder_params(ParamStore& params, const std::string& prefix, const EncoderDims& dims);

struct EncodedInstruction {
  ad::Var hidden;  // [m x hidden_dim], one row per word
  ad::Var last;    // [hidden_dim], equal to the final row of `hidden`
  std::size_t length = 0;
};

// Single-layer LSTM (gate order i, f, g, o) from a zero state. When `rng` is
// non-null, dropout with probability `dropout` is applied to the word
// embeddings and to the LSTM outputs.
EncodedInstruction encode_instruction(Binding& bind, const std::string& prefix, std::span<const int> tokens,
                                      double dropout = 0.0, std::mt19937_64* rng = nullptr);

// sigmoid(F W_B^T + a) for features F [n x feature_dim] -> [n x block_dim].
ad::Var embed_blocks(Binding& bind, const std::string& prefix, ad::Var features);

}  // namespace spatialref
