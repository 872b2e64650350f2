#include "spatialref/encoders.hpp"

#include <cctype>

namespace spatialref {

using ad::Var;

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
}

Vocabulary Vocabulary::build(std::span<const std::string> texts) {
  Vocabulary v;
  for (const auto& t : texts)
    for (const auto& w : split_words(t)) v.add(w);
  return v;
}

int Vocabulary::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw IndexError("token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isalnum(u) || u >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::vector<int> tokenize(std::string_view text, const Vocabulary& vocab) {
  const auto words = split_words(text);
  if (words.empty()) throw DataError("empty instruction");
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(vocab.id(w));
  return ids;
}

void add_encoder_params(ParamStore& params, const std::string& prefix, const EncoderDims& d) {
  params.add(prefix + ".word_embedding", ad::Tensor({d.vocab, d.word_dim}));
  params.add(prefix + ".lstm.input_weight", ad::Tensor({4 * d.hidden_dim, d.word_dim}));
  params.add(prefix + ".lstm.recurrent_weight", ad::Tensor({4 * d.hidden_dim, d.hidden_dim}));
  params.add(prefix + ".lstm.bias", ad::Tensor({4 * d.hidden_dim}));
  params.add(prefix + ".block.weight", ad::Tensor({d.block_dim, d.feature_dim}));
  params.add(prefix + ".block.bias", ad::Tensor({d.block_dim}));
}

EncodedInstruction encode_instruction(Binding& bind, const std::string& prefix, std::span<const int> tokens,
                                      double dropout, std::mt19937_64* rng) {
  if (tokens.empty()) throw DataError("empty instruction");
  Var table = bind(prefix + ".word_embedding");
  Var w_in = bind(prefix + ".lstm.input_weight");
  Var w_rec = bind(prefix + ".lstm.recurrent_weight");
  Var bias = bind(prefix + ".lstm.bias");
  const std::size_t h = w_rec.value().cols();

  Var embedded = ad::gather_rows(table, tokens);
  if (rng) embedded = ad::dropout(embedded, dropout, *rng);
  // Input projections for all steps at once: [m x 4h].
  Var projected = ad::add_bias(ad::matmul(embedded, ad::transpose(w_in)), bias);

  std::vector<Var> outputs;
  outputs.reserve(tokens.size());
  Var hidden{}, cell{};
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    Var pre = ad::row(projected, t);
    if (t > 0) pre = ad::add(pre, ad::matmul(w_rec, hidden));
    Var in_gate = ad::sigmoid(ad::slice(pre, 0, h));
    Var forget_gate = ad::sigmoid(ad::slice(pre, h, h));
    Var candidate = ad::tanh(ad::slice(pre, 2 * h, h));
    Var out_gate = ad::sigmoid(ad::slice(pre, 3 * h, h));
    Var written = ad::mul(in_gate, candidate);
    cell = t > 0 ? ad::add(ad::mul(forget_gate, cell), written) : written;
    hidden = ad::mul(out_gate, ad::tanh(cell));
    outputs.push_back(hidden);
  }
  Var stacked = ad::stack_rows(outputs);
  if (rng) stacked = ad::dropout(stacked, dropout, *rng);
  return {stacked, ad::row(stacked, tokens.size() - 1), tokens.size()};
}

Var embed_blocks(Binding& bind, const std::string& prefix, Var features) {
  Var w = bind(prefix + ".block.weight");
  Var a = bind(prefix + ".block.bias");
  return ad::sigmoid(ad::add_bias(ad::matmul(features, ad::transpose(w)), a));
}

}  // namespace spatialref
