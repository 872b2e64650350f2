#include "spatialref/alignment.hpp"

#include <algorithm>
#include <cmath>

namespace spatialref {

using ad::Var;

std::string_view to_string(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::LastHidden: return "last_hidden";
    case AttentionKind::Cnn: return "cnn";
    case AttentionKind::Dual: return "dual";
  }
  return "?";
}

AttentionKind parse_attention(std::string_view text) {
  if (text == "last_hidden") return AttentionKind::LastHidden;
  if (text == "cnn") return AttentionKind::Cnn;
  if (text == "dual") return AttentionKind::Dual;
  throw ConfigError("unknown attention variant '" + std::string(text) + "'");
}

std::size_t context_dim(const AttentionDims& dims) {
  return dims.kind == AttentionKind::Cnn ? dims.cnn_filters * kCnnWidths.size() : dims.hidden_dim;
}

std::string role_prefix(const std::string& tower, Role role) {
  return tower + (role == Role::Source ? ".source" : ".reference");
}

void add_attention_params(ParamStore& params, const std::string& tower, const AttentionDims& dims) {
  const std::string p = tower + ".attn.";
  switch (dims.kind) {
    case AttentionKind::LastHidden:
      params.add(p + "W_A", ad::Tensor({dims.block_dim, dims.hidden_dim}));
      break;
    case AttentionKind::Cnn:
      params.add(p + "W_cnn", ad::Tensor({dims.block_dim, context_dim(dims)}));
      break;
    case AttentionKind::Dual:
      params.add(p + "W_word", ad::Tensor({dims.block_dim, dims.hidden_dim}));
      params.add(p + "W_block", ad::Tensor({dims.block_dim, dims.hidden_dim}));
      break;
  }
}

void add_role_params(ParamStore& params, const std::string& tower, Role role, const AttentionDims& dims) {
  const std::string p = role_prefix(tower, role);
  if (dims.kind == AttentionKind::Cnn) {
    for (std::size_t k : kCnnWidths) {
      params.add(p + ".cnn.w" + std::to_string(k), ad::Tensor({dims.cnn_filters, k * dims.hidden_dim}));
      params.add(p + ".cnn.b" + std::to_string(k), ad::Tensor({dims.cnn_filters}));
    }
  } else if (role == Role::Reference) {
    params.add(p + ".projection", ad::Tensor({dims.hidden_dim, dims.hidden_dim}));
  }
}

Var attend_last_hidden(Var blocks, Var context, Var bilinear) {
  return ad::matmul(blocks, ad::matmul(bilinear, context));
}

Var encode_cnn(Binding& bind, const std::string& prefix, Var hidden) {
  std::vector<Var> pooled;
  pooled.reserve(kCnnWidths.size());
  for (std::size_t k : kCnnWidths) {
    Var w = bind(prefix + ".cnn.w" + std::to_string(k));
    Var b = bind(prefix + ".cnn.b" + std::to_string(k));
    Var windows = ad::unfold(hidden, k);
    Var response = ad::add_bias(ad::matmul(windows, ad::transpose(w)), b);
    pooled.push_back(ad::max_rows(response));
  }
  return ad::concat(pooled);
}

Var attend_dual(Var blocks, Var hidden, Var word_bilinear, Var block_bilinear) {
  // word scores [n x m]: c_i^T W_word h_t
  Var word_scores = ad::matmul(ad::matmul(blocks, word_bilinear), ad::transpose(hidden));
  Var weights = ad::softmax(word_scores, 1);
  Var contexts = ad::matmul(weights, hidden);  // z_i rows [n x d]
  return ad::row_sum(ad::mul(ad::matmul(blocks, block_bilinear), contexts));
}

RoleAlignment align(Binding& bind, const AttentionDims& dims, const std::string& tower, Role role, Var blocks,
                    const EncodedInstruction& enc) {
  const std::string attn = tower + ".attn.";
  const std::string rp = role_prefix(tower, role);
  switch (dims.kind) {
    case AttentionKind::LastHidden: {
      Var context = enc.last;
      if (role == Role::Reference) context = ad::matmul(bind(rp + ".projection"), context);
      return {attend_last_hidden(blocks, context, bind(attn + "W_A")), context};
    }
    case AttentionKind::Cnn: {
      Var h_cnn = encode_cnn(bind, rp, enc.hidden);
      return {attend_last_hidden(blocks, h_cnn, bind(attn + "W_cnn")), h_cnn};
    }
    case AttentionKind::Dual: {
      Var hidden = enc.hidden;
      if (role == Role::Reference) hidden = ad::matmul(hidden, ad::transpose(bind(rp + ".projection")));
      return {attend_dual(blocks, hidden, bind(attn + "W_word"), bind(attn + "W_block")), enc.last};
    }
  }
  throw ConfigError("unhandled attention variant");
}

Var block_distribution(Var scores) { return ad::softmax(scores, 0); }

std::vector<double> block_distribution(std::span<const double> scores) {
  if (scores.empty()) throw ShapeError("block_distribution: no blocks");
  double mx = -INFINITY;
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericError("block_distribution: non-finite score");
    mx = std::max(mx, s);
  }
  std::vector<double> p(scores.size());
  double z = 0;
  for (std::size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp(scores[i] - mx);
  for (auto& v : p) v /= z;
  return p;
}

SourceLoss source_loss(std::span<const double> dist, std::size_t truth) {
  if (truth >= dist.size()) throw IndexError("source index " + std::to_string(truth) + " out of range");
  constexpr double kFloor = 1e-12;
  const double p = dist[truth];
  if (p < kFloor) return {-std::log(kFloor), true};
  return {-std::log(p), false};
}

Var source_loss(Var scores, std::size_t truth) {
  if (truth >= scores.value().size())
    throw IndexError("source index " + std::to_string(truth) + " out of range");
  return ad::scale(ad::pick(ad::log_softmax(scores), truth), -1.0);
}

}  // namespace spatialref
