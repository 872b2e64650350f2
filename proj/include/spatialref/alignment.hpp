#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spatialref/autodiff.hpp"
#include "spatialref/encoders.hpp"
#include "spatialref/params.hpp"

namespace spatialref {

enum class AttentionKind { LastHidden, Cnn, Dual };

std::string_view to_string(AttentionKind kind);
AttentionKind parse_attention(std::string_view text);

enum class Role { Source, Reference };

inline constexpr std::array<std::size_t, 4> kCnnWidths = {2, 3, 4, 5};

struct AttentionDims {
  AttentionKind kind = AttentionKind::Cnn;
  std::size_t hidden_dim = 256;
  std::size_t block_dim = 64;
  std::size_t cnn_filters = 64;  // per kernel width
};

// Width of the instruction vector entering the bilinear form.
std::size_t context_dim(const AttentionDims& dims);

// Bilinear matrices shared by both roles: `<tower>.attn.*`.
void add_attention_params(ParamStore& params, const std::string& tower, const AttentionDims& dims);

// Role-specific context parameters: `<tower>.<role>.*`. The source role under
// last-hidden or dual attention has none.
void add_role_params(ParamStore& params, const std::string& tower, Role role, const AttentionDims& dims);

std::string role_prefix(const std::string& tower, Role role);

// score_i = c_i^T W h for blocks [n x b], context h [k], W [b x k].
ad::Var attend_last_hidden(ad::Var blocks, ad::Var context, ad::Var bilinear);

// Convolution of every width over the hidden states followed by a max over
// positions; pooled outputs concatenated in width order.
ad::Var encode_cnn(Binding& bind, const std::string& prefix, ad::Var hidden);

// Word-to-block then block-to-instruction attention.
ad::Var attend_dual(ad::Var blocks, ad::Var hidden, ad::Var word_bilinear, ad::Var block_bilinear);

struct RoleAlignment {
  ad::Var scores;   // [n]
  ad::Var summary;  // role's instruction vector (h_CNN, projected h_m, or h_m)
};

// Scores every block for one role under the configured attention variant.
RoleAlignment align(Binding& bind, const AttentionDims& dims, const std::string& tower, Role role,
                    ad::Var blocks, const EncodedInstruction& enc);

ad::Var block_distribution(ad::Var scores);
std::vector<double> block_distribution(std::span<const double> scores);

struct SourceLoss {
  double value = 0;
  bool clamped = false;  // probability of the true block was below 1e-12
};

SourceLoss source_loss(std::span<const double> dist, std::size_t truth);
// Cross-entropy against the one-hot truth, computed from raw scores.
ad::Var source_loss(ad::Var scores, std::size_t truth);

}  // namespace spatialref
