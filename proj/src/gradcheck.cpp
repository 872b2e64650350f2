#include "spatialref/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "spatialref/alignment.hpp"
#include "spatialref/encoders.hpp"
#include "spatialref/model.hpp"
#include "spatialref/target.hpp"

namespace spatialref {

using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

double grad_check_params(ParamStore& params, const ParamLoss& loss, double step) {
  GradMap analytic;
  {
    Tape tape;
    Binding bind(tape, params);
    Var l = loss(bind);
    analytic = bind.collect(tape.backward(l));
  }
  auto evaluate = [&] {
    Tape tape;
    tape.set_grad_enabled(false);
    Binding bind(tape, params);
    return loss(bind).item();
  };
  double worst = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].data();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double saved = theta[k];
      theta[k] = saved + step;
      const double up = evaluate();
      theta[k] = saved - step;
      const double down = evaluate();
      theta[k] = saved;
      const double numeric = (up - down) / (2 * step);
      const double a = analytic[i][k];
      worst = std::max(worst, std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)}));
    }
  }
  return worst;
}

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

std::size_t pick_dim(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Weighted sum with fixed pseudo-random weights, so every output coordinate
// contributes a distinct upstream gradient.
Var contract(Tape& tape, Var y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ad::sum(ad::mul(y, tape.constant(random_tensor(y.shape(), rng))));
}

using Body = std::function<Var(Tape&, Var, std::mt19937_64&)>;
using PointGen = std::function<Tensor(std::mt19937_64&)>;

CheckResult check_op(const std::string& name, std::size_t instances, std::mt19937_64& rng, const PointGen& gen,
                     const Body& body) {
  CheckResult r{name, instances, 0};
  for (std::size_t n = 0; n < instances; ++n) {
    const Tensor point = gen(rng);
    const std::uint64_t case_seed = rng();
    auto f = [&](Tape& tape, Var x) {
      std::mt19937_64 local(case_seed);
      Var y = body(tape, x, local);
      return contract(tape, y, case_seed + 1);
    };
    r.max_error = std::max(r.max_error, ad::grad_check(f, point));
  }
  return r;
}

PointGen matrix_gen(std::size_t lo = 1, std::size_t hi = 4, double a = -1.0, double b = 1.0) {
  return [=](std::mt19937_64& rng) {
    return random_tensor({pick_dim(rng, lo, hi), pick_dim(rng, lo, hi)}, rng, a, b);
  };
}

PointGen vector_gen(std::size_t lo = 1, std::size_t hi = 6, double a = -1.0, double b = 1.0) {
  return [=](std::mt19937_64& rng) { return random_tensor({pick_dim(rng, lo, hi)}, rng, a, b); };
}

// A constant operand built from the case rng, shaped after the checked point.
Var like(Tape& tape, Var x, std::mt19937_64& rng) { return tape.constant(random_tensor(x.shape(), rng)); }

void randomize(ParamStore& params, std::mt19937_64& rng, double scale) {
  for (std::size_t i = 0; i < params.size(); ++i)
    for (auto& v : params[i].data()) v = std::uniform_real_distribution<double>(-scale, scale)(rng);
}

std::vector<int> random_tokens(std::mt19937_64& rng, std::size_t vocab) {
  std::vector<int> t(pick_dim(rng, 1, 7));
  for (auto& id : t) id = static_cast<int>(pick_dim(rng, 1, vocab - 1));
  return t;
}

WorldState random_world(std::mt19937_64& rng) {
  WorldState w;
  w.board_min = {0, 0};
  w.board_max = {6, 6};
  const std::size_t n = pick_dim(rng, 2, 5);
  std::uniform_real_distribution<double> u(0.0, 6.0);
  for (std::size_t i = 0; i < n; ++i) w.blocks.push_back({u(rng), std::uniform_real_distribution<double>(0, 2)(rng), u(rng)});
  return w;
}

CheckResult check_params(const std::string& name, std::size_t instances, std::mt19937_64& rng,
                         const std::function<double(std::mt19937_64&)>& one) {
  CheckResult r{name, instances, 0};
  for (std::size_t n = 0; n < instances; ++n) r.max_error = std::max(r.max_error, one(rng));
  return r;
}

constexpr std::size_t kVocab = 8;

EncoderDims tiny_encoder() { return {kVocab, 3, 4, 12, 3}; }

AttentionDims tiny_attention(AttentionKind kind) { return {kind, 4, 3, 2}; }

}  // namespace

std::vector<CheckResult> run_grad_check_suite(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<CheckResult> out;
  auto op = [&](const std::string& name, const PointGen& gen, const Body& body) {
    out.push_back(check_op(name, instances, rng, gen, body));
  };

  op("add", matrix_gen(), [](Tape& t, Var x, auto& r) { return ad::add(x, like(t, x, r)); });
  op("sub.lhs", matrix_gen(), [](Tape& t, Var x, auto& r) { return ad::sub(x, like(t, x, r)); });
  op("sub.rhs", matrix_gen(), [](Tape& t, Var x, auto& r) { return ad::sub(like(t, x, r), x); });
  op("mul", matrix_gen(), [](Tape& t, Var x, auto& r) { return ad::mul(like(t, x, r), x); });
  op("mul.self", vector_gen(), [](Tape&, Var x, auto&) { return ad::mul(x, x); });
  op("scale", matrix_gen(), [](Tape&, Var x, auto&) { return ad::scale(x, -1.7); });
  op("add_scalar", vector_gen(), [](Tape&, Var x, auto&) { return ad::add_scalar(x, 0.3); });
  op("add_bias.input", matrix_gen(), [](Tape& t, Var x, auto& r) {
    return ad::add_bias(x, t.constant(random_tensor({x.shape()[1]}, r)));
  });
  op("add_bias.bias", vector_gen(), [](Tape& t, Var x, auto& r) {
    return ad::add_bias(t.constant(random_tensor({3, x.shape()[0]}, r)), x);
  });
  op("matmul.lhs", matrix_gen(), [](Tape& t, Var x, auto& r) {
    return ad::matmul(x, t.constant(random_tensor({x.shape()[1], pick_dim(r, 1, 4)}, r)));
  });
  op("matmul.rhs", matrix_gen(), [](Tape& t, Var x, auto& r) {
    return ad::matmul(t.constant(random_tensor({pick_dim(r, 1, 4), x.shape()[0]}, r)), x);
  });
  op("matmul.matvec.matrix", matrix_gen(), [](Tape& t, Var x, auto& r) {
    return ad::matmul(x, t.constant(random_tensor({x.shape()[1]}, r)));
  });
  op("matmul.matvec.vector", vector_gen(), [](Tape& t, Var x, auto& r) {
    return ad::matmul(t.constant(random_tensor({pick_dim(r, 1, 4), x.shape()[0]}, r)), x);
  });
  op("transpose", matrix_gen(), [](Tape&, Var x, auto&) { return ad::transpose(x); });
  op("sigmoid", matrix_gen(1, 4, -3, 3), [](Tape&, Var x, auto&) { return ad::sigmoid(x); });
  op("tanh", matrix_gen(1, 4, -2, 2), [](Tape&, Var x, auto&) { return ad::tanh(x); });
  op("exp", matrix_gen(1, 4, -2, 2), [](Tape&, Var x, auto&) { return ad::exp(x); });
  op("log", matrix_gen(1, 4, 0.5, 3), [](Tape&, Var x, auto&) { return ad::log(x); });
  op("softmax.vector", vector_gen(1, 6, -3, 3), [](Tape&, Var x, auto&) { return ad::softmax(x, 0); });
  op("softmax.rows", matrix_gen(1, 4, -3, 3), [](Tape&, Var x, auto&) { return ad::softmax(x, 1); });
  op("softmax.cols", matrix_gen(1, 4, -3, 3), [](Tape&, Var x, auto&) { return ad::softmax(x, 0); });
  op("log_softmax", vector_gen(1, 6, -3, 3), [](Tape&, Var x, auto&) { return ad::log_softmax(x); });
  op("concat.vector", vector_gen(), [](Tape& t, Var x, auto& r) {
    return ad::concat({like(t, x, r), x, ad::scale(x, 2.0)}, 0);
  });
  op("concat.rows", matrix_gen(), [](Tape& t, Var x, auto& r) {
    return ad::concat({x, t.constant(random_tensor({2, x.shape()[1]}, r))}, 0);
  });
  op("concat.cols", matrix_gen(), [](Tape& t, Var x, auto& r) {
    return ad::concat({t.constant(random_tensor({x.shape()[0], 2}, r)), x}, 1);
  });
  op("stack_rows", vector_gen(), [](Tape& t, Var x, auto& r) {
    return ad::stack_rows({x, like(t, x, r), ad::tanh(x)});
  });
  op("row", matrix_gen(), [](Tape&, Var x, auto& r) { return ad::row(x, pick_dim(r, 0, x.shape()[0] - 1)); });
  op("slice", vector_gen(2, 8), [](Tape&, Var x, auto& r) {
    const std::size_t start = pick_dim(r, 0, x.shape()[0] - 1);
    return ad::slice(x, start, pick_dim(r, 1, x.shape()[0] - start));
  });
  op("pick", vector_gen(), [](Tape&, Var x, auto& r) { return ad::pick(x, pick_dim(r, 0, x.shape()[0] - 1)); });
  op("gather_rows", matrix_gen(2, 5), [](Tape&, Var x, auto& r) {
    std::vector<int> ids(pick_dim(r, 1, 6));
    for (auto& id : ids) id = static_cast<int>(pick_dim(r, 0, x.shape()[0] - 1));
    return ad::gather_rows(x, ids);
  });
  op("unfold", matrix_gen(1, 6), [](Tape&, Var x, auto& r) { return ad::unfold(x, pick_dim(r, 1, 5)); });
  op("max_rows", matrix_gen(1, 5), [](Tape&, Var x, auto&) { return ad::max_rows(x); });
  op("row_sum", matrix_gen(), [](Tape&, Var x, auto&) { return ad::row_sum(x); });
  op("sum", matrix_gen(), [](Tape&, Var x, auto&) { return ad::sum(x); });
  op("mean", matrix_gen(), [](Tape&, Var x, auto&) { return ad::mean(x); });
  op("squared_norm", matrix_gen(), [](Tape&, Var x, auto&) { return ad::squared_norm(x); });
  op("l2_norm", vector_gen(1, 6, 0.2, 1.0), [](Tape&, Var x, auto&) { return ad::l2_norm(x); });
  op("dropout", matrix_gen(), [](Tape&, Var x, auto& r) { return ad::dropout(x, 0.4, r); });

  // ---- composite paths ----
  out.push_back(check_params("lstm", instances, rng, [](std::mt19937_64& r) {
    ParamStore p;
    add_encoder_params(p, "e", tiny_encoder());
    randomize(p, r, 0.8);
    const auto tokens = random_tokens(r, kVocab);
    const std::uint64_t s = r();
    return grad_check_params(p, [&](Binding& b) {
      return contract(b.tape(), encode_instruction(b, "e", tokens).hidden, s);
    });
  }));
  out.push_back(check_params("block_embedding", instances, rng, [](std::mt19937_64& r) {
    ParamStore p;
    add_encoder_params(p, "e", tiny_encoder());
    randomize(p, r, 0.8);
    const Tensor features = random_tensor({pick_dim(r, 1, 5), 12}, r);
    const std::uint64_t s = r();
    return grad_check_params(p, [&](Binding& b) {
      return contract(b.tape(), embed_blocks(b, "e", b.tape().constant(features)), s);
    });
  }));
  for (AttentionKind kind : {AttentionKind::LastHidden, AttentionKind::Cnn, AttentionKind::Dual}) {
    out.push_back(check_params("attention." + std::string(to_string(kind)), instances, rng,
                               [kind](std::mt19937_64& r) {
      ParamStore p;
      const AttentionDims dims = tiny_attention(kind);
      add_encoder_params(p, "e", tiny_encoder());
      add_attention_params(p, "e", dims);
      add_role_params(p, "e", Role::Source, dims);
      add_role_params(p, "e", Role::Reference, dims);
      randomize(p, r, 0.8);
      const auto tokens = random_tokens(r, kVocab);
      const Tensor features = random_tensor({pick_dim(r, 1, 5), 12}, r);
      const std::uint64_t s = r();
      return grad_check_params(p, [&](Binding& b) {
        const auto enc = encode_instruction(b, "e", tokens);
        Var blocks = embed_blocks(b, "e", b.tape().constant(features));
        const auto src = align(b, dims, "e", Role::Source, blocks, enc);
        const auto ref = align(b, dims, "e", Role::Reference, blocks, enc);
        return ad::add(contract(b.tape(), src.scores, s), contract(b.tape(), ad::concat({ref.scores, ref.summary}), s + 1));
      });
    }));
  }
  out.push_back(check_params("offset_head", instances, rng, [](std::mt19937_64& r) {
    ParamStore p;
    add_offset_params(p, {4, 5});
    p.add("summary", Tensor({4}));
    randomize(p, r, 1.0);
    const std::uint64_t s = r();
    return grad_check_params(p, [&](Binding& b) { return contract(b.tape(), offset_mean(b, b("summary")), s); });
  }));
  out.push_back(check_params("joint_loss.expectation", instances, rng, [n = std::size_t{0}](std::mt19937_64& r) mutable {
    TrainConfig c;
    c.attention = static_cast<AttentionKind>(n % 3);
    c.joint = (n / 3) % 2 == 0;
    c.features = (n / 6) % 2 == 0 ? FeatureSet::Full : FeatureSet::CoordsOnly;
    ++n;
    c.word_dim = 3;
    c.hidden_dim = 4;
    c.block_dim = 3;
    c.cnn_filters = 2;
    c.offset_hidden = 3;
    const std::vector<std::string> words{"move", "the", "left", "block", "right", "of", "front"};
    Model model(c, Vocabulary::build(words));
    randomize(model.params(), r, 0.8);
    InstructionRecord rec;
    for (std::size_t k = 0, m = pick_dim(r, 1, 7); k < m; ++k) rec.instruction += words[pick_dim(r, 0, 6)] + " ";
    rec.world = random_world(r);
    rec.source = pick_dim(r, 0, rec.world.size() - 1);
    rec.target = rec.world.blocks[pick_dim(r, 0, rec.world.size() - 1)] + Vec3{1, 0, 0};
    const PreparedExample ex = model.prepare(rec);
    return grad_check_params(model.params(), [&](Binding& b) {
      const ModelOutputs o = model.forward(b, ex);
      Var expected = expected_target(block_distribution(o.reference_scores), o.positions, o.mu);
      return ad::add(source_loss(o.source_scores, ex.source), expectation_loss(expected, ex.target));
    });
  }));
  return out;
}

}  // namespace spatialref
