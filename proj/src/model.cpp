#include "spatialref/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace spatialref {

using ad::Tensor;
using ad::Var;

Model::Model(TrainConfig config, Vocabulary vocab)
    : config_(std::move(config)),
      vocab_(std::move(vocab)),
      source_tower_(config_.joint ? "enc" : "src"),
      target_tower_(config_.joint ? "enc" : "tgt") {
  config_.validate();
  const EncoderDims enc{vocab_.size(), config_.word_dim, config_.hidden_dim, feature_dim(config_.features),
                        config_.block_dim};
  const AttentionDims attn = attention_dims();
  add_encoder_params(params_, source_tower_, enc);
  add_attention_params(params_, source_tower_, attn);
  add_role_params(params_, source_tower_, Role::Source, attn);
  if (!config_.joint) {
    add_encoder_params(params_, target_tower_, enc);
    add_attention_params(params_, target_tower_, attn);
  }
  add_role_params(params_, target_tower_, Role::Reference, attn);
  add_offset_params(params_, {summary_dim(), config_.offset_hidden});
}

AttentionDims Model::attention_dims() const {
  return {config_.attention, config_.hidden_dim, config_.block_dim, config_.cnn_filters};
}

std::size_t Model::summary_dim() const { return context_dim(attention_dims()); }

PreparedExample Model::prepare(const std::string& instruction, const WorldState& world) const {
  PreparedExample ex;
  ex.tokens = tokenize(instruction, vocab_);
  ex.world = world;
  const std::size_t dim = feature_dim(config_.features);
  ex.features = Tensor({world.size(), dim}, feature_matrix(world, config_.features));
  return ex;
}

PreparedExample Model::prepare(const InstructionRecord& record) const {
  PreparedExample ex = prepare(record.instruction, record.world);
  if (record.source >= record.world.size()) throw IndexError("source index out of range");
  ex.source = record.source;
  ex.target = record.target;
  return ex;
}

ModelOutputs Model::forward(Binding& bind, const PreparedExample& ex, std::mt19937_64* dropout_rng) const {
  ad::Tape& tape = bind.tape();
  const AttentionDims dims = attention_dims();
  Var features = tape.constant(ex.features);

  const EncodedInstruction src_enc = encode_instruction(bind, source_tower_, ex.tokens, config_.dropout, dropout_rng);
  const Var src_blocks = embed_blocks(bind, source_tower_, features);
  const RoleAlignment source = align(bind, dims, source_tower_, Role::Source, src_blocks, src_enc);

  EncodedInstruction tgt_enc = src_enc;
  Var tgt_blocks = src_blocks;
  if (!config_.joint) {
    tgt_enc = encode_instruction(bind, target_tower_, ex.tokens, config_.dropout, dropout_rng);
    tgt_blocks = embed_blocks(bind, target_tower_, features);
  }
  const RoleAlignment reference = align(bind, dims, target_tower_, Role::Reference, tgt_blocks, tgt_enc);

  ModelOutputs out;
  out.source_scores = source.scores;
  out.reference_scores = reference.scores;
  out.reference_log_probs = ad::log_softmax(reference.scores);
  out.summary = reference.summary;
  out.mu = offset_mean(bind, reference.summary);
  out.positions = positions_tensor(tape, ex.world);
  return out;
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

Prediction predict(const Model& model, const PreparedExample& ex, bool sampled, std::mt19937_64* rng) {
  ad::Tape tape;
  tape.set_grad_enabled(false);
  Binding bind(tape, model.params());
  const ModelOutputs out = model.forward(bind, ex);

  Prediction p;
  p.source_dist = block_distribution(out.source_scores.value().data());
  p.source = argmax(p.source_dist);
  p.reference_dist = block_distribution(out.reference_scores.value().data());
  const auto& mu = out.mu.value();
  p.offset_mean = {mu[0], mu[1], mu[2]};
  if (sampled) {
    if (!rng) throw ConfigError("sampled prediction needs a random generator");
    p.target = predict_sample(p.reference_dist, ex.world, p.offset_mean, model.config().sigma_o, *rng);
  } else {
    p.target = predict_expectation(p.reference_dist, ex.world, p.offset_mean);
  }
  return p;
}

EnsemblePrediction ensemble_predict(std::span<const Model* const> members, const InstructionRecord& record,
                                    bool sampled, std::mt19937_64* rng) {
  if (members.empty()) throw ConfigError("ensemble needs at least one member");
  for (const Model* m : members.subspan(1))
    if (!(m->vocab() == members.front()->vocab()))
      throw ConfigError("ensemble members have incompatible vocabularies");
  EnsemblePrediction out;
  out.source_dist.assign(record.world.size(), 0.0);
  const double w = 1.0 / static_cast<double>(members.size());
  for (const Model* m : members) {
    const PreparedExample ex = m->prepare(record);
    Prediction p = predict(*m, ex, sampled, rng);
    for (std::size_t i = 0; i < out.source_dist.size(); ++i) out.source_dist[i] += w * p.source_dist[i];
    out.target = out.target + w * p.target.position;
    out.members.push_back(std::move(p));
  }
  out.source = argmax(out.source_dist);
  return out;
}

// ---- checkpoints ------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'S', 'R', 'C', 'K'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  nlohmann::ordered_json header;
  header["config"] = model.config().to_text();
  header["vocab"] = model.vocab().tokens();
  nlohmann::ordered_json params = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  const auto& store = model.params();
  for (std::size_t i = 0; i < store.size(); ++i) {
    params.push_back({{"name", store.name(i)}, {"shape", store[i].shape()}, {"offset", offset}});
    offset += store[i].size();
  }
  header["params"] = params;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(kMagic, 4);
  write_pod<std::uint32_t>(out, kCheckpointVersion);
  write_pod<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (std::size_t i = 0; i < store.size(); ++i)
    out.write(reinterpret_cast<const char*>(store[i].data().data()),
              static_cast<std::streamsize>(store[i].size() * sizeof(double)));
  if (!out) throw IoError("write failed for checkpoint " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw DataError("not a checkpoint file: " + path);
  const auto version = read_pod<std::uint32_t>(in);
  if (version == 0 || version > kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = read_pod<std::uint64_t>(in);
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw IoError("truncated checkpoint header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt checkpoint header: ") + e.what());
  }
  Vocabulary vocab;
  const auto tokens = header.at("vocab").get<std::vector<std::string>>();
  for (std::size_t i = 2; i < tokens.size(); ++i) vocab.add(tokens[i]);
  Model model(parse_config(header.at("config").get<std::string>()), std::move(vocab));

  auto& store = model.params();
  const auto& entries = header.at("params");
  if (entries.size() != store.size()) throw DataError("checkpoint parameter count does not match its config");
  std::vector<double> flat(store.scalar_count());
  in.read(reinterpret_cast<char*>(flat.data()), static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!in) throw IoError("truncated checkpoint payload");
  for (const auto& e : entries) {
    const std::size_t i = store.index(e.at("name").get<std::string>());
    if (e.at("shape").get<ad::Shape>() != store[i].shape())
      throw DataError("checkpoint shape mismatch for " + store.name(i));
    const auto off = e.at("offset").get<std::uint64_t>();
    if (off + store[i].size() > flat.size()) throw DataError("checkpoint offset out of range for " + store.name(i));
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), store[i].size(), store[i].data().begin());
  }
  return model;
}

}  // namespace spatialref
