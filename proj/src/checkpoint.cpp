#include "hiccap/checkpoint.hpp"

#include <cstdio>
#include <fstream>

#include "binary_io.hpp"

namespace hiccap {

using nlohmann::json;

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write("HCKP", 4);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, m] : ckpt.tensors) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u32(out, 2);
    detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Index i = 0; i < m.size(); ++i) detail::put_f32(out, m.data()[i]);
  }
  const std::string meta = ckpt.metadata.dump();
  detail::put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  auto bad = [&](const std::string& what) { return Error(ErrorKind::SchemaMismatch, path.string() + ": " + what); };
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != "HCKP") throw bad("bad magic");
  std::uint32_t version = 0, count = 0;
  if (!detail::get_u32(in, version) || version != kCheckpointVersion) throw bad("unsupported version");
  if (!detail::get_u32(in, count)) throw bad("truncated header");
  Checkpoint ckpt;
  for (std::uint32_t k = 0; k < count; ++k) {
    std::uint32_t len = 0, rank = 0;
    std::string name;
    if (!detail::get_u32(in, len) || !detail::get_bytes(in, name, len)) throw bad("truncated tensor name");
    if (!detail::get_u32(in, rank) || rank < 1 || rank > 2) throw bad("tensor " + name + " has unsupported rank");
    std::uint32_t dims[2] = {1, 1};
    for (std::uint32_t r = 0; r < rank; ++r)
      if (!detail::get_u32(in, dims[2 - rank + r])) throw bad("truncated dims of " + name);
    MatrixF m(dims[0], dims[1]);
    for (Index i = 0; i < m.size(); ++i)
      if (!detail::get_f32(in, m.data()[i])) throw bad("truncated payload of " + name);
    if (!ckpt.tensors.emplace(std::move(name), std::move(m)).second) throw bad("duplicate tensor");
  }
  std::uint32_t meta_len = 0;
  std::string meta;
  if (!detail::get_u32(in, meta_len) || !detail::get_bytes(in, meta, meta_len)) throw bad("truncated metadata");
  if (in.peek() != std::char_traits<char>::eof()) throw bad("trailing bytes");
  try {
    ckpt.metadata = json::parse(meta);
  } catch (const json::exception& e) {
    throw bad(std::string("metadata: ") + e.what());
  }
  return ckpt;
}

json model_config_to_json(const ModelConfig& cfg) {
  return {
      {"dims", {{"text", cfg.dims.text}, {"audio", cfg.dims.audio}, {"video", cfg.dims.video}}},
      {"d_model", cfg.encoder.d_model},
      {"recurrent_hidden", cfg.encoder.recurrent_hidden},
      {"recurrent_layers", cfg.encoder.recurrent_layers},
      {"bidirectional", cfg.encoder.bidirectional},
      {"init_seed", cfg.encoder.seed},
      {"d_k", cfg.attention.d_k},
      {"n_heads", cfg.attention.n_heads},
      {"output_projection", cfg.attention.output_projection},
      {"pool_hidden", cfg.attention.pool_hidden},
      {"ordering", cfg.ordering.to_string()},
      {"modalities", cfg.active.to_string()},
      {"bn_momentum", cfg.batch_norm.momentum},
      {"bn_eps", cfg.batch_norm.eps},
      {"projection_dim", cfg.projection_dim},
      {"temperature", cfg.temperature},
  };
}

ModelConfig model_config_from_json(const json& j, const ModelConfig& defaults) {
  ModelConfig c = defaults;
  try {
    if (j.contains("dims")) {
      const json& d = j.at("dims");
      c.dims.text = d.value("text", c.dims.text);
      c.dims.audio = d.value("audio", c.dims.audio);
      c.dims.video = d.value("video", c.dims.video);
    }
    c.encoder.d_model = j.value("d_model", c.encoder.d_model);
    c.encoder.recurrent_hidden = j.value("recurrent_hidden", c.encoder.recurrent_hidden);
    c.encoder.recurrent_layers = j.value("recurrent_layers", c.encoder.recurrent_layers);
    c.encoder.bidirectional = j.value("bidirectional", c.encoder.bidirectional);
    c.encoder.seed = j.value("init_seed", c.encoder.seed);
    c.attention.d_k = j.value("d_k", c.attention.d_k);
    c.attention.n_heads = j.value("n_heads", c.attention.n_heads);
    c.attention.output_projection = j.value("output_projection", c.attention.output_projection);
    c.attention.pool_hidden = j.value("pool_hidden", c.attention.pool_hidden);
    if (j.contains("ordering")) c.ordering = ModalityOrdering::parse(j.at("ordering").get<std::string>());
    if (j.contains("modalities")) c.active = ModalitySet::parse(j.at("modalities").get<std::string>());
    c.batch_norm.momentum = j.value("bn_momentum", c.batch_norm.momentum);
    c.batch_norm.eps = j.value("bn_eps", c.batch_norm.eps);
    c.projection_dim = j.value("projection_dim", c.projection_dim);
    c.temperature = j.value("temperature", c.temperature);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("model config: ") + e.what());
  }
  return c;
}

std::string config_hash(const ModelConfig& cfg) {
  const std::string s = model_config_to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Checkpoint make_checkpoint(const Model& model, const AdamW<float>* optimizer, json extra) {
  Checkpoint ckpt;
  for (const auto& p : model.params().params()) ckpt.tensors.emplace(p.name, p.value);
  json meta = std::move(extra);
  meta["model"] = model_config_to_json(model.config());
  meta["config_hash"] = config_hash(model.config());
  if (optimizer) {
    json steps = json::object();
    for (const auto& [name, st] : optimizer->moments()) {
      ckpt.tensors.emplace("opt.m." + name, st.m);
      ckpt.tensors.emplace("opt.v." + name, st.v);
      steps[name] = st.step;
    }
    meta["optimizer"] = {{"lr", optimizer->lr()}, {"steps", optimizer->steps()}, {"param_steps", steps}};
  }
  ckpt.metadata = std::move(meta);
  return ckpt;
}

void restore_checkpoint(const Checkpoint& ckpt, Model& model, AdamW<float>* optimizer) {
  // Tensors are matched by name and shape, so a pretraining checkpoint loads into a
  // fine-tuning model of the same architecture even when seeds or orderings differ.
  std::map<std::string, MatrixF> state;
  for (const auto& p : model.params().params()) {
    auto it = ckpt.tensors.find(p.name);
    if (it == ckpt.tensors.end()) throw Error(ErrorKind::ShapeMismatch, "checkpoint lacks " + p.name);
    state.emplace(p.name, it->second);
  }
  model.load_state(state);
  if (!optimizer) return;
  auto& moments = optimizer->moments();
  moments.clear();
  if (!ckpt.metadata.contains("optimizer")) return;
  const json& o = ckpt.metadata.at("optimizer");
  optimizer->set_lr(o.value("lr", optimizer->lr()));
  optimizer->set_steps(o.value("steps", 0L));
  for (const auto& [name, step] : o.at("param_steps").items()) {
    AdamW<float>::Moments st;
    st.m = ckpt.tensors.at("opt.m." + name);
    st.v = ckpt.tensors.at("opt.v." + name);
    st.step = step.get<long>();
    moments.emplace(name, std::move(st));
  }
}

std::unique_ptr<Model> load_model(const Checkpoint& ckpt) {
  if (!ckpt.metadata.contains("model")) throw Error(ErrorKind::SchemaMismatch, "checkpoint has no model config");
  auto model = std::make_unique<Model>(model_config_from_json(ckpt.metadata.at("model")));
  restore_checkpoint(ckpt, *model);
  return model;
}

}  // namespace hiccap
