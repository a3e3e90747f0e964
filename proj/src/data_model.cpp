#include "hiccap/data_model.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "binary_io.hpp"
#include "json_codec.hpp"
#include "hiccap/error.hpp"

namespace hiccap {

using nlohmann::json;

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::InvariantViolation: return "InvariantViolation";
    case ErrorKind::EvenAnnotatorCount: return "EvenAnnotatorCount";
    case ErrorKind::NoLabels: return "NoLabels";
    case ErrorKind::WrongModality: return "WrongModality";
    case ErrorKind::EmptySequence: return "EmptySequence";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteLogit: return "NonFiniteLogit";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::EmptyPartition: return "EmptyPartition";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::AllMasked: return "AllMasked";
    case ErrorKind::EmptyMask: return "EmptyMask";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::NoPositivesAnywhere: return "NoPositivesAnywhere";
    case ErrorKind::NoPositives: return "NoPositives";
    case ErrorKind::DegenerateMarginals: return "DegenerateMarginals";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Io: return "IoError";
  }
  return "Unknown";
}

const char* to_string(Modality m) {
  switch (m) {
    case Modality::Text: return "text";
    case Modality::Audio: return "audio";
    case Modality::Video: return "video";
  }
  return "?";
}

const char* to_string(Category c) {
  switch (c) {
    case Category::MatureHumor: return "mature_humor";
    case Category::GoryHumor: return "gory_humor";
    case Category::SlapstickHumor: return "slapstick_humor";
    case Category::Sarcasm: return "sarcasm";
  }
  return "?";
}

const char* to_string(TextSource s) {
  switch (s) {
    case TextSource::Subtitle: return "subtitle";
    case TextSource::Caption: return "caption";
    case TextSource::None: return "none";
  }
  return "?";
}

char modality_letter(Modality m) { return "tav"[index_of(m)]; }

Modality modality_from_letter(char c) {
  switch (c) {
    case 't': return Modality::Text;
    case 'a': return Modality::Audio;
    case 'v': return Modality::Video;
    default: throw Error(ErrorKind::InvalidConfig, std::string("unknown modality letter '") + c + "'");
  }
}

TextSource text_source_from_string(std::string_view s) {
  if (s == "subtitle") return TextSource::Subtitle;
  if (s == "caption") return TextSource::Caption;
  if (s == "none") return TextSource::None;
  throw Error(ErrorKind::SchemaMismatch, "unknown text_source '" + std::string(s) + "'");
}

LabelSet LabelSet::from_categories(const std::array<bool, kNumCategories>& cats) {
  LabelSet l;
  l.categories = cats;
  l.binary = derive_binary(l);
  return l;
}

bool derive_binary(const LabelSet& labels) {
  for (bool c : labels.categories)
    if (c) return true;
  return false;
}

Index FeatureDims::of(Modality m) const {
  switch (m) {
    case Modality::Text: return text;
    case Modality::Audio: return audio;
    case Modality::Video: return video;
  }
  return 0;
}

FeatureSequence ClipRecord::text_or_zeros(Index text_dim) const {
  if (text) return *text;
  return FeatureSequence::zeros(Modality::Text, text_dim);
}

ModalityOrdering ModalityOrdering::standard() {
  return ModalityOrdering{{{
      {Modality::Audio, Modality::Video},
      {Modality::Text, Modality::Video},
      {Modality::Text, Modality::Audio},
  }}};
}

ModalityOrdering ModalityOrdering::cyclic() {
  return ModalityOrdering{{{
      {Modality::Video, Modality::Audio},
      {Modality::Text, Modality::Video},
      {Modality::Audio, Modality::Text},
  }}};
}

std::vector<ModalityOrdering> ModalityOrdering::all() {
  std::vector<ModalityOrdering> out;
  auto swap_if = [](std::pair<Modality, Modality> p, bool s) {
    return s ? std::pair{p.second, p.first} : p;
  };
  const auto base = standard();
  for (int mask = 0; mask < 8; ++mask) {
    ModalityOrdering o;
    for (int t = 0; t < 3; ++t) o.contexts[t] = swap_if(base.contexts[t], (mask >> t) & 1);
    out.push_back(o);
  }
  return out;
}

ModalityOrdering ModalityOrdering::parse(std::string_view text) {
  ModalityOrdering o = cyclic();
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    auto item = text.substr(pos, end - pos);
    if (item.size() != 4 || item[1] != ':')
      throw Error(ErrorKind::InvalidConfig, "bad ordering item '" + std::string(item) + "'");
    Modality target = modality_from_letter(item[0]);
    o.contexts[index_of(target)] = {modality_from_letter(item[2]), modality_from_letter(item[3])};
    pos = end + 1;
  }
  if (!o.valid()) throw Error(ErrorKind::InvalidConfig, "invalid ordering '" + std::string(text) + "'");
  return o;
}

std::string ModalityOrdering::to_string() const {
  std::string s;
  for (Modality m : kModalities) {
    if (!s.empty()) s += ',';
    s += modality_letter(m);
    s += ':';
    s += modality_letter(contexts[index_of(m)].first);
    s += modality_letter(contexts[index_of(m)].second);
  }
  return s;
}

bool ModalityOrdering::valid() const {
  for (Modality m : kModalities) {
    auto [a, b] = contexts[index_of(m)];
    if (a == b || a == m || b == m) return false;
  }
  return true;
}

namespace {

void check_sequence(const FeatureSequence& seq, Modality slot, Index dim, const std::string& field,
                    std::vector<std::string>& out) {
  if (seq.modality() != slot)
    out.push_back(field + ": modality tag is " + to_string(seq.modality()) + ", expected " + to_string(slot));
  if (seq.length() < 1) out.push_back(field + ": length T must be >= 1");
  if (seq.dim() != dim)
    out.push_back(field + ": dim " + std::to_string(seq.dim()) + " != declared " + std::to_string(dim));
  if (!seq.data().allFinite()) out.push_back(field + ": entries must be finite");
}

}  // namespace

std::vector<std::string> validate_clip(const ClipRecord& record, const FeatureDims& dims) {
  std::vector<std::string> out;
  if (record.clip_id.empty()) out.push_back("clip_id: must be non-empty");
  if (record.text_source == TextSource::None && record.text)
    out.push_back("text: text must be absent when text_source is none");
  if (record.text_source != TextSource::None && !record.text)
    out.push_back("text: text must be present when text_source is " +
                  std::string(to_string(record.text_source)));
  if (record.text) check_sequence(*record.text, Modality::Text, dims.text, "text", out);
  check_sequence(record.audio, Modality::Audio, dims.audio, "audio", out);
  check_sequence(record.video, Modality::Video, dims.video, "video", out);

  if (record.labels) {
    const LabelSet& l = *record.labels;
    if (l.binary != derive_binary(l)) out.push_back("labels.binary: binary != OR(categories)");
    if (l.per_modality) {
      for (int c = 0; c < kNumCategories; ++c) {
        const auto& row = (*l.per_modality)[c];
        bool any = row[0] || row[1] || row[2];
        if (any != l.categories[c])
          out.push_back(std::string("labels.per_modality.") + to_string(static_cast<Category>(c)) +
                        ": category != OR(per_modality)");
      }
    }
  }
  return out;
}

void write_feature_file(const std::filesystem::path& path, const FeatureSequence& seq) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write("HCMF", 4);
  detail::put_u32(out, kFeatureFileVersion);
  detail::put_u8(out, static_cast<std::uint8_t>(seq.modality()));
  detail::put_u32(out, static_cast<std::uint32_t>(seq.length()));
  detail::put_u32(out, static_cast<std::uint32_t>(seq.dim()));
  const MatrixF& m = seq.data();
  for (Index i = 0; i < m.size(); ++i) detail::put_f32(out, m.data()[i]);
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

FeatureSequence read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != "HCMF")
    throw Error(ErrorKind::SchemaMismatch, path.string() + ": bad magic");
  std::uint32_t version = 0, t = 0, d = 0;
  std::uint8_t code = 0;
  if (!detail::get_u32(in, version) || version != kFeatureFileVersion)
    throw Error(ErrorKind::SchemaMismatch, path.string() + ": unsupported version");
  if (!detail::get_u8(in, code) || code > 2)
    throw Error(ErrorKind::SchemaMismatch, path.string() + ": bad modality code");
  if (!detail::get_u32(in, t) || !detail::get_u32(in, d))
    throw Error(ErrorKind::SchemaMismatch, path.string() + ": truncated header");
  MatrixF m(t, d);
  for (Index i = 0; i < m.size(); ++i)
    if (!detail::get_f32(in, m.data()[i]))
      throw Error(ErrorKind::SchemaMismatch, path.string() + ": truncated payload");
  if (in.peek() != std::char_traits<char>::eof())
    throw Error(ErrorKind::SchemaMismatch, path.string() + ": trailing bytes");
  return FeatureSequence(static_cast<Modality>(code), std::move(m));
}

namespace detail {

json labels_to_json(const LabelSet& l) {
  json j;
  for (int c = 0; c < kNumCategories; ++c) j[to_string(static_cast<Category>(c))] = l.categories[c] ? 1 : 0;
  j["binary"] = l.binary ? 1 : 0;
  if (l.per_modality) {
    json pm;
    for (int c = 0; c < kNumCategories; ++c) {
      const auto& row = (*l.per_modality)[c];
      pm[to_string(static_cast<Category>(c))] = {row[0] ? 1 : 0, row[1] ? 1 : 0, row[2] ? 1 : 0};
    }
    j["per_modality"] = pm;
  }
  return j;
}

namespace {
bool flag(const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number_integer()) {
    auto i = v.get<int>();
    if (i == 0 || i == 1) return i == 1;
  }
  throw Error(ErrorKind::SchemaMismatch, "label flag must be 0/1 or boolean");
}
}  // namespace

LabelSet labels_from_json(const json& j) {
  LabelSet l;
  for (int c = 0; c < kNumCategories; ++c) l.categories[c] = flag(j.at(to_string(static_cast<Category>(c))));
  l.binary = j.contains("binary") ? flag(j.at("binary")) : derive_binary(l);
  if (j.contains("per_modality") && !j.at("per_modality").is_null()) {
    PerModalityFlags pm{};
    const json& p = j.at("per_modality");
    for (int c = 0; c < kNumCategories; ++c) {
      const json& row = p.at(to_string(static_cast<Category>(c)));
      if (!row.is_array() || row.size() != 3)
        throw Error(ErrorKind::SchemaMismatch, "per_modality rows need 3 flags");
      for (int k = 0; k < 3; ++k) pm[c][k] = flag(row[k]);
    }
    l.per_modality = pm;
  }
  return l;
}

}  // namespace detail

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  DatasetManifest m;
  try {
    json j = json::parse(in);
    m.version = j.at("version").get<int>();
    if (m.version != kManifestVersion)
      throw Error(ErrorKind::SchemaMismatch, "manifest version " + std::to_string(m.version));
    const json& dims = j.at("dims");
    m.dims.text = dims.at("text").get<Index>();
    m.dims.audio = dims.at("audio").get<Index>();
    m.dims.video = dims.at("video").get<Index>();
    for (const json& c : j.at("clips")) {
      ManifestEntry e;
      e.clip_id = c.at("clip_id").get<std::string>();
      e.video_id = c.value("video_id", e.clip_id);
      if (c.contains("text_path") && !c.at("text_path").is_null()) e.text_path = c.at("text_path").get<std::string>();
      e.text_source = text_source_from_string(c.at("text_source").get<std::string>());
      e.audio_path = c.at("audio_path").get<std::string>();
      e.video_path = c.at("video_path").get<std::string>();
      if (c.contains("labels") && !c.at("labels").is_null()) e.labels = detail::labels_from_json(c.at("labels"));
      m.clips.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::SchemaMismatch, path.string() + ": " + ex.what());
  }
  std::set<std::string> ids;
  for (const auto& e : m.clips)
    if (!ids.insert(e.clip_id).second)
      throw Error(ErrorKind::SchemaMismatch, "duplicate clip_id " + e.clip_id);
  return m;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  json j;
  j["version"] = manifest.version;
  j["dims"] = {{"text", manifest.dims.text}, {"audio", manifest.dims.audio}, {"video", manifest.dims.video}};
  j["clips"] = json::array();
  for (const auto& e : manifest.clips) {
    json c;
    c["clip_id"] = e.clip_id;
    c["video_id"] = e.video_id;
    c["text_path"] = e.text_path ? json(*e.text_path) : json(nullptr);
    c["text_source"] = to_string(e.text_source);
    c["audio_path"] = e.audio_path;
    c["video_path"] = e.video_path;
    c["labels"] = e.labels ? detail::labels_to_json(*e.labels) : json(nullptr);
    j["clips"].push_back(std::move(c));
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

}  // namespace hiccap
