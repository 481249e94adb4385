#include "nfb/dataset.h"

#include <algorithm>
#include <set>
#include <unordered_set>

#include "nfb/binary_io.h"
#include "nfb/error.h"

namespace nfb {

using nlohmann::ordered_json;

std::string_view ToString(ViewSource source) {
  switch (source) {
    case ViewSource::kGroundTruth: return "gt";
    case ViewSource::kRendered: return "rendered";
    case ViewSource::kGenerated: return "generated";
  }
  return "?";
}

std::string_view ToString(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

ViewSource ParseViewSource(std::string_view text) {
  if (text == "gt") return ViewSource::kGroundTruth;
  if (text == "rendered") return ViewSource::kRendered;
  if (text == "generated") return ViewSource::kGenerated;
  Fail(ErrorKind::kValidationError, "unknown view source '" + std::string(text) + "'");
}

Split ParseSplit(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  Fail(ErrorKind::kValidationError, "unknown split '" + std::string(text) + "'");
}

std::string ViewSourceSet::ToString() const {
  std::string out;
  for (auto s : {ViewSource::kGroundTruth, ViewSource::kRendered, ViewSource::kGenerated}) {
    if (!Contains(s)) continue;
    if (!out.empty()) out += ',';
    out += nfb::ToString(s);
  }
  return out;
}

ViewSourceSet ViewSourceSet::Parse(std::string_view text) {
  ViewSourceSet set;
  while (!text.empty()) {
    const auto comma = text.find(',');
    set.Insert(ParseViewSource(text.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (set.empty()) Fail(ErrorKind::kValidationError, "empty view source set");
  return set;
}

namespace {

[[noreturn]] void BadRecord(const std::string& id, const std::string& field,
                            const std::string& problem) {
  Fail(ErrorKind::kValidationError, "record '" + id + "', field '" + field + "': " + problem);
}

void CheckVector(const Vector& v, std::size_t dim, const std::string& id,
                 const std::string& field) {
  if (v.dim() != dim) {
    BadRecord(id, field, "dim " + std::to_string(v.dim()) + ", expected " + std::to_string(dim));
  }
  if (!AllFinite<float>(v.values())) BadRecord(id, field, "non-finite value");
}

std::size_t RecordFloats(const Dataset& d, std::size_t views, bool caption) {
  return d.nerf_dim + (views + (caption ? 1 : 0)) * d.clip_dim;
}

}  // namespace

void Dataset::Validate() const {
  if (clip_dim == 0) Fail(ErrorKind::kValidationError, "clip_dim must be positive");
  std::unordered_set<std::string> vocab;
  for (const auto& c : classes) {
    if (!vocab.insert(c).second) {
      Fail(ErrorKind::kValidationError, "duplicate class '" + c + "' in vocabulary");
    }
  }
  std::unordered_set<std::string> ids;
  for (const auto& r : records) {
    if (r.id.empty()) Fail(ErrorKind::kValidationError, "record with empty id");
    if (!ids.insert(r.id).second) BadRecord(r.id, "id", "duplicate id");
    if (!vocab.contains(r.class_label)) {
      BadRecord(r.id, "label", "class '" + r.class_label + "' not in vocabulary");
    }
    CheckVector(r.nerf_embedding, nerf_dim, r.id, "nerf_embedding");
    if (r.views.empty()) BadRecord(r.id, "views", "at least one view embedding required");
    for (std::size_t v = 0; v < r.views.size(); ++v) {
      CheckVector(r.views[v].embedding, clip_dim, r.id, "views[" + std::to_string(v) + "]");
    }
    if (r.caption_embedding) CheckVector(*r.caption_embedding, clip_dim, r.id, "caption");
  }
  std::unordered_set<std::string> anchored;
  for (const auto& a : anchors) {
    if (!vocab.contains(a.class_label)) {
      Fail(ErrorKind::kValidationError, "anchor for unknown class '" + a.class_label + "'");
    }
    if (!anchored.insert(a.class_label).second) {
      Fail(ErrorKind::kValidationError, "duplicate anchor for class '" + a.class_label + "'");
    }
    if (a.embedding.dim() != clip_dim || !AllFinite<float>(a.embedding.values())) {
      Fail(ErrorKind::kValidationError, "anchor '" + a.class_label + "' is malformed");
    }
  }
}

EncodedDataset EncodeDataset(const Dataset& dataset, std::string_view blob_name) {
  dataset.Validate();
  EncodedDataset out;
  out.blob = BlobHeader();

  // Anchors first, then records in order; a truncated blob therefore always
  // cuts into a record.
  ordered_json anchors = ordered_json::array();
  for (const auto& a : dataset.anchors) {
    anchors.push_back({{"class", a.class_label}, {"offset", out.blob.size()}});
    AppendF32(out.blob, a.embedding.values());
  }
  std::size_t counts[3] = {0, 0, 0};
  ordered_json records = ordered_json::array();
  for (const auto& r : dataset.records) {
    ordered_json views = ordered_json::array();
    for (const auto& v : r.views) views.push_back(ToString(v.source));
    records.push_back({{"id", r.id},
                       {"label", r.class_label},
                       {"split", ToString(r.split)},
                       {"offset", out.blob.size()},
                       {"views", std::move(views)},
                       {"caption", r.caption_embedding.has_value()}});
    AppendF32(out.blob, r.nerf_embedding.values());
    for (const auto& v : r.views) AppendF32(out.blob, v.embedding.values());
    if (r.caption_embedding) AppendF32(out.blob, r.caption_embedding->values());
    ++counts[static_cast<int>(r.split)];
  }

  ordered_json manifest = {
      {"format", "nfbridge-dataset"},
      {"format_version", kManifestVersion},
      {"blob", blob_name},
      {"blob_bytes", out.blob.size()},
      {"nerf_dim", dataset.nerf_dim},
      {"clip_dim", dataset.clip_dim},
      {"classes", dataset.classes},
      {"splits", {{"train", counts[0]}, {"val", counts[1]}, {"test", counts[2]}}},
      {"provenance", dataset.provenance},
      {"anchors", std::move(anchors)},
      {"records", std::move(records)},
  };
  out.manifest = manifest.dump(1) + "\n";
  return out;
}

namespace {

struct Interval {
  std::size_t begin;
  std::size_t end;
  std::string owner;
};

template <typename T>
T Field(const ordered_json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    Fail(ErrorKind::kValidationError, where + ": missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    Fail(ErrorKind::kValidationError, where + ": field '" + key + "' has the wrong type");
  }
}

Vector ReadVector(std::string_view blob, std::size_t offset, std::size_t dim) {
  Vector v(dim);
  ByteReader reader(blob);
  reader.Seek(offset);
  reader.ReadF32(v.values());
  return v;
}

}  // namespace

Dataset DecodeDataset(std::string_view manifest_text, std::string_view blob) {
  ordered_json manifest;
  try {
    manifest = ordered_json::parse(manifest_text);
  } catch (const nlohmann::json::parse_error& e) {
    Fail(ErrorKind::kParseError, std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!manifest.is_object()) Fail(ErrorKind::kParseError, "manifest must be a JSON object");
  const auto version = Field<std::uint32_t>(manifest, "format_version", "manifest");
  if (version != kManifestVersion) {
    Fail(ErrorKind::kVersionError, "unsupported manifest version " + std::to_string(version));
  }
  CheckBlobHeader(blob, "embedding blob");
  const auto declared = Field<std::size_t>(manifest, "blob_bytes", "manifest");

  Dataset d;
  d.nerf_dim = Field<std::size_t>(manifest, "nerf_dim", "manifest");
  d.clip_dim = Field<std::size_t>(manifest, "clip_dim", "manifest");
  d.classes = Field<std::vector<std::string>>(manifest, "classes", "manifest");
  if (manifest.contains("provenance")) d.provenance = manifest["provenance"];

  std::vector<Interval> used;
  auto claim = [&](std::size_t offset, std::size_t floats, const std::string& owner,
                   const std::string& field) {
    const std::size_t bytes = floats * 4;
    if (offset < kBlobHeaderBytes || offset > blob.size() || bytes > blob.size() - offset) {
      if (owner.starts_with("anchor ")) {
        Fail(ErrorKind::kValidationError, owner + ": offset " + std::to_string(offset) +
                                              " + " + std::to_string(bytes) +
                                              " bytes is outside the blob");
      }
      BadRecord(owner, field,
                "offset " + std::to_string(offset) + " + " + std::to_string(bytes) +
                    " bytes is outside the " + std::to_string(blob.size()) + "-byte blob");
    }
    used.push_back({offset, offset + bytes, owner});
  };

  const auto& records = manifest.contains("records") ? manifest["records"] : ordered_json::array();
  if (!records.is_array()) Fail(ErrorKind::kValidationError, "manifest: 'records' must be an array");
  std::size_t counts[3] = {0, 0, 0};
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& jr = records[i];
    const std::string where = "records[" + std::to_string(i) + "]";
    ObjectRecord r;
    r.id = Field<std::string>(jr, "id", where);
    r.class_label = Field<std::string>(jr, "label", where);
    try {
      r.split = ParseSplit(Field<std::string>(jr, "split", where));
    } catch (const Error& e) {
      BadRecord(r.id, "split", e.what());
    }
    const auto offset = Field<std::size_t>(jr, "offset", where);
    const auto sources = Field<std::vector<std::string>>(jr, "views", where);
    const bool has_caption = Field<bool>(jr, "caption", where);
    claim(offset, RecordFloats(d, sources.size(), has_caption), r.id, "offset");

    std::size_t pos = offset;
    r.nerf_embedding = ReadVector(blob, pos, d.nerf_dim);
    pos += d.nerf_dim * 4;
    for (std::size_t v = 0; v < sources.size(); ++v) {
      ViewEmbedding view;
      try {
        view.source = ParseViewSource(sources[v]);
      } catch (const Error& e) {
        BadRecord(r.id, "views[" + std::to_string(v) + "]", e.what());
      }
      view.embedding = ReadVector(blob, pos, d.clip_dim);
      pos += d.clip_dim * 4;
      r.views.push_back(std::move(view));
    }
    if (has_caption) r.caption_embedding = ReadVector(blob, pos, d.clip_dim);
    ++counts[static_cast<int>(r.split)];
    d.records.push_back(std::move(r));
  }

  if (manifest.contains("anchors")) {
    const auto& anchors = manifest["anchors"];
    if (!anchors.is_array()) Fail(ErrorKind::kValidationError, "manifest: 'anchors' must be an array");
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      const std::string where = "anchors[" + std::to_string(i) + "]";
      ClassAnchor a;
      a.class_label = Field<std::string>(anchors[i], "class", where);
      const auto offset = Field<std::size_t>(anchors[i], "offset", where);
      claim(offset, d.clip_dim, "anchor " + a.class_label, "offset");
      a.embedding = ReadVector(blob, offset, d.clip_dim);
      d.anchors.push_back(std::move(a));
    }
  }

  std::sort(used.begin(), used.end(),
            [](const Interval& a, const Interval& b) { return a.begin < b.begin; });
  for (std::size_t i = 1; i < used.size(); ++i) {
    if (used[i].begin < used[i - 1].end) {
      Fail(ErrorKind::kValidationError, "blob regions of '" + used[i - 1].owner + "' and '" +
                                            used[i].owner + "' overlap");
    }
  }
  if (declared != blob.size()) {
    Fail(ErrorKind::kValidationError, "blob is " + std::to_string(blob.size()) +
                                          " bytes, manifest declares " + std::to_string(declared));
  }
  if (manifest.contains("splits")) {
    const auto& s = manifest["splits"];
    const std::size_t expect[3] = {Field<std::size_t>(s, "train", "splits"),
                                   Field<std::size_t>(s, "val", "splits"),
                                   Field<std::size_t>(s, "test", "splits")};
    if (expect[0] != counts[0] || expect[1] != counts[1] || expect[2] != counts[2]) {
      Fail(ErrorKind::kValidationError, "split sizes in manifest do not match the records");
    }
  }
  d.Validate();
  return d;
}

Dataset LoadDataset(const std::filesystem::path& manifest_path,
                    const std::filesystem::path& blob_path) {
  const std::string manifest = ReadFile(manifest_path);
  const std::string blob = ReadFile(blob_path);
  return DecodeDataset(manifest, blob);
}

void SaveDataset(const Dataset& dataset, const std::filesystem::path& manifest_path,
                 const std::filesystem::path& blob_path) {
  const auto encoded = EncodeDataset(dataset, blob_path.filename().string());
  WriteFile(blob_path, encoded.blob);
  WriteFile(manifest_path, encoded.manifest);
}

Dataset LoadDatasetDir(const std::filesystem::path& dir) {
  return LoadDataset(dir / kManifestFileName, dir / kBlobFileName);
}

void SaveDatasetDir(const Dataset& dataset, const std::filesystem::path& dir) {
  SaveDataset(dataset, dir / kManifestFileName, dir / kBlobFileName);
}

std::vector<ObjectRecord> RecordsInSplit(const Dataset& dataset, Split split) {
  std::vector<ObjectRecord> out;
  for (const auto& r : dataset.records) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

}  // namespace nfb
