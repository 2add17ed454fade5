#include "rest/core/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "rest/core/blob.hpp"
#include "rest/core/error.hpp"

namespace rest {

using nlohmann::json;

void FrameFeatureTensor::validate() const {
  if (spatial_values.size() != frames * spatial * dim || cls_values.size() != frames * dim) {
    throw Error(ErrorCode::kDimMismatch, "frame feature tensor buffers disagree with its shape");
  }
  auto finite = [](double x) { return std::isfinite(x); };
  if (!std::all_of(spatial_values.begin(), spatial_values.end(), finite) ||
      !std::all_of(cls_values.begin(), cls_values.end(), finite)) {
    throw Error(ErrorCode::kNumeric, "frame features contain non-finite values");
  }
}

std::optional<std::size_t> DatasetManifest::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void finalize_manifest(DatasetManifest& m) {
  m.index_.clear();
  std::unordered_set<std::string> classes(m.classes.begin(), m.classes.end());
  if (classes.size() != m.classes.size()) {
    throw Error(ErrorCode::kDuplicateId, "duplicate class name in manifest");
  }
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    if (!m.index_.emplace(r.id, i).second) {
      throw Error(ErrorCode::kDuplicateId, "duplicate id: " + r.id);
    }
    if (r.frame_count == 0 || r.frame_embeddings.size() != r.frame_count ||
        r.features.frames != r.frame_count) {
      throw Error(ErrorCode::kDimMismatch, "frame count mismatch for video " + r.id);
    }
    for (const auto& e : r.frame_embeddings) {
      if (e.dim() != m.dim) throw Error(ErrorCode::kDimMismatch, "embedding dim mismatch for " + r.id);
    }
    if (r.features.dim != m.feature_dim || r.features.spatial != m.spatial_tokens) {
      throw Error(ErrorCode::kDimMismatch, "feature shape mismatch for video " + r.id);
    }
    r.features.validate();
    if (r.label && !m.classes.empty() && !classes.count(*r.label)) {
      throw Error(ErrorCode::kUnknownId, "label '" + *r.label + "' of video " + r.id +
                                             " is not in the class list");
    }
  }
}

namespace {

template <typename T>
T required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw Error(ErrorCode::kParse, where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, where + ": bad value for '" + key + "': " + e.what());
  }
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingFile, "missing manifest: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, "manifest " + path.string() + ": " + e.what());
  }

  DatasetManifest m;
  m.root = path.parent_path();
  m.dim = required<std::size_t>(doc, "dim", "manifest");
  m.feature_dim = required<std::size_t>(doc, "feature_dim", "manifest");
  if (m.dim == 0 || m.feature_dim == 0) throw Error(ErrorCode::kDimMismatch, "manifest dims must be positive");
  if (doc.contains("classes")) m.classes = doc["classes"].get<std::vector<std::string>>();
  if (!doc.contains("videos") || !doc["videos"].is_array()) {
    throw Error(ErrorCode::kParse, "manifest: 'videos' must be an array");
  }

  std::unordered_set<std::string> seen;
  bool spatial_known = false;
  for (const auto& v : doc["videos"]) {
    VideoRecord r;
    r.id = required<std::string>(v, "id", "video entry");
    if (!seen.insert(r.id).second) throw Error(ErrorCode::kDuplicateId, "duplicate id: " + r.id);
    const std::string where = "video " + r.id;
    r.frame_count = required<std::size_t>(v, "frames", where);
    r.embedding_file = required<std::string>(v, "embedding_file", where);
    r.feature_file = required<std::string>(v, "feature_file", where);
    if (v.contains("label") && !v["label"].is_null()) r.label = v["label"].get<std::string>();
    if (r.frame_count == 0) throw Error(ErrorCode::kDimMismatch, where + ": zero frames");

    const Blob emb = read_blob(m.root / r.embedding_file);
    if (emb.count != r.frame_count || emb.dim != m.dim) {
      throw Error(ErrorCode::kDimMismatch, where + ": embedding blob shape " +
                                               std::to_string(emb.count) + "x" +
                                               std::to_string(emb.dim) + " does not match");
    }
    for (std::size_t t = 0; t < emb.count; ++t) {
      auto row = emb.row(t);
      std::vector<double> values(row.begin(), row.end());
      const double norm = l2_norm(values);
      if (std::abs(norm - 1.0) > 1e-5) {
        m.warnings.push_back(where + ": frame " + std::to_string(t) + " renormalized (norm " +
                             std::to_string(norm) + ")");
      }
      if (std::abs(norm - 1.0) <= 1e-6) {
        r.frame_embeddings.push_back(UnitEmbedding::from_unit(std::move(values)));
      } else {
        r.frame_embeddings.push_back(UnitEmbedding::normalize(values));
      }
    }

    const Blob feat = read_blob(m.root / r.feature_file);
    if (feat.dim != m.feature_dim || feat.count % r.frame_count != 0 ||
        feat.count / r.frame_count < 2) {
      throw Error(ErrorCode::kDimMismatch, where + ": feature blob shape does not match");
    }
    const std::size_t s = feat.count / r.frame_count - 1;
    if (!spatial_known) {
      m.spatial_tokens = s;
      spatial_known = true;
    } else if (s != m.spatial_tokens) {
      throw Error(ErrorCode::kDimMismatch, where + ": spatial token count differs across videos");
    }
    r.features = FrameFeatureTensor(r.frame_count, s, m.feature_dim);
    for (std::size_t t = 0; t < r.frame_count; ++t) {
      for (std::size_t j = 0; j <= s; ++j) {
        auto row = feat.row(t * (s + 1) + j);
        for (std::size_t c = 0; c < m.feature_dim; ++c) {
          if (j < s) {
            r.features.at(t, j, c) = row[c];
          } else {
            r.features.cls(t, c) = row[c];
          }
        }
      }
    }
    m.records.push_back(std::move(r));
  }
  finalize_manifest(m);
  return m;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  const auto root = path.parent_path();
  json doc;
  doc["dim"] = m.dim;
  doc["feature_dim"] = m.feature_dim;
  if (!m.classes.empty()) doc["classes"] = m.classes;
  doc["videos"] = json::array();
  for (const auto& r : m.records) {
    json v;
    v["id"] = r.id;
    v["frames"] = r.frame_count;
    v["embedding_file"] = r.embedding_file;
    v["feature_file"] = r.feature_file;
    if (r.label) v["label"] = *r.label;
    doc["videos"].push_back(v);

    std::vector<float> emb;
    for (const auto& e : r.frame_embeddings) {
      for (double x : e.values()) emb.push_back(static_cast<float>(x));
    }
    std::filesystem::create_directories((root / r.embedding_file).parent_path());
    write_blob(root / r.embedding_file, static_cast<std::uint32_t>(r.frame_embeddings.size()),
               static_cast<std::uint32_t>(m.dim), emb);

    const auto& f = r.features;
    std::vector<float> feat;
    feat.reserve(f.frames * (f.spatial + 1) * f.dim);
    for (std::size_t t = 0; t < f.frames; ++t) {
      for (std::size_t s = 0; s < f.spatial; ++s) {
        for (std::size_t c = 0; c < f.dim; ++c) feat.push_back(static_cast<float>(f.at(t, s, c)));
      }
      for (std::size_t c = 0; c < f.dim; ++c) feat.push_back(static_cast<float>(f.cls(t, c)));
    }
    std::filesystem::create_directories((root / r.feature_file).parent_path());
    write_blob(root / r.feature_file, static_cast<std::uint32_t>(f.frames * (f.spatial + 1)),
               static_cast<std::uint32_t>(f.dim), feat);
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kMissingFile, "cannot write manifest: " + path.string());
  out << doc.dump(2) << "\n";
}

}  // namespace rest
