// Copyright 2026 The Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cbm/data_model.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "cbm/errors.h"
#include "json.hpp"

namespace cbm {
namespace {

using json = nlohmann::json;

constexpr char kMagic[4] = {'C', 'B', 'V', '1'};
constexpr std::uint8_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 13;

void PutU32(std::string* out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out->push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t GetU32(std::string_view bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i]))
         << (8 * i);
  }
  return v;
}

json ParseJson(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    Fail(ErrorKind::kFormat, what + ": invalid JSON: " + e.what());
  }
}

}  // namespace

const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return "usage error";
    case ErrorKind::kSelection: return "selection error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kReference: return "reference error";
    case ErrorKind::kPartition: return "partition error";
    case ErrorKind::kContract: return "contract error";
    case ErrorKind::kSampling: return "sampling error";
    case ErrorKind::kLookup: return "lookup error";
    case ErrorKind::kDivergence: return "divergence error";
  }
  return "error";
}

EmbeddingMatrix::EmbeddingMatrix(MatrixXr data, std::vector<std::string> ids)
    : data_(std::move(data)), ids_(std::move(ids)) {
  if (data_.rows() < 1 || data_.cols() < 1) {
    Fail(ErrorKind::kFormat, "embedding matrix must have N >= 1 and d >= 1");
  }
  if (static_cast<Eigen::Index>(ids_.size()) != data_.rows()) {
    Fail(ErrorKind::kFormat, "expected " + std::to_string(data_.rows()) +
                                 " ids, got " + std::to_string(ids_.size()));
  }
  index_.reserve(ids_.size());
  for (Eigen::Index i = 0; i < data_.rows(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      Fail(ErrorKind::kData, "duplicate embedding id '" + ids_[i] + "'");
    }
    if (!data_.row(i).allFinite()) {
      Fail(ErrorKind::kData, "non-finite value in row '" + ids_[i] + "'");
    }
  }
}

Eigen::Index EmbeddingMatrix::Find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? -1 : it->second;
}

void EmbeddingMatrix::NormalizeRows() {
  for (Eigen::Index i = 0; i < data_.rows(); ++i) {
    const double norm = std::sqrt(SequentialDot(data_.row(i), data_.row(i)));
    if (norm == 0.0) {
      Fail(ErrorKind::kData, "zero-norm embedding row '" + ids_[i] + "'");
    }
    data_.row(i) /= norm;
  }
}

EmbeddingMatrix EmbeddingMatrix::Select(
    const std::vector<Eigen::Index>& rows) const {
  MatrixXr out(static_cast<Eigen::Index>(rows.size()), dim());
  std::vector<std::string> out_ids;
  out_ids.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = data_.row(rows[i]);
    out_ids.push_back(ids_[rows[i]]);
  }
  return EmbeddingMatrix(std::move(out), std::move(out_ids));
}

std::string EncodeCbv1(const EmbeddingMatrix& m) {
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(kVersion));
  PutU32(&out, static_cast<std::uint32_t>(m.rows()));
  PutU32(&out, static_cast<std::uint32_t>(m.dim()));
  out.reserve(out.size() + 4 * m.rows() * m.dim());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.dim(); ++j) {
      PutU32(&out, std::bit_cast<std::uint32_t>(static_cast<float>(m.data()(i, j))));
    }
  }
  const std::string trailer = json{{"ids", m.ids()}}.dump();
  PutU32(&out, static_cast<std::uint32_t>(trailer.size()));
  out += trailer;
  return out;
}

EmbeddingMatrix DecodeCbv1(std::string_view bytes, std::size_t* offset) {
  const std::size_t base = *offset;
  if (bytes.size() < base + kHeaderBytes) {
    Fail(ErrorKind::kFormat, "CBV1 header truncated: expected " +
                                 std::to_string(kHeaderBytes) + " bytes, got " +
                                 std::to_string(bytes.size() - base));
  }
  if (std::memcmp(bytes.data() + base, kMagic, 4) != 0) {
    Fail(ErrorKind::kFormat, "bad magic, expected \"CBV1\"");
  }
  const auto version = static_cast<std::uint8_t>(bytes[base + 4]);
  if (version != kVersion) {
    Fail(ErrorKind::kFormat, "unsupported CBV1 version " + std::to_string(version));
  }
  const std::uint32_t n = GetU32(bytes, base + 5);
  const std::uint32_t d = GetU32(bytes, base + 9);
  if (n == 0 || d == 0) {
    Fail(ErrorKind::kFormat, "CBV1 header has N=" + std::to_string(n) +
                                 ", d=" + std::to_string(d) + "; both must be >= 1");
  }
  const std::uint64_t payload = 4ull * n * d;
  const std::size_t available = bytes.size() - base - kHeaderBytes;
  if (available < payload + 4) {
    Fail(ErrorKind::kFormat,
         "CBV1 payload truncated: expected " + std::to_string(payload + 4) +
             " bytes (N*d*4 + trailer length), got " + std::to_string(available));
  }
  MatrixXr data(n, d);
  std::size_t at = base + kHeaderBytes;
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d; ++j, at += 4) {
      data(i, j) = std::bit_cast<float>(GetU32(bytes, at));
    }
  }
  const std::uint32_t trailer_len = GetU32(bytes, at);
  at += 4;
  if (bytes.size() - at < trailer_len) {
    Fail(ErrorKind::kFormat, "CBV1 id trailer truncated: expected " +
                                 std::to_string(trailer_len) + " bytes, got " +
                                 std::to_string(bytes.size() - at));
  }
  const json trailer =
      ParseJson(std::string(bytes.substr(at, trailer_len)), "CBV1 id trailer");
  if (!trailer.is_object() || !trailer.contains("ids") ||
      !trailer["ids"].is_array()) {
    Fail(ErrorKind::kFormat, "CBV1 trailer lacks an \"ids\" array");
  }
  std::vector<std::string> ids;
  for (const auto& id : trailer["ids"]) {
    if (!id.is_string()) Fail(ErrorKind::kFormat, "CBV1 ids must be strings");
    ids.push_back(id.get<std::string>());
  }
  if (ids.size() != n) {
    Fail(ErrorKind::kFormat, "CBV1 trailer lists " + std::to_string(ids.size()) +
                                 " ids for N=" + std::to_string(n));
  }
  *offset = at + trailer_len;
  return EmbeddingMatrix(std::move(data), std::move(ids));
}

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kUsage, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void WriteFile(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorKind::kUsage, "cannot write '" + path.string() + "'");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) Fail(ErrorKind::kUsage, "write failed for '" + path.string() + "'");
}

EmbeddingMatrix LoadEmbeddings(const std::filesystem::path& path,
                               bool normalize) {
  const std::string bytes = ReadFile(path);
  std::size_t offset = 0;
  EmbeddingMatrix m = DecodeCbv1(bytes, &offset);
  if (offset != bytes.size()) {
    Fail(ErrorKind::kFormat, path.string() + ": " +
                                 std::to_string(bytes.size() - offset) +
                                 " trailing bytes after CBV1 block");
  }
  if (normalize) m.NormalizeRows();
  return m;
}

void SaveEmbeddings(const std::filesystem::path& path,
                    const EmbeddingMatrix& m) {
  WriteFile(path, EncodeCbv1(m));
}

std::vector<Eigen::Index> LabeledImageSet::RowsOfClass(int y) const {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == y) rows.push_back(static_cast<Eigen::Index>(i));
  }
  return rows;
}

LabeledImageSet LabeledImageSet::Select(
    const std::vector<Eigen::Index>& rows) const {
  LabeledImageSet out;
  out.embeddings = embeddings.Select(rows);
  out.class_names = class_names;
  for (auto r : rows) out.labels.push_back(labels[r]);
  return out;
}

void ValidateLabeledImageSet(const LabeledImageSet& set) {
  if (static_cast<Eigen::Index>(set.labels.size()) != set.embeddings.rows()) {
    Fail(ErrorKind::kData, "label count does not match embedding rows");
  }
  std::set<std::string> names(set.class_names.begin(), set.class_names.end());
  if (names.size() != set.class_names.size() || names.empty()) {
    Fail(ErrorKind::kData, "class names must be non-empty and unique");
  }
  for (int label : set.labels) {
    if (label < 0 || label >= set.num_classes()) {
      Fail(ErrorKind::kData, "label index " + std::to_string(label) +
                                 " outside [0, " +
                                 std::to_string(set.num_classes()) + ")");
    }
  }
}

LabeledImageSet AttachLabels(EmbeddingMatrix embeddings,
                             const std::string& label_json) {
  const json doc = ParseJson(label_json, "label file");
  if (!doc.is_object() || !doc.contains("class_names") ||
      !doc.contains("labels") || !doc["class_names"].is_array() ||
      !doc["labels"].is_object()) {
    Fail(ErrorKind::kFormat,
         "label file must be {\"class_names\":[...], \"labels\":{...}}");
  }
  LabeledImageSet set;
  for (const auto& name : doc["class_names"]) {
    if (!name.is_string()) Fail(ErrorKind::kFormat, "class names must be strings");
    set.class_names.push_back(name.get<std::string>());
  }
  const auto& labels = doc["labels"];
  for (const auto& id : embeddings.ids()) {
    auto it = labels.find(id);
    if (it == labels.end()) {
      Fail(ErrorKind::kReference, "image '" + id + "' has no label");
    }
    if (!it->is_number_integer()) {
      Fail(ErrorKind::kFormat, "label of '" + id + "' is not an integer");
    }
    set.labels.push_back(it->get<int>());
  }
  set.embeddings = std::move(embeddings);
  ValidateLabeledImageSet(set);
  return set;
}

LabeledImageSet LoadLabeledImages(const std::filesystem::path& embeddings_path,
                                  const std::filesystem::path& labels_path,
                                  bool normalize) {
  return AttachLabels(LoadEmbeddings(embeddings_path, normalize),
                      ReadFile(labels_path));
}

ConceptPool ParseConceptPool(const std::string& pool_json,
                             const EmbeddingMatrix& text_embeddings) {
  const json doc = ParseJson(pool_json, "concept pool");
  if (!doc.is_object() || !doc.contains("classes") || !doc["classes"].is_array()) {
    Fail(ErrorKind::kFormat, "concept pool must be {\"classes\":[...]}");
  }
  ConceptPool pool;
  std::unordered_map<std::string, int> owner;
  for (const auto& cls : doc["classes"]) {
    if (!cls.contains("name") || !cls.contains("concepts") ||
        !cls["name"].is_string() || !cls["concepts"].is_array()) {
      Fail(ErrorKind::kFormat, "pool class needs \"name\" and \"concepts\"");
    }
    const int y = static_cast<int>(pool.class_names.size());
    pool.class_names.push_back(cls["name"].get<std::string>());
    pool.per_class.emplace_back();
    for (const auto& entry : cls["concepts"]) {
      if (!entry.contains("id") || !entry["id"].is_string()) {
        Fail(ErrorKind::kFormat, "pool concept needs a string \"id\"");
      }
      Concept c;
      c.id = entry["id"].get<std::string>();
      c.text = entry.value("text", std::string());
      c.class_index = y;
      auto [it, inserted] = owner.emplace(c.id, y);
      if (!inserted) {
        Fail(ErrorKind::kPartition,
             "concept '" + c.id + "' listed under both '" +
                 pool.class_names[it->second] + "' and '" + pool.class_names[y] +
                 "'");
      }
      c.embedding_row = text_embeddings.Find(c.id);
      if (c.embedding_row < 0) {
        Fail(ErrorKind::kReference,
             "concept '" + c.id + "' has no text embedding");
      }
      pool.per_class[y].push_back(static_cast<int>(pool.concepts.size()));
      pool.concepts.push_back(std::move(c));
    }
  }
  return pool;
}

ConceptPool LoadConceptPool(const std::filesystem::path& pool_path,
                            const EmbeddingMatrix& text_embeddings) {
  return ParseConceptPool(ReadFile(pool_path), text_embeddings);
}

ConceptSubset UnionSubset(const std::vector<std::vector<int>>& per_class) {
  if (per_class.empty()) Fail(ErrorKind::kSelection, "no classes selected");
  ConceptSubset subset;
  subset.per_class = per_class;
  subset.size_per_class = static_cast<int>(per_class.front().size());
  std::unordered_map<int, std::size_t> position;
  for (std::size_t y = 0; y < per_class.size(); ++y) {
    if (per_class[y].empty()) {
      Fail(ErrorKind::kSelection,
           "empty concept selection for class " + std::to_string(y));
    }
    if (static_cast<int>(per_class[y].size()) != subset.size_per_class) {
      Fail(ErrorKind::kSelection,
           "class " + std::to_string(y) + " selected " +
               std::to_string(per_class[y].size()) + " concepts, expected k=" +
               std::to_string(subset.size_per_class));
    }
    for (int c : per_class[y]) {
      auto [it, inserted] = position.emplace(c, subset.members.size());
      if (inserted) {
        subset.members.push_back(c);
        subset.memberships.push_back({static_cast<int>(y)});
      } else {
        auto& owners = subset.memberships[it->second];
        if (owners.back() == static_cast<int>(y)) {
          Fail(ErrorKind::kSelection, "concept " + std::to_string(c) +
                                          " selected twice for class " +
                                          std::to_string(y));
        }
        owners.push_back(static_cast<int>(y));
      }
    }
  }
  return subset;
}

}  // namespace cbm
