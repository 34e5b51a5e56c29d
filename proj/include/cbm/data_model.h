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

#ifndef CBM_DATA_MODEL_H_
#define CBM_DATA_MODEL_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cbm/linalg.h"

namespace cbm {

// N x d embeddings (image or text encoder outputs) with one string id per row.
// Values are held in double; the on-disk payload is float32 so a load/save
// cycle is lossless.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  // Validates shape, id uniqueness and finiteness.
  EmbeddingMatrix(MatrixXr data, std::vector<std::string> ids);

  Eigen::Index rows() const { return data_.rows(); }
  Eigen::Index dim() const { return data_.cols(); }
  const MatrixXr& data() const { return data_; }
  const std::vector<std::string>& ids() const { return ids_; }
  auto row(Eigen::Index i) const { return data_.row(i); }

  // Row index of `id`, or -1.
  Eigen::Index Find(std::string_view id) const;

  // Scales every row to unit L2 norm. Zero rows are a kData error naming the
  // offending id.
  void NormalizeRows();

  // Copy containing only `rows`, in the given order.
  EmbeddingMatrix Select(const std::vector<Eigen::Index>& rows) const;

 private:
  MatrixXr data_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, Eigen::Index> index_;
};

// CBV1 container:
//   "CBV1" | u8 version=1 | u32 N | u32 d | N*d f32 (row-major)
//   | u32 trailer_len | {"ids":[...]}
// All integers and floats little-endian.
std::string EncodeCbv1(const EmbeddingMatrix& m);
// Decodes one CBV1 block starting at `*offset` and advances it past the block.
EmbeddingMatrix DecodeCbv1(std::string_view bytes, std::size_t* offset);

EmbeddingMatrix LoadEmbeddings(const std::filesystem::path& path,
                               bool normalize = true);
void SaveEmbeddings(const std::filesystem::path& path,
                    const EmbeddingMatrix& m);

struct LabeledImageSet {
  EmbeddingMatrix embeddings;
  std::vector<int> labels;  // one per embedding row, in [0, |Y|)
  std::vector<std::string> class_names;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  // Row indices of the images labeled `y` (X_y), in row order.
  std::vector<Eigen::Index> RowsOfClass(int y) const;
  LabeledImageSet Select(const std::vector<Eigen::Index>& rows) const;
};

// Checks labels against class_names and row count.
void ValidateLabeledImageSet(const LabeledImageSet& set);

// Label file: {"class_names":[...], "labels":{"<image_id>": <class_index>}}.
// Every embedding id must have a label; extra labels are ignored.
LabeledImageSet LoadLabeledImages(const std::filesystem::path& embeddings_path,
                                  const std::filesystem::path& labels_path,
                                  bool normalize = true);
LabeledImageSet AttachLabels(EmbeddingMatrix embeddings,
                             const std::string& label_json);

struct Concept {
  std::string id;
  std::string text;
  int class_index = 0;
  Eigen::Index embedding_row = 0;
};

// Candidate pool S partitioned into the per-class lists S_y.
struct ConceptPool {
  std::vector<Concept> concepts;
  std::vector<std::vector<int>> per_class;  // indices into `concepts`
  std::vector<std::string> class_names;

  int num_classes() const { return static_cast<int>(per_class.size()); }
  std::size_t size() const { return concepts.size(); }
};

// Pool file: {"classes":[{"name":str,"concepts":[{"id":str,"text":str}]}]}.
ConceptPool LoadConceptPool(const std::filesystem::path& pool_path,
                            const EmbeddingMatrix& text_embeddings);
ConceptPool ParseConceptPool(const std::string& pool_json,
                             const EmbeddingMatrix& text_embeddings);

// Selected C_y per class plus their union C. A concept picked by several
// classes appears once in `members` with every owning class recorded.
struct ConceptSubset {
  std::vector<std::vector<int>> per_class;  // C_y, selection order
  std::vector<int> members;                 // C, class-major order
  std::vector<std::vector<int>> memberships;  // classes owning members[i]
  int size_per_class = 0;                   // k
};

ConceptSubset UnionSubset(const std::vector<std::vector<int>>& per_class);

std::string ReadFile(const std::filesystem::path& path);
void WriteFile(const std::filesystem::path& path, std::string_view contents);

}  // namespace cbm

#endif  // CBM_DATA_MODEL_H_
