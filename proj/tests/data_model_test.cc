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

#include <random>

#include "cbm/errors.h"
#include "doctest.h"
#include "test_util.h"

namespace cbm {
namespace {

using testing::MakeEmbeddings;
using testing::TempDir;

ErrorKind KindOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected cbm::Error");
  return ErrorKind::kUsage;
}

TEST_CASE("load normalizes axis vectors") {
  TempDir dir;
  MatrixXr m(2, 3);
  m << 3, 0, 0, 0, 4, 0;
  SaveEmbeddings(dir / "a.cbv", MakeEmbeddings(m, "r"));
  const EmbeddingMatrix loaded = LoadEmbeddings(dir / "a.cbv", true);
  MatrixXr expected(2, 3);
  expected << 1, 0, 0, 0, 1, 0;
  CHECK(loaded.data() == expected);
  CHECK(loaded.ids() == std::vector<std::string>{"r0", "r1"});
}

TEST_CASE("load without normalization returns the row unchanged") {
  TempDir dir;
  MatrixXr m(1, 4);
  m << 1, 0, 0, 0;
  SaveEmbeddings(dir / "a.cbv", MakeEmbeddings(m, "r"));
  CHECK(LoadEmbeddings(dir / "a.cbv", false).data() == m);
}

TEST_CASE("CBV1 byte layout") {
  MatrixXr m(1, 2);
  m << 1.0, -2.0;
  const std::string bytes = EncodeCbv1(EmbeddingMatrix(m, {"x"}));
  REQUIRE(bytes.size() == 13 + 8 + 4 + std::string(R"({"ids":["x"]})").size());
  CHECK(bytes.substr(0, 4) == "CBV1");
  CHECK(bytes[4] == 1);
  CHECK(bytes.substr(5, 4) == std::string("\x01\x00\x00\x00", 4));
  CHECK(bytes.substr(9, 4) == std::string("\x02\x00\x00\x00", 4));
  // 1.0f = 0x3f800000, -2.0f = 0xc0000000, little-endian.
  CHECK(bytes.substr(13, 8) == std::string("\x00\x00\x80\x3f\x00\x00\x00\xc0", 8));
  CHECK(bytes.substr(21, 4) == std::string("\x0d\x00\x00\x00", 4));
  CHECK(bytes.substr(25) == R"({"ids":["x"]})");
}

TEST_CASE("truncated payload reports expected vs actual bytes") {
  TempDir dir;
  MatrixXr m = MatrixXr::Ones(1, 512);
  std::string bytes = EncodeCbv1(MakeEmbeddings(m, "r"));
  bytes.resize(13 + 100);
  WriteFile(dir / "t.cbv", bytes);
  try {
    LoadEmbeddings(dir / "t.cbv");
    FAIL("expected a format error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kFormat);
    const std::string msg = e.what();
    CHECK(msg.find("expected 2052") != std::string::npos);
    CHECK(msg.find("got 100") != std::string::npos);
  }
}

TEST_CASE("header errors") {
  TempDir dir;
  std::string bytes = EncodeCbv1(MakeEmbeddings(MatrixXr::Ones(1, 2), "r"));
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  WriteFile(dir / "m.cbv", bad_magic);
  CHECK(KindOf([&] { LoadEmbeddings(dir / "m.cbv"); }) == ErrorKind::kFormat);
  std::string bad_version = bytes;
  bad_version[4] = 2;
  WriteFile(dir / "v.cbv", bad_version);
  CHECK(KindOf([&] { LoadEmbeddings(dir / "v.cbv"); }) == ErrorKind::kFormat);
  std::string zero_rows = bytes;
  zero_rows[5] = 0;
  WriteFile(dir / "z.cbv", zero_rows);
  CHECK(KindOf([&] { LoadEmbeddings(dir / "z.cbv"); }) == ErrorKind::kFormat);
}

TEST_CASE("non-finite and zero rows are data errors naming the row") {
  TempDir dir;
  // Bypass the constructor check by patching the encoded float.
  std::string bytes = EncodeCbv1(MakeEmbeddings(MatrixXr::Ones(2, 2), "row"));
  const std::string nan_bits("\x00\x00\xc0\x7f", 4);
  bytes.replace(13 + 12, 4, nan_bits);
  WriteFile(dir / "n.cbv", bytes);
  try {
    LoadEmbeddings(dir / "n.cbv");
    FAIL("expected a data error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kData);
    CHECK(std::string(e.what()).find("row1") != std::string::npos);
  }
  MatrixXr zero = MatrixXr::Ones(2, 2);
  zero.row(0).setZero();
  SaveEmbeddings(dir / "z.cbv", MakeEmbeddings(zero, "row"));
  CHECK_NOTHROW(LoadEmbeddings(dir / "z.cbv", false));
  try {
    LoadEmbeddings(dir / "z.cbv", true);
    FAIL("expected a data error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kData);
    CHECK(std::string(e.what()).find("row0") != std::string::npos);
  }
}

TEST_CASE("duplicate ids are rejected") {
  CHECK(KindOf([] { EmbeddingMatrix(MatrixXr::Ones(2, 2), {"a", "a"}); }) ==
        ErrorKind::kData);
}

TEST_CASE("property: save/load round trip is bit exact and normalization idempotent") {
  std::mt19937_64 rng(7);
  std::normal_distribution<float> normal;
  TempDir dir;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + trial % 5, d = 1 + (trial * 3) % 17;
    MatrixXr m(n, d);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    SaveEmbeddings(dir / "p.cbv", MakeEmbeddings(m, "p"));
    const EmbeddingMatrix once = LoadEmbeddings(dir / "p.cbv", false);
    CHECK(once.data() == m);
    SaveEmbeddings(dir / "q.cbv", once);
    CHECK(ReadFile(dir / "q.cbv") == ReadFile(dir / "p.cbv"));

    EmbeddingMatrix normalized = LoadEmbeddings(dir / "p.cbv", true);
    for (Eigen::Index i = 0; i < normalized.rows(); ++i) {
      CHECK(std::abs(normalized.row(i).norm() - 1.0) < 1e-6);
    }
    EmbeddingMatrix twice = normalized;
    twice.NormalizeRows();
    CHECK((twice.data() - normalized.data()).cwiseAbs().maxCoeff() <= 1e-7);
  }
}

TEST_CASE("concept pool construction") {
  const EmbeddingMatrix text = MakeEmbeddings(MatrixXr::Identity(3, 3), "c");
  // ids c0, c1, c2
  const ConceptPool pool = ParseConceptPool(
      R"({"classes":[{"name":"A","concepts":[{"id":"c0","text":"x"},{"id":"c1","text":"y"}]},
                     {"name":"B","concepts":[{"id":"c2","text":"z"}]}]})",
      text);
  CHECK(pool.size() == 3);
  REQUIRE(pool.num_classes() == 2);
  CHECK(pool.per_class[0].size() == 2);
  CHECK(pool.per_class[1].size() == 1);
  CHECK(pool.concepts[2].class_index == 1);
  CHECK(pool.concepts[1].text == "y");
  std::size_t total = 0;
  for (const auto& s : pool.per_class) total += s.size();
  CHECK(total == pool.size());
}

TEST_CASE("concept pool errors") {
  const EmbeddingMatrix text = MakeEmbeddings(MatrixXr::Identity(3, 3), "c");
  try {
    ParseConceptPool(R"({"classes":[{"name":"A","concepts":[{"id":"c9","text":""}]}]})", text);
    FAIL("expected reference error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kReference);
    CHECK(std::string(e.what()).find("c9") != std::string::npos);
  }
  CHECK(KindOf([&] {
          ParseConceptPool(R"({"classes":[{"name":"A","concepts":[{"id":"c1"}]},
                                          {"name":"B","concepts":[{"id":"c1"}]}]})",
                           text);
        }) == ErrorKind::kPartition);
  CHECK(KindOf([&] { ParseConceptPool("{not json", text); }) == ErrorKind::kFormat);
}

TEST_CASE("labels attach by id") {
  const EmbeddingMatrix images = MakeEmbeddings(MatrixXr::Identity(2, 2), "img");
  const LabeledImageSet set = AttachLabels(
      images, R"({"class_names":["a","b"],"labels":{"img0":1,"img1":0,"other":1}})");
  CHECK(set.labels == std::vector<int>{1, 0});
  CHECK(set.RowsOfClass(1) == std::vector<Eigen::Index>{0});
  CHECK(KindOf([&] {
          AttachLabels(images, R"({"class_names":["a"],"labels":{"img0":0}})");
        }) == ErrorKind::kReference);
  CHECK(KindOf([&] {
          AttachLabels(images, R"({"class_names":["a"],"labels":{"img0":0,"img1":3}})");
        }) == ErrorKind::kData);
}

TEST_CASE("union of per-class selections") {
  CHECK(KindOf([] { UnionSubset({{0, 1}, {2}}); }) == ErrorKind::kSelection);
  CHECK(KindOf([] { UnionSubset({{0}, {}}); }) == ErrorKind::kSelection);

  const ConceptSubset disjoint = UnionSubset({{0}, {1}});
  CHECK(disjoint.members == std::vector<int>{0, 1});
  CHECK(disjoint.size_per_class == 1);

  const ConceptSubset shared = UnionSubset({{0}, {0}});
  CHECK(shared.members == std::vector<int>{0});
  REQUIRE(shared.memberships.size() == 1);
  CHECK(shared.memberships[0] == std::vector<int>{0, 1});

  const ConceptSubset order = UnionSubset({{3, 1}, {2, 3}});
  CHECK(order.members == std::vector<int>{3, 1, 2});
  CHECK(order.memberships[0] == std::vector<int>{0, 1});
}

}  // namespace
}  // namespace cbm
