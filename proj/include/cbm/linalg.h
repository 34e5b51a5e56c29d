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

#ifndef CBM_LINALG_H_
#define CBM_LINALG_H_

#include <cstddef>

#include <Eigen/Dense>

namespace cbm {

template <typename Scalar>
using RowMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXr = RowMatrix<double>;
using VectorXr = Vector<double>;

// Plain left-to-right dot product. Every score in the library goes through
// this so that a given pair of vectors always reduces in the same order,
// independent of memory alignment or SIMD packet boundaries.
template <typename A, typename B>
typename A::Scalar SequentialDot(const Eigen::DenseBase<A>& a,
                                 const Eigen::DenseBase<B>& b) {
  using Scalar = typename A::Scalar;
  Scalar acc(0);
  const Eigen::Index n = a.size();
  for (Eigen::Index i = 0; i < n; ++i) acc += a(i) * b(i);
  return acc;
}

template <typename A>
typename A::Scalar SequentialSum(const Eigen::DenseBase<A>& a) {
  typename A::Scalar acc(0);
  for (Eigen::Index i = 0; i < a.size(); ++i) acc += a(i);
  return acc;
}

// rows(a) x rows(b) matrix of SequentialDot values.
template <typename A, typename B>
RowMatrix<typename A::Scalar> PairwiseDots(const Eigen::MatrixBase<A>& a,
                                           const Eigen::MatrixBase<B>& b) {
  RowMatrix<typename A::Scalar> out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      out(i, j) = SequentialDot(a.row(i), b.row(j));
    }
  }
  return out;
}

}  // namespace cbm

#endif  // CBM_LINALG_H_
