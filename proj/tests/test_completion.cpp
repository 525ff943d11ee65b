#include "cityest/completion.hpp"
#include "cityest/errors.hpp"
#include "cityest/fixtures.hpp"
#include "cityest/svd.hpp"

#include "doctest.h"

#include <Eigen/Eigenvalues>

#include <random>
#include <sstream>

using namespace cityest;

namespace {

TravelTimeMatrix low_rank(int rows, int cols, int rank, double observed, std::uint64_t seed, Eigen::MatrixXd& truth) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  std::bernoulli_distribution keep(observed);
  Eigen::MatrixXd L(rows, rank), R(rank, cols);
  for (auto& v : L.reshaped()) v = u(rng);
  for (auto& v : R.reshaped()) v = u(rng);
  truth = 30.0 * L * R;
  TravelTimeMatrix m;
  m.values = truth;
  m.mask = BoolMatrix(rows, cols);
  for (auto& b : m.mask.reshaped()) b = keep(rng);
  for (int i = 0; i < rows; ++i) m.segment_ids.push_back(i + 1);
  m.grid = TimeGrid(kSecondsPerWeek / cols, cols);
  return m;
}

}  // namespace

TEST_CASE("SVD reconstructs and is orthonormal") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto [r, c] : {std::pair{7, 4}, {4, 7}, {12, 12}}) {
    Eigen::MatrixXd A(r, c);
    for (auto& v : A.reshaped()) v = n(rng);
    const auto s = jacobi_svd(A);
    CHECK((s.reconstruct() - A).norm() < 1e-12 * A.norm());
    const auto k = std::min(r, c);
    CHECK((s.U.transpose() * s.U - Eigen::MatrixXd::Identity(k, k)).norm() < 1e-12);
    CHECK((s.V.transpose() * s.V - Eigen::MatrixXd::Identity(k, k)).norm() < 1e-12);
    for (Eigen::Index i = 1; i < s.S.size(); ++i) CHECK(s.S[i] <= s.S[i - 1]);
  }
}

TEST_CASE("SVD of a rank-deficient matrix keeps an orthonormal U") {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(5, 3);
  A.col(0) << 1, 2, 3, 4, 5;
  A.col(1) = 2.0 * A.col(0);
  const auto s = jacobi_svd(A);
  CHECK(s.S[1] < 1e-12);
  CHECK((s.U.transpose() * s.U - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-12);
  CHECK((s.reconstruct() - A).norm() < 1e-12);
}

TEST_CASE("SVD singular values match the eigen-oracle on A^T A") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd A(60, 40);
  for (auto& v : A.reshaped()) v = u(rng);
  const auto s = jacobi_svd(A);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A.transpose() * A);
  const Eigen::VectorXd oracle = eig.eigenvalues().reverse().cwiseMax(0.0).cwiseSqrt();
  CHECK((s.S - oracle).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("SVD sign convention is deterministic") {
  Eigen::MatrixXd A(3, 2);
  A << 1, 0, 0, -2, 0, 0;
  const auto s = jacobi_svd(A);
  for (Eigen::Index k = 0; k < s.V.cols(); ++k) {
    Eigen::Index lead;
    s.V.col(k).cwiseAbs().maxCoeff(&lead);
    CHECK(s.V(lead, k) > 0);
  }
  const auto warm = jacobi_svd(A, &s.V);
  CHECK((warm.S - s.S).norm() < 1e-14);
}

TEST_CASE("fully observed matrix is returned unchanged") {
  Eigen::MatrixXd truth;
  auto m = low_rank(10, 24, 2, 1.0, 2, truth);
  m.mask.setConstant(true);
  const auto r = complete(m, Eigen::VectorXd::Zero(10));
  CHECK(r.matrix.values == m.values);
}

TEST_CASE("rank-1 recovery at 60% observation") {
  Eigen::MatrixXd truth;
  const auto m = low_rank(20, 30, 1, 0.6, 11, truth);
  // Small matrices need a threshold well above the default scale.
  std::vector<double> obs;
  for (Eigen::Index i = 0; i < 20; ++i)
    for (Eigen::Index j = 0; j < 30; ++j)
      if (m.mask(i, j)) obs.push_back(m.values(i, j));
  std::nth_element(obs.begin(), obs.begin() + obs.size() / 2, obs.end());
  CompletionOptions opts;
  opts.svt_threshold = 5.0 * std::sqrt(20.0 * 30.0) * obs[obs.size() / 2];
  const auto r = complete(m, Eigen::VectorXd::Zero(20), opts);
  CHECK((r.matrix.values - truth).norm() / truth.norm() < 1e-2);
}

TEST_CASE("rank-2 recovery, observed entries kept, bounds respected") {
  Eigen::MatrixXd truth;
  const auto m = low_rank(50, 168, 2, 0.5, 21, truth);
  const Eigen::VectorXd lower = Eigen::VectorXd::Constant(50, 10.0);
  const auto r = complete(m, lower);
  CHECK((r.matrix.values - truth).norm() / truth.norm() < 5e-2);
  for (Eigen::Index i = 0; i < 50; ++i)
    for (Eigen::Index j = 0; j < 168; ++j) {
      if (m.mask(i, j)) CHECK(r.matrix.values(i, j) == m.values(i, j));
      CHECK(r.matrix.values(i, j) >= lower[i]);
    }
}

TEST_CASE("rank-r recovery with the default threshold") {
  for (int rank : {1, 2}) {
    Eigen::MatrixXd truth;
    const auto m = low_rank(50, 168, rank, 0.5, 30 + rank, truth);
    const auto r = complete(m, Eigen::VectorXd::Zero(50));
    CHECK((r.matrix.values - truth).norm() / truth.norm() < 5e-2);
  }
}

TEST_CASE("row with nothing observed falls back to free-flow") {
  Eigen::MatrixXd truth;
  auto m = low_rank(8, 24, 1, 0.7, 3, truth);
  m.mask.row(5).setConstant(false);
  Eigen::VectorXd lower = Eigen::VectorXd::Constant(8, 1.0);
  lower[5] = 17.0;
  const auto r = complete(m, lower);
  CHECK(r.fallback_rows[5]);
  CHECK_FALSE(r.fallback_rows[0]);
  CHECK((r.matrix.values.row(5).array() == 17.0).all());
}

TEST_CASE("non-finite observed value is an input error") {
  Eigen::MatrixXd truth;
  auto m = low_rank(4, 24, 1, 1.0, 3, truth);
  m.values(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(complete(m, Eigen::VectorXd::Zero(4)), InputError);
}

TEST_CASE("completion is deterministic") {
  Eigen::MatrixXd truth;
  const auto m = low_rank(15, 24, 2, 0.5, 5, truth);
  const auto a = complete(m, Eigen::VectorXd::Zero(15));
  const auto b = complete(m, Eigen::VectorXd::Zero(15));
  CHECK(a.matrix.values == b.matrix.values);
}

TEST_CASE("matrix CSV round trip") {
  const auto fx = make_grid({.rows = 2, .cols = 2});
  const TimeGrid grid(3600.0, 168);
  auto m = TravelTimeMatrix::empty(fx.network, grid);
  m.values(1, 5) = 42.5;
  m.mask(1, 5) = true;
  std::stringstream buf;
  write_matrix_csv(m, buf);
  const auto back = read_matrix_csv(buf, fx.network, grid);
  CHECK(back.mask(1, 5));
  CHECK(back.values(1, 5) == 42.5);
  CHECK(back.mask.count() == 1);
}
