#include "cityest/completion.hpp"

#include "cityest/csv.hpp"
#include "cityest/errors.hpp"
#include "cityest/svd.hpp"

#include <algorithm>
#include <cmath>

namespace cityest {

TravelTimeMatrix TravelTimeMatrix::empty(const RoadNetwork& net, const TimeGrid& grid) {
  TravelTimeMatrix m;
  const auto rows = static_cast<Eigen::Index>(net.segment_count());
  m.values = Eigen::MatrixXd::Zero(rows, grid.interval_count());
  m.mask = BoolMatrix::Constant(rows, grid.interval_count(), false);
  for (std::size_t s = 0; s < net.segment_count(); ++s) m.segment_ids.push_back(net.segment(s).id);
  m.grid = grid;
  return m;
}

void CompletionOptions::validate() const {
  if ((svt_threshold && !(*svt_threshold > 0)) || !(step > 0) || max_iter < 1 || !(tol > 0)) {
    throw ConfigError("completion needs svt_threshold > 0, step > 0, max_iter >= 1, tol > 0");
  }
}

Eigen::VectorXd row_lower_bounds(const TravelTimeMatrix& mat, const RoadNetwork& net) {
  Eigen::VectorXd lower(static_cast<Eigen::Index>(mat.segment_ids.size()));
  for (std::size_t i = 0; i < mat.segment_ids.size(); ++i) {
    lower[static_cast<Eigen::Index>(i)] = net.segment(net.segment_index(mat.segment_ids[i])).free_flow_time();
  }
  return lower;
}

CompletionResult complete(const TravelTimeMatrix& mat, const Eigen::VectorXd& lower, const CompletionOptions& opts) {
  opts.validate();
  const Eigen::Index rows = mat.values.rows(), cols = mat.values.cols();
  if (mat.mask.rows() != rows || mat.mask.cols() != cols || lower.size() != rows ||
      static_cast<Eigen::Index>(mat.segment_ids.size()) != rows) {
    throw InputError("travel-time matrix, mask, row ids and bounds disagree in shape");
  }

  CompletionResult out;
  out.matrix = mat;
  out.fallback_rows.assign(static_cast<std::size_t>(rows), false);
  std::vector<Eigen::Index> active;
  std::vector<double> observed;
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (!std::isfinite(lower[i])) throw InputError("non-finite free-flow bound");
    bool any = false;
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (!mat.mask(i, j)) continue;
      const double v = mat.values(i, j);
      if (!std::isfinite(v)) {
        throw InputError("non-finite observed travel time for segment " + std::to_string(mat.segment_ids[i]));
      }
      if (v < lower[i]) {
        throw InputError("observed travel time below free-flow for segment " + std::to_string(mat.segment_ids[i]));
      }
      observed.push_back(v);
      any = true;
    }
    if (any) {
      active.push_back(i);
    } else {
      out.fallback_rows[static_cast<std::size_t>(i)] = true;
      out.matrix.values.row(i).setConstant(lower[i]);
    }
  }
  if (active.empty() || observed.size() == active.size() * static_cast<std::size_t>(cols)) {
    out.converged = true;
    return out;
  }

  const auto ra = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(ra, cols);
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(ra, cols);
  for (Eigen::Index a = 0; a < ra; ++a)
    for (Eigen::Index j = 0; j < cols; ++j)
      if (mat.mask(active[a], j)) {
        M(a, j) = mat.values(active[a], j);
        P(a, j) = 1.0;
      }

  if (opts.svt_threshold) {
    out.threshold = *opts.svt_threshold;
  } else {
    auto mid = observed.begin() + static_cast<std::ptrdiff_t>(observed.size() / 2);
    std::nth_element(observed.begin(), mid, observed.end());
    out.threshold = 0.5 * std::sqrt(static_cast<double>(rows * cols)) * *mid;
  }
  const double tau = out.threshold;
  const double delta = opts.step * static_cast<double>(ra * cols) / static_cast<double>(observed.size());

  // Start from the first multiple of P(M) whose top singular value clears tau.
  const auto top = jacobi_svd(M);
  const double kick = top.S.size() && top.S[0] > 0 ? std::max(1.0, std::ceil(tau / (delta * top.S[0]))) : 1.0;
  Eigen::MatrixXd Y = kick * delta * M;
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(ra, cols);
  Svd<double>::Matrix warm;
  for (int it = 0; it < opts.max_iter; ++it) {
    auto svd = jacobi_svd(Y, warm.size() ? &warm : nullptr);
    Eigen::Index r = 0;
    while (r < svd.S.size() && svd.S[r] > tau) ++r;
    Eigen::MatrixXd next = svd.U.leftCols(r) * (svd.S.head(r).array() - tau).matrix().asDiagonal() *
                           svd.V.leftCols(r).transpose();
    const double change = (next - X).norm();
    const double scale = next.norm();
    X = std::move(next);
    warm = cols > ra ? std::move(svd.U) : std::move(svd.V);
    out.iterations = it + 1;
    if (scale > 0 && change / scale < opts.tol) {
      out.converged = true;
      break;
    }
    Y += delta * P.cwiseProduct(M - X);
  }

  for (Eigen::Index a = 0; a < ra; ++a) {
    const Eigen::Index i = active[a];
    for (Eigen::Index j = 0; j < cols; ++j) {
      out.matrix.values(i, j) = mat.mask(i, j) ? mat.values(i, j) : std::max(X(a, j), lower[i]);
    }
  }
  return out;
}

TravelTimeMatrix read_matrix_csv(std::istream& in, const RoadNetwork& net, const TimeGrid& grid,
                                 const std::string& source) {
  CsvReader csv(in, {"segment_id", "interval", "time_s", "observed"}, source);
  auto m = TravelTimeMatrix::empty(net, grid);
  while (csv.next()) {
    const auto seg = net.find_segment(csv.get_int(0));
    if (!seg) throw ParseError(source + ": unknown segment " + csv.get(0), csv.line());
    const auto k = csv.get_int(1);
    if (k < 0 || k >= grid.interval_count()) throw ParseError(source + ": interval out of range", csv.line());
    const auto flag = csv.get_int(3);
    if (flag != 0 && flag != 1) throw ParseError(source + ": observed must be 0 or 1", csv.line());
    const auto i = static_cast<Eigen::Index>(*seg);
    m.values(i, k) = csv.get_double(2);
    m.mask(i, k) = flag == 1;
  }
  return m;
}

void write_matrix_csv(const TravelTimeMatrix& mat, std::ostream& out) {
  CsvWriter csv(out, {"segment_id", "interval", "time_s", "observed"});
  for (Eigen::Index i = 0; i < mat.values.rows(); ++i)
    for (Eigen::Index j = 0; j < mat.values.cols(); ++j) {
      if (!mat.mask(i, j)) continue;
      csv << mat.segment_ids[static_cast<std::size_t>(i)] << static_cast<std::int64_t>(j) << mat.values(i, j) << 1;
      csv.end_row();
    }
}

void write_completed_csv(const CompletionResult& r, std::ostream& out) {
  CsvWriter csv(out, {"segment_id", "interval", "time_s", "imputed"});
  const auto& m = r.matrix;
  for (Eigen::Index i = 0; i < m.values.rows(); ++i)
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
      csv << m.segment_ids[static_cast<std::size_t>(i)] << static_cast<std::int64_t>(j) << m.values(i, j)
          << (m.mask(i, j) ? 0 : 1);
      csv.end_row();
    }
}

TravelTimeMatrix read_completed_csv(std::istream& in, const RoadNetwork& net, const TimeGrid& grid,
                                    const std::string& source) {
  CsvReader csv(in, {"segment_id", "interval", "time_s", "imputed"}, source);
  auto m = TravelTimeMatrix::empty(net, grid);
  BoolMatrix seen = BoolMatrix::Constant(m.values.rows(), m.values.cols(), false);
  while (csv.next()) {
    const auto seg = net.find_segment(csv.get_int(0));
    if (!seg) throw ParseError(source + ": unknown segment " + csv.get(0), csv.line());
    const auto k = csv.get_int(1);
    if (k < 0 || k >= grid.interval_count()) throw ParseError(source + ": interval out of range", csv.line());
    const auto flag = csv.get_int(3);
    if (flag != 0 && flag != 1) throw ParseError(source + ": imputed must be 0 or 1", csv.line());
    const auto i = static_cast<Eigen::Index>(*seg);
    if (seen(i, k)) throw ParseError(source + ": duplicate entry", csv.line());
    seen(i, k) = true;
    m.values(i, k) = csv.get_double(2);
    m.mask(i, k) = flag == 0;
  }
  if (!seen.all()) throw InputError(source + ": completed matrix is missing entries");
  return m;
}

}  // namespace cityest
