#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "psmed/error.hpp"

namespace psmed {

enum class Monotonicity { Standard, Strong };

struct Mediator {
  enum class Kind { Binary, Categorical, ContinuousGaussian };
  Kind kind = Kind::Binary;
  int m_max = 1;

  static Mediator binary() { return {Kind::Binary, 1}; }
  static Mediator categorical(int m_max) { return {Kind::Categorical, m_max}; }
  static Mediator continuous() { return {Kind::ContinuousGaussian, 0}; }

  bool discrete() const { return kind != Kind::ContinuousGaussian; }
  // number of support points for discrete mediators, 0 otherwise
  int levels() const { return discrete() ? m_max + 1 : 0; }

  bool operator==(const Mediator&) const = default;
};

using Row = std::span<const double>;

// Joint potential values (d1, d0) of the post-treatment event.
struct Stratum {
  int d1 = 1;
  int d0 = 0;

  static constexpr Stratum compliers() { return {1, 0}; }
  static constexpr Stratum always() { return {1, 1}; }
  static constexpr Stratum never() { return {0, 0}; }

  int k() const { return d1 != d0 ? 1 : 0; }
  // companion cell (z*, d*): 11 for 10, 10 for 00, 01 for 11
  int z_star() const { return d1 == d0 && d1 == 1 ? 0 : 1; }
  int d_star() const { return d1 == 1 && d0 == 0 ? 1 : (d1 == 0 ? 0 : 1); }
  // 0 for 10, 1 for 11, 2 for 00
  int index() const { return d1 == 1 ? (d0 == 0 ? 0 : 1) : 2; }
  std::string label() const { return std::to_string(d1) + std::to_string(d0); }

  bool operator==(const Stratum&) const = default;
};

inline Stratum stratum_from_index(int i) {
  static constexpr std::array<Stratum, 3> all{Stratum::compliers(), Stratum::always(), Stratum::never()};
  return all.at(static_cast<std::size_t>(i));
}

inline Stratum parse_stratum(const std::string& s) {
  if (s == "10") return Stratum::compliers();
  if (s == "11") return Stratum::always();
  if (s == "00") return Stratum::never();
  fail(ErrorKind::UnsupportedTarget, "stratum '" + s + "' is not admissible");
}

inline bool admissible(Stratum s, Monotonicity mode) {
  if (s.d1 == 0 && s.d0 == 1) return false;
  if (mode == Monotonicity::Strong && s.d0 == 1) return false;
  return true;
}

inline std::vector<Stratum> strata_for_mode(Monotonicity mode) {
  if (mode == Monotonicity::Strong) return {Stratum::compliers(), Stratum::never()};
  return {Stratum::compliers(), Stratum::always(), Stratum::never()};
}

struct TargetIndex {
  int z = 1;
  int z_prime = 0;
  Stratum stratum{};

  int d_z() const { return z == 1 ? stratum.d1 : stratum.d0; }
  int d_z_prime() const { return z_prime == 1 ? stratum.d1 : stratum.d0; }
  // 0 for (1,1), 1 for (1,0), 2 for (0,0), 3 for (0,1)
  int pair_index() const { return z == 1 ? (z_prime == 1 ? 0 : 1) : (z_prime == 0 ? 2 : 3); }
  std::string label() const {
    return "theta" + stratum.label() + "_" + std::to_string(z) + std::to_string(z_prime);
  }

  bool operator==(const TargetIndex&) const = default;
};

// The three cross-world pairs (z, z') that enter effects, in the order 11, 10, 00.
inline constexpr std::array<std::array<int, 2>, 3> kEffectPairs{{{1, 1}, {1, 0}, {0, 0}}};

inline int cell_index(int z, int d) { return 2 * z + d; }

struct CellCounts {
  std::array<std::size_t, 4> count{};  // index 2z+d
  std::size_t operator()(int z, int d) const { return count[static_cast<std::size_t>(cell_index(z, d))]; }
  bool operator==(const CellCounts&) const = default;
};

struct Dataset {
  std::size_t n = 0;
  std::size_t p = 0;
  std::vector<double> x;  // row-major n x p
  std::vector<int> z;
  std::vector<int> d;
  std::vector<double> m;
  std::vector<double> y;
  Mediator mediator{};
  Monotonicity monotonicity = Monotonicity::Standard;
  std::vector<std::string> covariate_names;
  CellCounts cells{};

  Row row(std::size_t i) const { return Row(x.data() + i * p, p); }
  double xv(std::size_t i, std::size_t j) const { return x[i * p + j]; }

  bool operator==(const Dataset&) const = default;
};

inline CellCounts tabulate_cells(const std::vector<int>& z, const std::vector<int>& d) {
  CellCounts c;
  for (std::size_t i = 0; i < z.size(); ++i) ++c.count[static_cast<std::size_t>(cell_index(z[i], d[i]))];
  return c;
}

// Column-oriented raw table as read from a CSV file.
struct Table {
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
  const std::vector<double>* find(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
      if (names[j] == name) return &columns[j];
    return nullptr;
  }
};

struct ColumnMap {
  std::string z = "z";
  std::string d = "d";
  std::string m = "m";
  std::string y = "y";
  std::vector<std::string> x;
};

namespace detail {

inline int as_binary(double v, ErrorKind kind, const std::string& col, std::size_t i) {
  if (v == 0.0) return 0;
  if (v == 1.0) return 1;
  fail(kind, "column '" + col + "' row " + std::to_string(i) + " is not 0/1");
}

inline void require_finite(double v, const std::string& col, std::size_t i) {
  if (!std::isfinite(v)) fail(ErrorKind::InvalidValue, "missing or non-finite value in '" + col + "' row " + std::to_string(i));
}

}  // namespace detail

// Checks every Dataset invariant and recomputes the cell counts.
inline Dataset validate_dataset(Dataset data) {
  const std::size_t n = data.n;
  if (data.p < 1) fail(ErrorKind::MissingColumn, "at least one covariate column is required");
  if (data.z.size() != n || data.d.size() != n || data.m.size() != n || data.y.size() != n || data.x.size() != n * data.p)
    fail(ErrorKind::DimensionMismatch, "column lengths disagree with n");
  if (data.covariate_names.size() != data.p) {
    data.covariate_names.clear();
    for (std::size_t j = 0; j < data.p; ++j) data.covariate_names.push_back("x" + std::to_string(j + 1));
  }
  if (data.mediator.kind == Mediator::Kind::Binary) data.mediator.m_max = 1;
  if (data.mediator.kind == Mediator::Kind::Categorical && data.mediator.m_max < 1)
    fail(ErrorKind::InvalidValue, "categorical mediator needs m_max >= 1");
  for (std::size_t i = 0; i < n; ++i) {
    if (data.z[i] != 0 && data.z[i] != 1) fail(ErrorKind::NonBinaryTreatment, "row " + std::to_string(i));
    if (data.d[i] != 0 && data.d[i] != 1) fail(ErrorKind::InvalidValue, "event column row " + std::to_string(i) + " is not 0/1");
    detail::require_finite(data.m[i], "m", i);
    detail::require_finite(data.y[i], "y", i);
    for (std::size_t j = 0; j < data.p; ++j) detail::require_finite(data.xv(i, j), data.covariate_names[j], i);
    if (data.mediator.discrete()) {
      const double mv = data.m[i];
      if (mv != std::floor(mv) || mv < 0 || mv > data.mediator.m_max)
        fail(ErrorKind::InvalidValue, "mediator row " + std::to_string(i) + " outside 0.." + std::to_string(data.mediator.m_max));
    }
    if (data.monotonicity == Monotonicity::Strong && data.z[i] == 0 && data.d[i] == 1)
      fail(ErrorKind::StrongMonotonicityViolated, "row " + std::to_string(i) + " has z=0, d=1");
  }
  data.cells = tabulate_cells(data.z, data.d);
  const bool standard = data.monotonicity == Monotonicity::Standard;
  for (auto [zz, dd] : {std::pair{1, 1}, std::pair{1, 0}, std::pair{0, 0}, std::pair{0, 1}}) {
    if (!standard && zz == 0 && dd == 1) continue;
    if (data.cells(zz, dd) == 0)
      fail(ErrorKind::EmptyCell, "cell (z=" + std::to_string(zz) + ", d=" + std::to_string(dd) + ") has no rows");
  }
  return data;
}

inline Dataset validate_dataset(const Table& raw, const ColumnMap& schema, Mediator mediator, Monotonicity mode) {
  auto col = [&](const std::string& name) -> const std::vector<double>& {
    const auto* c = raw.find(name);
    if (!c) fail(ErrorKind::MissingColumn, "column '" + name + "' not found");
    return *c;
  };
  if (schema.x.empty()) fail(ErrorKind::MissingColumn, "no covariate columns mapped");
  const auto& zc = col(schema.z);
  const auto& dc = col(schema.d);
  const auto& mc = col(schema.m);
  const auto& yc = col(schema.y);
  std::vector<const std::vector<double>*> xc;
  for (const auto& name : schema.x) xc.push_back(&col(name));

  Dataset out;
  out.n = raw.rows();
  out.p = xc.size();
  out.mediator = mediator;
  out.monotonicity = mode;
  out.covariate_names = schema.x;
  out.z.resize(out.n);
  out.d.resize(out.n);
  out.m = mc;
  out.y = yc;
  out.x.resize(out.n * out.p);
  for (std::size_t i = 0; i < out.n; ++i) {
    if (std::isnan(zc[i])) fail(ErrorKind::InvalidValue, "missing value in '" + schema.z + "' row " + std::to_string(i));
    if (std::isnan(dc[i])) fail(ErrorKind::InvalidValue, "missing value in '" + schema.d + "' row " + std::to_string(i));
    out.z[i] = detail::as_binary(zc[i], ErrorKind::NonBinaryTreatment, schema.z, i);
    out.d[i] = detail::as_binary(dc[i], ErrorKind::InvalidValue, schema.d, i);
    for (std::size_t j = 0; j < out.p; ++j) out.x[i * out.p + j] = (*xc[j])[i];
  }
  return validate_dataset(std::move(out));
}

// Rows picked by index, used for resampling and fold subsets. Cell counts are recomputed
// but not enforced.
inline Dataset subset_rows(const Dataset& data, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.n = idx.size();
  out.p = data.p;
  out.mediator = data.mediator;
  out.monotonicity = data.monotonicity;
  out.covariate_names = data.covariate_names;
  out.x.resize(out.n * out.p);
  out.z.resize(out.n);
  out.d.resize(out.n);
  out.m.resize(out.n);
  out.y.resize(out.n);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const std::size_t i = idx[r];
    for (std::size_t j = 0; j < data.p; ++j) out.x[r * out.p + j] = data.xv(i, j);
    out.z[r] = data.z[i];
    out.d[r] = data.d[i];
    out.m[r] = data.m[i];
    out.y[r] = data.y[i];
  }
  out.cells = tabulate_cells(out.z, out.d);
  return out;
}

}  // namespace psmed
