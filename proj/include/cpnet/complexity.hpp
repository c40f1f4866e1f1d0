#pragma once

// Multiply-accumulate (MAC) and parameter accounting over a ModelGraph.
//
// A conv or transpose conv costs Cin * Cout * K^2 * W * H MACs with W, H the
// output spatial dims. Shift, concat, pooling and activations cost nothing.
// Layers inside a split path are "interior"; everything full-width (input
// stacking, fusion, head, shared decoder) is "boundary".
//
// Key-value report schema (one "key=value" per line, in this order):
//   model=<tag>
//   total_macs=<int>  total_params=<int>  interior_macs=<int>  boundary_macs=<int>
//   layer.<index>=<name> <kind> <cin> <cout> <k> <h> <w> <macs> <params> <interior|boundary>

#include <cstdint>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cpnet/models.hpp"

namespace cpnet {

inline std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out = 0;
  if (__builtin_mul_overflow(a, b, &out)) fail(ErrorKind::numeric, "MAC count overflows 64 bits");
  return out;
}

inline std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out = 0;
  if (__builtin_add_overflow(a, b, &out)) fail(ErrorKind::numeric, "MAC count overflows 64 bits");
  return out;
}

// O = Cin * Cout * K^2 * W * H, all arguments positive.
inline std::uint64_t conv_cost(std::int64_t cin, std::int64_t cout, std::int64_t k, std::int64_t w, std::int64_t h) {
  if (cin <= 0 || cout <= 0 || k <= 0 || w <= 0 || h <= 0) {
    fail(ErrorKind::value, "conv_cost: all arguments must be positive");
  }
  std::uint64_t o = static_cast<std::uint64_t>(cin);
  for (auto f : {cout, k, k, w, h}) o = checked_mul(o, static_cast<std::uint64_t>(f));
  return o;
}

struct LayerCost {
  std::string name;
  std::string role;
  LayerKind kind = LayerKind::input;
  int path = -1;
  std::int64_t cin = 0, cout = 0, k = 0, w = 0, h = 0;
  std::uint64_t macs = 0;
  std::uint64_t params = 0;

  bool interior() const { return path >= 0; }
};

struct ComplexityReport {
  std::string model;
  std::vector<LayerCost> layers;
  std::uint64_t total_macs = 0;
  std::uint64_t total_params = 0;
  std::uint64_t interior_macs = 0;
  std::uint64_t boundary_macs = 0;
};

template <class T>
ComplexityReport count_model(const ModelGraph<T>& model) {
  ComplexityReport r;
  r.model = model.layers().empty() ? "empty" : model.tag();
  for (const auto& l : model.layers()) {
    LayerCost c{l.name, l.role, l.kind, l.path, l.in_channels, l.out_channels, l.kernel, l.out_width, l.out_height};
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::conv_transpose:
        c.macs = conv_cost(l.in_channels, l.out_channels, l.kernel, l.out_width, l.out_height);
        c.params = checked_mul(static_cast<std::uint64_t>(l.out_channels),
                               checked_mul(static_cast<std::uint64_t>(l.in_channels),
                                           static_cast<std::uint64_t>(l.kernel * l.kernel)) +
                                   1);
        break;
      case LayerKind::input:
      case LayerKind::relu:
      case LayerKind::tanh:
      case LayerKind::maxpool:
      case LayerKind::concat:
      case LayerKind::shift: break;
      default: fail(ErrorKind::value, "count_model: no cost rule for layer '" + l.name + "'");
    }
    r.total_macs = checked_add(r.total_macs, c.macs);
    r.total_params = checked_add(r.total_params, c.params);
    (c.interior() ? r.interior_macs : r.boundary_macs) += c.macs;
    r.layers.push_back(std::move(c));
  }
  return r;
}

// Non-negative fraction kept in lowest terms.
struct Ratio {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  static Ratio of(std::uint64_t n, std::uint64_t d) {
    if (d == 0) fail(ErrorKind::value, "ratio with zero denominator");
    const auto g = std::gcd(n, d);
    return {g ? n / g : 0, g ? d / g : 1};
  }

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  double percent() const { return 100.0 * value(); }

  friend bool operator==(const Ratio&, const Ratio&) = default;
};

struct RatioRecord {
  Ratio macs;
  Ratio params;
};

inline RatioRecord compare(const ComplexityReport& candidate, const ComplexityReport& reference) {
  if (reference.total_macs == 0 || reference.total_params == 0) {
    fail(ErrorKind::value, "compare: reference '" + reference.model + "' has zero totals");
  }
  if (candidate.total_macs == 0 || candidate.total_params == 0) {
    fail(ErrorKind::value, "compare: candidate '" + candidate.model + "' has zero totals");
  }
  return {Ratio::of(candidate.total_macs, reference.total_macs),
          Ratio::of(candidate.total_params, reference.total_params)};
}

struct InteriorRow {
  std::string role;
  std::uint64_t reference_macs = 0;
  std::uint64_t path_macs = 0;  // MACs of one path's layer
  int paths = 0;                // paths carrying this role
  bool exact = false;           // reference == n^2 * path for every path
};

struct InteriorLaw {
  std::vector<InteriorRow> rows;
  std::uint64_t split_macs = 0;      // summed over all paths
  std::uint64_t reference_macs = 0;  // unsplit twins of the same roles
  Ratio aggregate;
  bool per_layer_exact = false;
  bool aggregate_exact = false;  // aggregate == 1 / n
};

// Matches every split-path conv of `split` with the full-width layer of the
// same role in `reference` and checks the per-layer 1/n^2 law and the
// aggregate n * (1/n^2) = 1/n law exactly.
inline InteriorLaw check_interior_law(const ComplexityReport& split, const ComplexityReport& reference, int n) {
  InteriorLaw law;
  law.per_layer_exact = true;
  const std::uint64_t n2 = static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n);
  for (const auto& c : split.layers) {
    if (!c.interior() || c.macs == 0) continue;
    const LayerCost* twin = nullptr;
    for (const auto& r : reference.layers) {
      if (r.path < 0 && r.role == c.role && r.kind == c.kind) twin = &r;
    }
    if (!twin) fail(ErrorKind::value, "interior law: no unsplit twin for '" + c.name + "'");
    InteriorRow* row = nullptr;
    for (auto& existing : law.rows) {
      if (existing.role == c.role) row = &existing;
    }
    if (!row) {
      law.rows.push_back({c.role, twin->macs, c.macs, 0, true});
      row = &law.rows.back();
      law.reference_macs = checked_add(law.reference_macs, twin->macs);
    }
    ++row->paths;
    if (c.macs != row->path_macs || checked_mul(c.macs, n2) != twin->macs) row->exact = false;
    law.split_macs = checked_add(law.split_macs, c.macs);
  }
  for (const auto& row : law.rows) {
    if (!row.exact || row.paths != n) law.per_layer_exact = false;
  }
  if (law.reference_macs == 0) fail(ErrorKind::value, "interior law: no interior layers");
  law.aggregate = Ratio::of(law.split_macs, law.reference_macs);
  law.aggregate_exact = law.aggregate == Ratio{1, static_cast<std::uint64_t>(n)};
  return law;
}

inline std::string format_count(std::uint64_t macs, bool as_flops = false) {
  std::ostringstream os;
  os << (as_flops ? 2 * macs : macs);
  return os.str();
}

inline std::string format_percent(const Ratio& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << r.percent() << '%';
  return os.str();
}

// Aligned text table, one row per costed layer plus totals.
inline void render_table(std::ostream& os, const ComplexityReport& r, bool as_flops = false) {
  const char* unit = as_flops ? "FLOPs" : "MACs";
  os << "model " << r.model << '\n';
  os << std::left << std::setw(28) << "layer" << std::setw(16) << "kind" << std::right << std::setw(6) << "Cin"
     << std::setw(6) << "Cout" << std::setw(3) << "K" << std::setw(5) << "H" << std::setw(5) << "W" << std::setw(14)
     << unit << std::setw(10) << "params" << "  class\n";
  for (const auto& c : r.layers) {
    if (c.kind != LayerKind::conv && c.kind != LayerKind::conv_transpose) continue;
    os << std::left << std::setw(28) << c.name << std::setw(16) << to_string(c.kind) << std::right << std::setw(6)
       << c.cin << std::setw(6) << c.cout << std::setw(3) << c.k << std::setw(5) << c.h << std::setw(5) << c.w
       << std::setw(14) << format_count(c.macs, as_flops) << std::setw(10) << c.params << "  "
       << (c.interior() ? "interior" : "boundary") << '\n';
  }
  os << "total " << unit << ' ' << format_count(r.total_macs, as_flops) << "  params " << r.total_params
     << "  interior " << format_count(r.interior_macs, as_flops) << "  boundary "
     << format_count(r.boundary_macs, as_flops) << '\n';
}

inline void write_report_kv(std::ostream& os, const ComplexityReport& r) {
  os << "model=" << r.model << '\n'
     << "total_macs=" << r.total_macs << '\n'
     << "total_params=" << r.total_params << '\n'
     << "interior_macs=" << r.interior_macs << '\n'
     << "boundary_macs=" << r.boundary_macs << '\n';
  for (std::size_t i = 0; i < r.layers.size(); ++i) {
    const auto& c = r.layers[i];
    os << "layer." << i << '=' << c.name << ' ' << to_string(c.kind) << ' ' << c.cin << ' ' << c.cout << ' ' << c.k
       << ' ' << c.h << ' ' << c.w << ' ' << c.macs << ' ' << c.params << ' '
       << (c.interior() ? "interior" : "boundary") << '\n';
  }
}

}  // namespace cpnet
