// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace pe3d {

/// UD: uniform; LID: linearly increasing spacing; SID: log-uniform.
enum class BinMethod { kUD, kLID, kSID };

std::string_view to_string(BinMethod m);
BinMethod parse_bin_method(std::string_view s);

/// Ordered bin centers over [d_min, d_max]. All methods place the first and
/// last centers exactly on the range endpoints.
struct DepthBins {
  BinMethod method = BinMethod::kUD;
  double d_min = 0.0;
  double d_max = 0.0;
  std::vector<double> centers;

  int count() const { return static_cast<int>(centers.size()); }

  /// Uniform spacing d_delta = (d_max - d_min) / (N_D - 1).
  double uniform_interval() const;

  /// Degenerate one-center set used by the single-point (LiDAR-ray) encoding.
  static DepthBins single(double depth);
};

DepthBins make_bins(BinMethod method, double d_min, double d_max, int count);

/// Parses "method:min:max:count", e.g. "ud:1:61:64".
DepthBins parse_bins(std::string_view spec);
std::string bins_to_string(const DepthBins& bins);

struct Bracket {
  int lower;
  int upper;
  /// Weight of the lower bin: (d_upper - d) / (d_upper - d_lower).
  double weight;
};

/// Finds the two centers enclosing d. A depth exactly on a center returns that
/// center as the lower index with weight 1 (the last center brackets as
/// (N-2, N-1, 0)). Throws kOutOfRange outside [d_min, d_max].
Bracket bracket(double d, const DepthBins& bins);

}  // namespace pe3d
