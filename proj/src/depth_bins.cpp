// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#include <pe3d/depth_bins.hpp>
#include <pe3d/error.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace pe3d {

std::string_view to_string(BinMethod m) {
  switch (m) {
    case BinMethod::kUD: return "ud";
    case BinMethod::kLID: return "lid";
    case BinMethod::kSID: return "sid";
  }
  return "?";
}

BinMethod parse_bin_method(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "ud") return BinMethod::kUD;
  if (lower == "lid") return BinMethod::kLID;
  if (lower == "sid") return BinMethod::kSID;
  throw Error(ErrorCode::kInvalidArgument, "unknown discretization method '" + std::string(s) + "'");
}

double DepthBins::uniform_interval() const {
  if (centers.size() < 2) return 0.0;
  return (d_max - d_min) / static_cast<double>(centers.size() - 1);
}

DepthBins DepthBins::single(double depth) {
  if (!(depth > 0.0)) throw Error(ErrorCode::kInvalidRange, "fixed depth must be > 0");
  return DepthBins{BinMethod::kUD, depth, depth, {depth}};
}

DepthBins make_bins(BinMethod method, double d_min, double d_max, int count) {
  if (!(d_min > 0.0) || !(d_max > d_min) || !std::isfinite(d_max)) {
    throw Error(ErrorCode::kInvalidRange, "require 0 < d_min < d_max");
  }
  if (count < 2) throw Error(ErrorCode::kTooFewBins, "N_D must be >= 2");
  DepthBins bins{method, d_min, d_max, {}};
  bins.centers.resize(count);
  const double n1 = count - 1;
  const double span = d_max - d_min;
  for (int i = 0; i < count; ++i) {
    switch (method) {
      case BinMethod::kUD:
        bins.centers[i] = d_min + i * span / n1;
        break;
      case BinMethod::kLID:
        bins.centers[i] = d_min + span * (static_cast<double>(i) * (i + 1)) / (n1 * count);
        break;
      case BinMethod::kSID:
        bins.centers[i] = std::exp(std::log(d_min) + (i / n1) * std::log(d_max / d_min));
        break;
    }
  }
  // exp/log rounding can miss the endpoints by an ulp.
  bins.centers.front() = d_min;
  bins.centers.back() = d_max;
  return bins;
}

DepthBins parse_bins(std::string_view spec) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : spec) {
    if (c == ':') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  if (parts.size() != 4) {
    throw Error(ErrorCode::kInvalidArgument, "bins must be method:min:max:count, got '" + std::string(spec) + "'");
  }
  try {
    std::size_t used = 0;
    const double lo = std::stod(parts[1], &used);
    if (used != parts[1].size()) throw std::invalid_argument("min");
    const double hi = std::stod(parts[2], &used);
    if (used != parts[2].size()) throw std::invalid_argument("max");
    const int n = std::stoi(parts[3], &used);
    if (used != parts[3].size()) throw std::invalid_argument("count");
    return make_bins(parse_bin_method(parts[0]), lo, hi, n);
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::kInvalidArgument, "malformed bins '" + std::string(spec) + "'");
  }
}

std::string bins_to_string(const DepthBins& bins) {
  std::ostringstream os;
  os << to_string(bins.method) << ':' << bins.d_min << ':' << bins.d_max << ':' << bins.count();
  return os.str();
}

Bracket bracket(double d, const DepthBins& bins) {
  const auto& c = bins.centers;
  if (c.size() < 2) throw Error(ErrorCode::kTooFewBins, "bracket needs at least two bins");
  if (!(d >= c.front() && d <= c.back())) {
    throw Error(ErrorCode::kOutOfRange, "depth outside the bin range");
  }
  // First center strictly greater than d; the lower bin is the one before it.
  auto it = std::upper_bound(c.begin(), c.end(), d);
  int upper = static_cast<int>(it - c.begin());
  if (upper >= static_cast<int>(c.size())) {
    const int n = static_cast<int>(c.size());
    return {n - 2, n - 1, 0.0};
  }
  const int lower = upper - 1;
  const double w = (c[upper] - d) / (c[upper] - c[lower]);
  return {lower, upper, w};
}

}  // namespace pe3d
