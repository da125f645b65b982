// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#include <pe3d/ablation.hpp>
#include <pe3d/error.hpp>

#include <algorithm>
#include <cstdio>

namespace pe3d {

namespace {

std::string fmt_depth(double d) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "d=%g", d);
  return buf;
}

AblationCell camera_ray(const TrainConfig& base, BinMethod m, double lo, double hi, int n) {
  AblationCell c{"camera-ray", "", base};
  c.cfg.variant = PeVariant::kCameraRay;
  c.cfg.ray_bins = make_bins(m, lo, hi, n);
  c.params = "bins=" + bins_to_string(c.cfg.ray_bins);
  return c;
}

AblationCell lidar(const TrainConfig& base, double d) {
  AblationCell c{"lidar-ray", fmt_depth(d), base};
  c.cfg.variant = PeVariant::kLidarRay;
  c.cfg.fixed_depth = d;
  return c;
}

AblationCell simple(const TrainConfig& base, PeVariant v, std::string params) {
  AblationCell c{std::string(to_string(v)), std::move(params), base};
  c.cfg.variant = v;
  return c;
}

}  // namespace

std::string_view to_string(Suite s) {
  switch (s) {
    case Suite::kTable1: return "table1";
    case Suite::kTable2: return "table2";
    case Suite::kTable3: return "table3";
    case Suite::kTable6: return "table6";
  }
  return "?";
}

Suite parse_suite(std::string_view s) {
  for (Suite v : {Suite::kTable1, Suite::kTable2, Suite::kTable3, Suite::kTable6}) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorCode::kInvalidArgument, "suite: unknown value '" + std::string(s) + "'");
}

std::vector<AblationCell> suite_cells(Suite suite, const TrainConfig& base) {
  std::vector<AblationCell> cells;
  switch (suite) {
    case Suite::kTable1:
      cells.push_back(camera_ray(base, BinMethod::kLID, 1, 61, 64));
      cells.push_back(camera_ray(base, BinMethod::kSID, 1, 61, 64));
      cells.push_back(camera_ray(base, BinMethod::kUD, 1, 61, 64));
      cells.push_back(camera_ray(base, BinMethod::kUD, 1, 31, 64));
      cells.push_back(camera_ray(base, BinMethod::kUD, 31, 61, 64));
      cells.push_back(camera_ray(base, BinMethod::kUD, 1, 61, 32));
      cells.push_back(camera_ray(base, BinMethod::kUD, 1, 61, 2));
      break;
    case Suite::kTable2:
      for (double d : {0.2, 1.0, 15.0, 30.0, 60.0}) cells.push_back(lidar(base, d));
      break;
    case Suite::kTable3:
      cells.push_back(simple(base, PeVariant::kPe2d, "-"));
      cells.push_back(camera_ray(base, BinMethod::kUD, 1, 61, 64));
      cells.push_back(lidar(base, 0.2));
      cells.push_back(lidar(base, 60.0));
      cells.push_back(simple(base, PeVariant::kOraclePoint, "-"));
      cells.push_back(simple(base, PeVariant::kDepthPoint, "bins=" + bins_to_string(base.head_bins)));
      cells.push_back(simple(base, PeVariant::kTopk, "k=" + std::to_string(base.topk)));
      break;
    case Suite::kTable6: {
      AblationCell shared = simple(base, PeVariant::kDepthPoint, "anchors=shared");
      shared.cfg.sharing = EncoderSharing::kShared;
      AblationCell separated = simple(base, PeVariant::kDepthPoint, "anchors=separated");
      separated.cfg.sharing = EncoderSharing::kSeparated;
      cells.push_back(std::move(shared));
      cells.push_back(std::move(separated));
      break;
    }
  }
  return cells;
}

std::vector<AblationRow> ablation_suite(const std::vector<AblationCell>& cells, int seeds, std::uint64_t base_seed,
                                        const std::function<void(const AblationRow&)>& progress) {
  if (seeds < 1) throw Error(ErrorCode::kInvalidArgument, "seeds must be >= 1");
  std::vector<AblationRow> rows;
  for (int s = 0; s < seeds; ++s) {
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(s);
    for (const auto& cell : cells) {
      TrainConfig cfg = cell.cfg;
      cfg.seed = seed;
      const TrainResult r = train_toy(make_scenes(cfg), cfg);
      rows.push_back(AblationRow{cell.variant, cell.params, seed, cfg.steps, r.final_error_m});
      if (progress) progress(rows.back());
    }
  }
  return rows;
}

std::string rows_to_csv(const std::vector<AblationRow>& rows) {
  std::string out = "variant,params,seed,steps,final_error_m\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.final_error_m);
    out += r.variant + "," + r.params + "," + std::to_string(r.seed) + "," + std::to_string(r.steps) + "," + buf + "\n";
  }
  return out;
}

double median_error(const std::vector<AblationRow>& rows, std::string_view variant, std::string_view params) {
  std::vector<double> e;
  for (const auto& r : rows) {
    if (r.variant == variant && r.params == params) e.push_back(r.final_error_m);
  }
  if (e.empty()) throw Error(ErrorCode::kInvalidArgument, "no rows for " + std::string(variant) + " " + std::string(params));
  std::sort(e.begin(), e.end());
  const std::size_t n = e.size();
  return n % 2 ? e[n / 2] : 0.5 * (e[n / 2 - 1] + e[n / 2]);
}

}  // namespace pe3d
