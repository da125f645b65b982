// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <pe3d/detector.hpp>

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace pe3d {

enum class Suite { kTable1, kTable2, kTable3, kTable6 };

std::string_view to_string(Suite s);
Suite parse_suite(std::string_view s);

/// One configuration of a suite. `variant` and `params` become CSV columns.
struct AblationCell {
  std::string variant;
  std::string params;
  TrainConfig cfg;
};

/// table1: camera-ray over bin method, count and range.
/// table2: lidar-ray at d in {0.2, 1, 15, 30, 60}.
/// table3: pe2d, camera-ray, lidar-ray (0.2 and 60), oracle-point,
///         depth-point, topk.
/// table6: depth-point with shared vs separated anchor encoders.
std::vector<AblationCell> suite_cells(Suite suite, const TrainConfig& base);

struct AblationRow {
  std::string variant;
  std::string params;
  std::uint64_t seed = 0;
  int steps = 0;
  double final_error_m = 0.0;
};

/// Runs every cell for seeds base_seed, base_seed + 1, ... (seeds in total).
/// Scenes depend only on the seed, so all cells of one seed see the same data.
/// `progress` is called after each run.
std::vector<AblationRow> ablation_suite(const std::vector<AblationCell>& cells, int seeds, std::uint64_t base_seed,
                                        const std::function<void(const AblationRow&)>& progress = {});

/// Header `variant,params,seed,steps,final_error_m`; errors printed with %.17g.
std::string rows_to_csv(const std::vector<AblationRow>& rows);

/// Median of final errors of the rows with the given variant and params.
double median_error(const std::vector<AblationRow>& rows, std::string_view variant, std::string_view params);

}  // namespace pe3d
