// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace pe3d::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Subcommands: render, encode, similarity, discrepancy-sweep, ablate,
/// gradcheck. The resolved config and seed go to stderr; PE3D_SEED overrides
/// --seed.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

}  // namespace pe3d::cli
