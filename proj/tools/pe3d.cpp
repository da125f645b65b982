// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#include <pe3d/cli.hpp>

int main(int argc, char** argv) { return pe3d::cli::run(argc, argv); }
