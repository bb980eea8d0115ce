// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "voxcycle/cli.hpp"

int main(int argc, char** argv) {
  return voxcycle::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
