// Copyright (C) 2026 The eqsim-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include "eqsim/experiment.hpp"

int main(int argc, char** argv) {
  return eqsim::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
