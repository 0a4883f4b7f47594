// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "hcache/cli.hpp"

int main(int argc, char** argv) { return hcache::run_cli(argc, argv, std::cout, std::cerr); }
