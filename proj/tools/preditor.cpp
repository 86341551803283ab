// SPDX-License-Identifier: Apache-2.0
#include "preditor/cli.hpp"

int main(int argc, char** argv) { return preditor::cli::run(argc, argv); }
