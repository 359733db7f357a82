// SPDX-License-Identifier: Apache-2.0
#include "fact/cli.hpp"

int main(int argc, char** argv) { return fact::run_cli(argc, argv); }
