// Copyright 2026 The Qomni Authors.
// SPDX-License-Identifier: Apache-2.0

#include "qomni_cli.hpp"

int main(int argc, char** argv) { return qomni::cli::run_cli(argc, argv); }
