// Copyright 2026 The GenRec Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>

int main() {
  std::puts("genrec: pipeline commands not wired up yet");
  return 2;
}
