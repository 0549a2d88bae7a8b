// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "oracle.hpp"

TEST_CASE("autodiff matches central differences for every differentiable op") {
  for (const auto& op : oracle::differentiable_ops()) {
    const auto r = oracle::check_gradient(op, 0x9d1f);
    INFO(op.name << " max relative error " << r.max_rel_error);
    CHECK(r.instances >= oracle::kFdInstances);
    CHECK(r.max_rel_error < oracle::kFdRelTol);
  }
}
