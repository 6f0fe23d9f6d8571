#pragma once

#include <gtest/gtest.h>

#include <string>

#include "psmed/oracle_fixture.hpp"

namespace psmed::test {

inline std::string source_path(const std::string& rel) { return std::string(PSMED_SOURCE_DIR) + "/" + rel; }

inline const OracleFixture& reference_fixture() {
  static const OracleFixture fx = load_fixture(source_path("data/fixtures/reference_dgp.json"));
  return fx;
}

// Asserts that `expr` throws psmed::Error of the given kind.
#define EXPECT_PSMED_ERROR(expr, error_kind)                                            \
  do {                                                                                  \
    try {                                                                               \
      (void)(expr);                                                                     \
      ADD_FAILURE() << "expected " << ::psmed::to_string(error_kind) << ", nothing thrown"; \
    } catch (const ::psmed::Error& e__) {                                               \
      EXPECT_EQ(e__.kind(), error_kind) << e__.what();                                  \
    }                                                                                   \
  } while (0)

// Small Standard-mode dataset with all four cells present and a binary mediator.
inline Dataset tiny_dataset(Monotonicity mode = Monotonicity::Standard) {
  Dataset d;
  d.n = 8;
  d.p = 1;
  d.x = {0.1, 0.4, -0.3, 1.2, 0.7, -1.1, 0.0, 0.5};
  d.z = {1, 1, 1, 1, 0, 0, 0, 0};
  d.d = {1, 1, 0, 0, 0, 0, 1, 1};
  d.m = {1, 0, 1, 0, 0, 1, 0, 1};
  d.y = {3.0, 2.5, 2.0, 1.5, 1.0, 1.2, 2.2, 2.9};
  d.monotonicity = mode;
  if (mode == Monotonicity::Strong) d.d = {1, 1, 0, 0, 0, 0, 0, 0};
  return validate_dataset(d);
}

}  // namespace psmed::test
