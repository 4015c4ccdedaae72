// Copyright 2026 The Memaudit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#ifndef MEMAUDIT_TESTS_TEST_UTIL_H_
#define MEMAUDIT_TESTS_TEST_UTIL_H_

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "gtest/gtest.h"

#define MEMAUDIT_CONCAT_INNER(a, b) a##b
#define MEMAUDIT_CONCAT(a, b) MEMAUDIT_CONCAT_INNER(a, b)

#define ASSERT_OK(expr)                                   \
  do {                                                    \
    const absl::Status _st = ::memaudit::testing::AsStatus(expr); \
    ASSERT_TRUE(_st.ok()) << _st;                         \
  } while (0)

#define EXPECT_OK(expr) EXPECT_TRUE(::memaudit::testing::AsStatus(expr).ok())

#define ASSERT_OK_AND_ASSIGN(lhs, expr) \
  ASSERT_OK_AND_ASSIGN_IMPL(MEMAUDIT_CONCAT(_statusor_, __LINE__), lhs, expr)

#define ASSERT_OK_AND_ASSIGN_IMPL(tmp, lhs, expr) \
  auto tmp = (expr);                              \
  ASSERT_TRUE(tmp.ok()) << tmp.status();          \
  lhs = *std::move(tmp)

namespace memaudit::testing {

inline absl::Status AsStatus(const absl::Status& s) { return s; }
template <typename T>
absl::Status AsStatus(const absl::StatusOr<T>& s) {
  return s.status();
}

}  // namespace memaudit::testing

#endif  // MEMAUDIT_TESTS_TEST_UTIL_H_
