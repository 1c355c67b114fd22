// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <gtest/gtest.h>

#include "gcrf/error.hpp"
#include "gcrf/random.hpp"
#include "gcrf/similarity.hpp"

namespace gcrf::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = "gcrf_test";
    if (info) name += std::string("_") + info->test_suite_name() + "_" + info->name();
    path_ = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

inline PixelEmbeddings random_embeddings(int dim, int pixels, Rng& rng, double scale = 1.0) {
  PixelEmbeddings e;
  e.values = Eigen::MatrixXd(dim, pixels);
  for (Eigen::Index i = 0; i < e.values.size(); ++i) e.values.data()[i] = scale * rng.normal();
  return e;
}

// ErrorKind thrown by f, or nullopt when it returns normally.
template <typename F>
std::optional<ErrorKind> kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

}  // namespace gcrf::testing
