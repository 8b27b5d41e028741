#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "semcon/core/errors.hpp"

namespace testing {

/// Fresh scratch directory under the build tree's temp area.
inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("semcon_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

template <typename F>
semcon::ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const semcon::Error& e) {
    return e.kind();
  }
  FAIL("expected a semcon::Error");
  return semcon::ErrorKind::Io;
}

}  // namespace testing
