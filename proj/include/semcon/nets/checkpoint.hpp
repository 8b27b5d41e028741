#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "semcon/core/types.hpp"

namespace semcon::nets {

/// Versioned container of named arrays with an architecture fingerprint.
///
/// Layout (little endian): "SEMCONCK", u32 version, string fingerprint, string meta-json,
/// u32 count, then per array: string name, u8 dtype, u32 rank, i64 dims[rank], raw data.
/// Strings are u32 length + bytes.
struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  std::string fingerprint;
  NetParams params;
  nlohmann::json meta = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Throws Schema error when the stored fingerprint differs from `expected_fingerprint`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_fingerprint);
/// Reads without checking the fingerprint.
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace semcon::nets
