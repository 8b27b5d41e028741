#include "semcon/nets/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <torch/torch.h>

#include "semcon/core/errors.hpp"

namespace semcon::nets {

namespace {

constexpr char kMagic[8] = {'S', 'E', 'M', 'C', 'O', 'N', 'C', 'K'};

enum class DType : uint8_t { Float32 = 0, Float64 = 1, Int64 = 2 };

DType dtype_of(const torch::Tensor& t) {
  switch (t.scalar_type()) {
    case torch::kFloat32: return DType::Float32;
    case torch::kFloat64: return DType::Float64;
    case torch::kInt64: return DType::Int64;
    default: fail(ErrorKind::Schema, "checkpoint arrays must be float32, float64 or int64");
  }
}

torch::ScalarType scalar_of(DType d) {
  switch (d) {
    case DType::Float32: return torch::kFloat32;
    case DType::Float64: return torch::kFloat64;
    case DType::Int64: return torch::kInt64;
  }
  fail(ErrorKind::Io, "unknown dtype tag in checkpoint");
}

template <typename T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void put_string(std::ofstream& out, const std::string& s) {
  put<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  require(in.good(), ErrorKind::Io, "truncated checkpoint " + path.string());
  return value;
}

std::string get_string(std::ifstream& in, const std::filesystem::path& path) {
  const auto n = get<uint32_t>(in, path);
  require(n < (1u << 28), ErrorKind::Io, "corrupt string length in " + path.string());
  std::string s(n, '\0');
  in.read(s.data(), n);
  require(in.good() || n == 0, ErrorKind::Io, "truncated checkpoint " + path.string());
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::Io, "cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<uint32_t>(out, Checkpoint::kVersion);
  put_string(out, checkpoint.fingerprint);
  put_string(out, checkpoint.meta.dump());
  put<uint32_t>(out, static_cast<uint32_t>(checkpoint.params.size()));
  for (const auto& [name, tensor] : checkpoint.params.arrays()) {
    auto t = tensor.contiguous();
    put_string(out, name);
    put<uint8_t>(out, static_cast<uint8_t>(dtype_of(t)));
    put<uint32_t>(out, static_cast<uint32_t>(t.dim()));
    for (int64_t d = 0; d < t.dim(); ++d) put<int64_t>(out, t.size(d));
    out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
  }
  require(out.good(), ErrorKind::Io, "failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Prerequisite, "checkpoint not found: " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  require(in.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, ErrorKind::Io,
          path.string() + " is not a checkpoint");
  const auto version = get<uint32_t>(in, path);
  require(version == Checkpoint::kVersion, ErrorKind::Schema,
          "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.fingerprint = get_string(in, path);
  ckpt.meta = nlohmann::json::parse(get_string(in, path));
  const auto count = get<uint32_t>(in, path);
  for (uint32_t i = 0; i < count; ++i) {
    const auto name = get_string(in, path);
    const auto dtype = scalar_of(static_cast<DType>(get<uint8_t>(in, path)));
    const auto rank = get<uint32_t>(in, path);
    require(rank <= 8, ErrorKind::Io, "corrupt rank in " + path.string());
    std::vector<int64_t> dims(rank);
    for (auto& d : dims) d = get<int64_t>(in, path);
    auto t = torch::empty(dims, dtype);
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
    require(in.good() || t.nbytes() == 0, ErrorKind::Io, "truncated checkpoint " + path.string());
    ckpt.params.add(name, t);
  }
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_fingerprint) {
  auto ckpt = read_checkpoint(path);
  require(ckpt.fingerprint == expected_fingerprint, ErrorKind::Schema,
          "architecture fingerprint mismatch in " + path.string() + ": stored '" + ckpt.fingerprint +
              "', expected '" + expected_fingerprint + "'");
  return ckpt;
}

}  // namespace semcon::nets
