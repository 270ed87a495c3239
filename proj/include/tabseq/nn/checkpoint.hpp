#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "tabseq/nn/tensor.hpp"

namespace tabseq::nn {

enum class DType { F32, F64 };

/// On disk: "TABSEQCK", u32 version, u64 header length, JSON header, then
/// raw little-endian tensor data in header order.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  nlohmann::json model;     // architecture spec
  std::string vocab_hash;   // hex fingerprint of the token encoding, may be empty
  std::uint64_t seed = 0;
  DType dtype = DType::F64;
  ParamSet params;
};

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Serialized bytes, as written by save_checkpoint.
std::string checkpoint_bytes(const Checkpoint& ck);
Checkpoint checkpoint_from_bytes(std::string_view bytes);

/// Copies values of same-named, same-shaped parameters from `src`.
/// Returns how many were copied.
std::size_t copy_matching(const ParamSet& src, ParamSet& dst);

}  // namespace tabseq::nn
