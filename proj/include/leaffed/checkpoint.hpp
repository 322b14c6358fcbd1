#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "leaffed/error.hpp"
#include "leaffed/model.hpp"

namespace leaffed {

enum class CheckpointErrorKind { bad_magic, version_mismatch, truncated, spec_mismatch, io_failure };

class CheckpointError : public Error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& message) : Error(message), kind_(kind) {}
  CheckpointErrorKind kind() const noexcept { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "FSYN", u32 version, u32 spec length, spec JSON, then for each parameter
// in model order: u32 rank, rank x u32 dims, float32 values. All integers
// and floats little-endian.
std::vector<std::uint8_t> encode_checkpoint(const Model& model);
Model decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace leaffed
