#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pimnn {

enum class ErrorCode {
  OverAllocation,
  Misaligned,
  UnequalBlocks,
  MramOverflow,
  WramOverflow,
  IramOverflow,
  KernelFault,
  UnknownKernel,
  Busy,
  InvalidArgument,
  DimMismatch,
  BlockTooLarge,
  ParseError,
  DimError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::OverAllocation: return "OVER_ALLOCATION";
    case ErrorCode::Misaligned: return "MISALIGNED";
    case ErrorCode::UnequalBlocks: return "UNEQUAL_BLOCKS";
    case ErrorCode::MramOverflow: return "MRAM_OVERFLOW";
    case ErrorCode::WramOverflow: return "WRAM_OVERFLOW";
    case ErrorCode::IramOverflow: return "IRAM_OVERFLOW";
    case ErrorCode::KernelFault: return "KERNEL_FAULT";
    case ErrorCode::UnknownKernel: return "UNKNOWN_KERNEL";
    case ErrorCode::Busy: return "BUSY";
    case ErrorCode::InvalidArgument: return "INVALID_ARGUMENT";
    case ErrorCode::DimMismatch: return "DIM_MISMATCH";
    case ErrorCode::BlockTooLarge: return "BLOCK_TOO_LARGE";
    case ErrorCode::ParseError: return "PARSE_ERROR";
    case ErrorCode::DimError: return "DIM_ERROR";
    case ErrorCode::IoError: return "IO_ERROR";
  }
  return "UNKNOWN";
}

/// Every failure raised by the library. The message is prefixed with the
/// code name so CLI output can be grepped.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Error(ErrorCode code, const std::string& what, std::uint32_t dpu_id, std::uint64_t offset)
      : std::runtime_error(std::string(to_string(code)) + ": " + what + " (dpu " +
                           std::to_string(dpu_id) + ", offset " + std::to_string(offset) + ")"),
        code_(code),
        dpu_id_(dpu_id),
        offset_(offset) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::uint32_t> dpu_id() const noexcept { return dpu_id_; }
  std::optional<std::uint64_t> offset() const noexcept { return offset_; }

 private:
  ErrorCode code_;
  std::optional<std::uint32_t> dpu_id_;
  std::optional<std::uint64_t> offset_;
};

}  // namespace pimnn
