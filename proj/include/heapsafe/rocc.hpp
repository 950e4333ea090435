#pragma once

#include <cstdint>
#include <optional>

#include "heapsafe/errors.hpp"
#include "heapsafe/pointer.hpp"

namespace heapsafe {

/// custom0 opcode carried by every HeapSafe instruction.
inline constexpr std::uint8_t kCustom0Opcode = 0b0001011;

/// funct7 selectors understood by the engine.
enum class HsFunction : std::uint8_t {
  Store = 0b0000000,
  Validate = 0b0000001,
  Free = 0b0000011,
};

/// Register index conventions used by the command builders. The simulator
/// has no architectural register file; operand values travel alongside the
/// instruction, and these indices only shape the encoded word.
inline constexpr std::uint8_t kPointerReg = 10;
inline constexpr std::uint8_t kSizeReg = 11;
inline constexpr std::uint8_t kResultReg = 11;

/// Decoded form of a 32-bit custom coprocessor instruction.
///
/// Bit layout of the encoded word (MSB to LSB):
///   funct7[31:25] rs2[24:20] rs1[19:15] xd[14] xs1[13] xs2[12]
///   rd[11:7] opcode[6:0]
struct RoccInstruction {
  std::uint8_t opcode = kCustom0Opcode;
  std::uint8_t rd = 0;
  std::uint8_t rs1 = 0;
  std::uint8_t rs2 = 0;
  bool xd = false;
  bool xs1 = false;
  bool xs2 = false;
  std::uint8_t funct7 = 0;

  friend constexpr bool operator==(const RoccInstruction&,
                                   const RoccInstruction&) = default;
};

/// Packs an instruction into its 32-bit wire form.
/// Throws FieldOutOfRange if any field exceeds its width.
constexpr std::uint32_t encode(const RoccInstruction& i) {
  if (i.opcode > 0x7f) throw FieldOutOfRange("opcode exceeds 7 bits");
  if (i.rd > 0x1f) throw FieldOutOfRange("rd exceeds 5 bits");
  if (i.rs1 > 0x1f) throw FieldOutOfRange("rs1 exceeds 5 bits");
  if (i.rs2 > 0x1f) throw FieldOutOfRange("rs2 exceeds 5 bits");
  if (i.funct7 > 0x7f) throw FieldOutOfRange("funct7 exceeds 7 bits");
  return (static_cast<std::uint32_t>(i.funct7) << 25) |
         (static_cast<std::uint32_t>(i.rs2) << 20) |
         (static_cast<std::uint32_t>(i.rs1) << 15) |
         (static_cast<std::uint32_t>(i.xd) << 14) |
         (static_cast<std::uint32_t>(i.xs1) << 13) |
         (static_cast<std::uint32_t>(i.xs2) << 12) |
         (static_cast<std::uint32_t>(i.rd) << 7) |
         static_cast<std::uint32_t>(i.opcode);
}

constexpr bool is_known_function(std::uint8_t funct7) {
  return funct7 == static_cast<std::uint8_t>(HsFunction::Store) ||
         funct7 == static_cast<std::uint8_t>(HsFunction::Validate) ||
         funct7 == static_cast<std::uint8_t>(HsFunction::Free);
}

/// Unpacks a 32-bit word. Throws UnknownOpcode unless the opcode is
/// custom0, UnknownFunction unless funct7 selects a HeapSafe function.
constexpr RoccInstruction decode(std::uint32_t w) {
  RoccInstruction i;
  i.opcode = static_cast<std::uint8_t>(w & 0x7f);
  i.rd = static_cast<std::uint8_t>((w >> 7) & 0x1f);
  i.xs2 = ((w >> 12) & 1) != 0;
  i.xs1 = ((w >> 13) & 1) != 0;
  i.xd = ((w >> 14) & 1) != 0;
  i.rs1 = static_cast<std::uint8_t>((w >> 15) & 0x1f);
  i.rs2 = static_cast<std::uint8_t>((w >> 20) & 0x1f);
  i.funct7 = static_cast<std::uint8_t>((w >> 25) & 0x7f);
  if (i.opcode != kCustom0Opcode)
    throw UnknownOpcode("opcode is not custom0");
  if (!is_known_function(i.funct7))
    throw UnknownFunction("funct7 does not select a HeapSafe function");
  return i;
}

/// Which engine function the instruction selects.
constexpr HsFunction function_of(const RoccInstruction& i) {
  if (!is_known_function(i.funct7))
    throw UnknownFunction("funct7 does not select a HeapSafe function");
  return static_cast<HsFunction>(i.funct7);
}

/// The issuing core waits for a response iff xd is set and rd is not x0.
constexpr bool expects_response(const RoccInstruction& i) {
  return i.xd && i.rd != 0;
}

/// One command over the coprocessor request channel: the instruction plus
/// the source-register values it names. Operand words are meaningful only
/// when the matching xs flag is set.
struct EngineCommand {
  RoccInstruction inst;
  std::uint64_t rs1_value = 0;
  std::uint64_t rs2_value = 0;
  unsigned hart_id = 0;
  bool privileged = true;
};

/// Response over the coprocessor response channel, produced only for
/// commands that expect one.
struct EngineResponse {
  std::uint8_t rd = 0;
  std::uint64_t data = 0;
};

/// Metadata-store command: non-blocking, carries the safe pointer in rs1
/// and the allocation size in rs2.
constexpr EngineCommand build_hs_store(SafePointer sp, std::uint64_t size) {
  if (size == 0) throw ZeroSize("hs_store of a zero-sized buffer");
  EngineCommand cmd;
  cmd.inst.funct7 = static_cast<std::uint8_t>(HsFunction::Store);
  cmd.inst.rs1 = kPointerReg;
  cmd.inst.rs2 = kSizeReg;
  cmd.inst.xs1 = true;
  cmd.inst.xs2 = true;
  cmd.inst.xd = false;
  cmd.inst.rd = 0;
  cmd.rs1_value = sp.bits;
  cmd.rs2_value = size;
  return cmd;
}

/// Bounds-validation command: the issuing side awaits the verdict in rd.
constexpr EngineCommand build_hs_validate(SafePointer sp) {
  EngineCommand cmd;
  cmd.inst.funct7 = static_cast<std::uint8_t>(HsFunction::Validate);
  cmd.inst.rs1 = kPointerReg;
  cmd.inst.xs1 = true;
  cmd.inst.xd = true;
  cmd.inst.rd = kResultReg;
  cmd.rs1_value = sp.bits;
  return cmd;
}

/// Metadata-invalidation command: non-blocking, fire and forget.
constexpr EngineCommand build_hs_free(SafePointer sp) {
  EngineCommand cmd;
  cmd.inst.funct7 = static_cast<std::uint8_t>(HsFunction::Free);
  cmd.inst.rs1 = kPointerReg;
  cmd.inst.xs1 = true;
  cmd.inst.xd = false;
  cmd.inst.rd = 0;
  cmd.rs1_value = sp.bits;
  return cmd;
}

}  // namespace heapsafe
