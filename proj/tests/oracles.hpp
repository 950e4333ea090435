#pragma once

// Reference models used to cross-check the library under test. Both are
// deliberately written with different machinery than the implementation:
// the region tracker is a plain ordered map instead of a fixed row array,
// and the instruction packer places bits one at a time instead of
// shift-or composition.

#include <bitset>
#include <cstdint>
#include <map>
#include <utility>

namespace oracles {

/// Brute-force tracker of live protected regions, keyed by tag.
class LiveRegionOracle {
 public:
  enum class Store { Ok, Full, Duplicate, Zero };

  explicit LiveRegionOracle(std::size_t capacity) : capacity_(capacity) {}

  Store store(std::uint64_t tag, std::uint64_t base, std::uint64_t bound) {
    if (tag == 0) return Store::Zero;
    if (regions_.count(tag) != 0) return Store::Duplicate;
    if (regions_.size() >= capacity_) return Store::Full;
    regions_[tag] = {base, bound};
    return Store::Ok;
  }

  /// A missing tag is out of bounds; otherwise the address must lie in
  /// [base, bound). Tag 0 is never checked.
  bool out_of_bounds(std::uint64_t tag, std::uint64_t addr) const {
    if (tag == 0) return false;
    auto it = regions_.find(tag);
    if (it == regions_.end()) return true;
    return addr < it->second.first || addr >= it->second.second;
  }

  bool release(std::uint64_t tag) { return regions_.erase(tag) > 0; }

  std::size_t live() const { return regions_.size(); }

 private:
  std::size_t capacity_;
  std::map<std::uint64_t, std::pair<std::uint64_t, std::uint64_t>> regions_;
};

/// Bit-by-bit packer for the 32-bit coprocessor instruction word:
/// funct7[31:25] rs2[24:20] rs1[19:15] xd[14] xs1[13] xs2[12] rd[11:7]
/// opcode[6:0].
inline std::uint32_t pack_instruction_bits(std::uint8_t funct7,
                                           std::uint8_t rs2, std::uint8_t rs1,
                                           bool xd, bool xs1, bool xs2,
                                           std::uint8_t rd,
                                           std::uint8_t opcode) {
  std::bitset<32> w;
  auto put = [&w](int at, int width, std::uint32_t value) {
    for (int i = 0; i < width; ++i) w[at + i] = ((value >> i) & 1u) != 0;
  };
  put(0, 7, opcode);
  put(7, 5, rd);
  w[12] = xs2;
  w[13] = xs1;
  w[14] = xd;
  put(15, 5, rs1);
  put(20, 5, rs2);
  put(25, 7, funct7);
  return static_cast<std::uint32_t>(w.to_ulong());
}

}  // namespace oracles
