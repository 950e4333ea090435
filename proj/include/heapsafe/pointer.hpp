#pragma once

#include <bit>
#include <cstdint>

#include "heapsafe/errors.hpp"

namespace heapsafe {

/// Width of the tag field packed into the top bits of a 64-bit pointer.
/// Derived from the metadata table size: a table with 2^k rows keys its
/// rows by a k-bit tag.
class TagWidth {
 public:
  explicit constexpr TagWidth(unsigned bits) : bits_(bits) {
    if (bits < 1 || bits > 16)
      throw FieldOutOfRange("tag width must be in [1, 16]");
  }

  /// Tag width for a metadata table of `mt_size` rows (power of two, >= 2).
  static constexpr TagWidth for_table_size(std::uint64_t mt_size) {
    if (mt_size < 2 || !std::has_single_bit(mt_size))
      throw FieldOutOfRange("metadata table size must be a power of two >= 2");
    return TagWidth(static_cast<unsigned>(std::countr_zero(mt_size)));
  }

  constexpr unsigned bits() const { return bits_; }
  constexpr unsigned raw_bits() const { return 64u - bits_; }

  /// Number of distinct tag values, 2^bits. Tag 0 is reserved for
  /// unprotected pointers, so one fewer tag is usable.
  constexpr std::uint64_t tag_count() const { return std::uint64_t{1} << bits_; }
  constexpr std::uint64_t max_tag() const { return tag_count() - 1; }

  /// Mask covering the raw-address bits (the low 64 - bits positions).
  constexpr std::uint64_t raw_mask() const { return ~std::uint64_t{0} >> bits_; }

  friend constexpr bool operator==(TagWidth, TagWidth) = default;

 private:
  unsigned bits_;
};

/// A 64-bit word carrying a tag in its top TagWidth bits and a raw address
/// in the rest. Tag 0 marks a plain, unprotected address; the encoding is
/// bit-compatible with untagged pointers.
struct SafePointer {
  std::uint64_t bits = 0;

  friend constexpr bool operator==(SafePointer, SafePointer) = default;
};

/// Packs `tag` and `raw` into a SafePointer.
/// Throws RawAddressTooHigh if the raw address reaches into the tag field,
/// FieldOutOfRange if the tag does not fit the width.
constexpr SafePointer make_safe(std::uint64_t tag, std::uint64_t raw, TagWidth w) {
  if (tag > w.max_tag()) throw FieldOutOfRange("tag exceeds tag width");
  if ((raw & ~w.raw_mask()) != 0)
    throw RawAddressTooHigh("raw address overlaps the tag field");
  return SafePointer{(tag << w.raw_bits()) | raw};
}

/// Top `w` bits of the pointer.
constexpr std::uint64_t tag_of(SafePointer p, TagWidth w) {
  return p.bits >> w.raw_bits();
}

/// The pointer with its tag bits cleared: the plain memory address.
constexpr std::uint64_t raw_of(SafePointer p, TagWidth w) {
  return p.bits & w.raw_mask();
}

/// Pointer arithmetic: the tag rides along unchanged, only the raw part
/// moves. Throws AddressRangeOverflow if the sum leaves the raw-address
/// range (a silent wrap would corrupt the tag).
constexpr SafePointer add_offset(SafePointer p, std::int64_t off, TagWidth w) {
  const std::uint64_t raw = raw_of(p, w);
  if (off >= 0) {
    const std::uint64_t delta = static_cast<std::uint64_t>(off);
    if (delta > w.raw_mask() - raw)
      throw AddressRangeOverflow("offset spills into tag bits");
  } else {
    const std::uint64_t delta = std::uint64_t{0} - static_cast<std::uint64_t>(off);
    if (delta > raw)
      throw AddressRangeOverflow("offset underflows the raw-address range");
  }
  // In-range arithmetic never carries into the tag field, so whole-word
  // addition is exact.
  return SafePointer{p.bits + static_cast<std::uint64_t>(off)};
}

/// Type conversion of a safe pointer: a no-op on the bits.
constexpr SafePointer reinterpret(SafePointer p) { return p; }

/// True iff the pointer carries a nonzero tag. Null and integer-derived
/// pointers carry tag 0 and are excluded from validation.
constexpr bool is_protected(SafePointer p, TagWidth w) {
  return tag_of(p, w) != 0;
}

/// Pointer comparison and ordering follow the carried address, not the
/// tagged word: two aliases of the same byte compare equal even when
/// their tags differ.
constexpr bool raw_equal(SafePointer a, SafePointer b, TagWidth w) {
  return raw_of(a, w) == raw_of(b, w);
}

constexpr bool raw_less(SafePointer a, SafePointer b, TagWidth w) {
  return raw_of(a, w) < raw_of(b, w);
}

}  // namespace heapsafe
