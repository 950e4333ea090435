#pragma once

#include <stdexcept>
#include <string>

namespace heapsafe {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- pointer tagging ---

// Raw address collides with the tag field of a safe pointer.
class RawAddressTooHigh : public Error {
 public:
  using Error::Error;
};

// Pointer arithmetic spilled out of the raw-address range into the tag bits.
class AddressRangeOverflow : public Error {
 public:
  using Error::Error;
};

// A field value does not fit its declared bit width.
class FieldOutOfRange : public Error {
 public:
  using Error::Error;
};

// --- instruction codec ---

class UnknownOpcode : public Error {
 public:
  using Error::Error;
};

class UnknownFunction : public Error {
 public:
  using Error::Error;
};

class ZeroSize : public Error {
 public:
  using Error::Error;
};

// --- engine ---

class IllegalInstruction : public Error {
 public:
  using Error::Error;
};

class PrivilegeViolation : public Error {
 public:
  using Error::Error;
};

class UnknownHart : public Error {
 public:
  using Error::Error;
};

// --- runtime ---

class OutOfTags : public Error {
 public:
  using Error::Error;
};

class OutOfMemory : public Error {
 public:
  using Error::Error;
};

class DoubleFree : public Error {
 public:
  using Error::Error;
};

class ForeignPointer : public Error {
 public:
  using Error::Error;
};

class UnprotectedPointer : public Error {
 public:
  using Error::Error;
};

class OutOfBoundsAccess : public Error {
 public:
  using Error::Error;
};

class InvalidAddress : public Error {
 public:
  using Error::Error;
};

// --- configuration ---

class ConfigParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace heapsafe
