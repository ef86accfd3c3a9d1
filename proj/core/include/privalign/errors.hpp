#pragma once

#include <stdexcept>

namespace privalign {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input: model files, logs, traces, flag values.
struct InputError : Error {
  using Error::Error;
};

// Some reachable marking puts two tokens on one place.
struct UnsafeNetError : Error {
  using Error::Error;
};

// An enumeration ceiling was hit (unfolding events, linearizations).
struct CapExceededError : Error {
  using Error::Error;
};

// Backend failure: bad key material, undecodable ciphertext, plaintext range.
struct CryptoError : Error {
  using Error::Error;
};

// Peer violated message sequencing or sent a malformed payload.
struct ProtocolError : Error {
  using Error::Error;
};

// The server refused a mismatch retry because the session budget ran out.
struct BudgetExhaustedError : Error {
  using Error::Error;
};

// Socket or framing failure underneath the protocol.
struct TransportError : Error {
  using Error::Error;
};

}  // namespace privalign
