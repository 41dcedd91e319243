#pragma once

#include <doctest.h>

#include "genret/error.hpp"

// Kind of the genret::Error thrown by fn; fails the test if nothing is thrown.
inline genret::ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const genret::Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return genret::ErrorKind::Usage;
}
