#pragma once

#include "dassf/autodiff.hpp"
#include "dassf/eager.hpp"

// Every composite block is compiled for these evaluation contexts.
#define DASSF_FOR_EACH_CONTEXT(M) \
  M(::dassf::Eager<float>)        \
  M(::dassf::Eager<double>)       \
  M(::dassf::Tape)
