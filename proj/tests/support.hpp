#pragma once

#include "califorms/cacheline.hpp"
#include "oracles.hpp"

inline califorms::CaliLine to_cali(const oracle::Line &l) {
  califorms::CaliLine c;
  c.data = l.data;
  for (std::size_t i = 0; i < 64; ++i) c.mask[i] = l.security[i];
  return c;
}

inline oracle::Line to_oracle(const califorms::CaliLine &c) {
  oracle::Line l;
  l.data = c.data;
  for (std::size_t i = 0; i < 64; ++i) l.security[i] = c.mask[i];
  return l;
}

inline bool same(const oracle::Line &a, const oracle::Line &b) {
  return a.data == b.data && a.security == b.security;
}
