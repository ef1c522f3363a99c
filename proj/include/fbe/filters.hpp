#ifndef FBE_FILTERS_HPP_
#define FBE_FILTERS_HPP_

#include "fbe/types.hpp"

namespace fbe {

// Per-frame time-domain response of the full equalizer, L+1 taps.
template <typename Scalar>
struct HighOrderFilter {
  Vector<Scalar> taps;
};

// Lower-order approximation with P taps and a group delay of P/2.
template <typename Scalar>
struct ShortenedFilter {
  Vector<Scalar> taps;
  Index group_delay = 0;
};

// First P+1 bins of the 2P-point DFT of a shortened filter.
template <typename Scalar>
struct FreqResponse {
  ComplexVector<Scalar> bins;
  Index frame = 0;

  Index filter_length() const { return bins.size() - 1; }
};

}  // namespace fbe

#endif  // FBE_FILTERS_HPP_
