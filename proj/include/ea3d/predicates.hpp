#pragma once

#include <array>
#include <cstdint>

namespace ea3d::exact {

// Exact geometric predicates on integer lattice coordinates.
//
// Inputs are snapped to a 2^40 grid of the normalized bounding cube by the
// Delaunay builder, so coordinate differences fit in 41 signed bits and
//   orient3d      needs <= 2^123  (int128)
//   insphere      needs <= 2^207  (int256)
//   incircle      needs <= 2^165  (int256)
// All results are exact signs; there is no floating-point filter stage
// because desk-scale meshes do not need one.

using i64 = std::int64_t;
using i128 = __int128;

/// Signed 256-bit accumulator, two's complement over four 64-bit limbs.
struct Int256 {
    std::array<std::uint64_t, 4> limb{0, 0, 0, 0};

    static Int256 from_i128(i128 v);
    /// Exact product of two signed 128-bit values.
    static Int256 mul(i128 a, i128 b);

    Int256 operator+(const Int256& o) const;
    Int256 operator-(const Int256& o) const;
    Int256 operator-() const;

    /// -1, 0, +1.
    int sign() const;
};

struct IPoint {
    i64 x, y, z;
};

/// Sign of det[[b-a],[c-a],[d-a]] (rows). Positive when d lies on the side
/// of plane (a,b,c) that makes the tetrahedron positively oriented.
int orient3d(const IPoint& a, const IPoint& b, const IPoint& c, const IPoint& d);

/// For a POSITIVELY oriented tetrahedron (a,b,c,d): positive when e lies
/// strictly inside the circumsphere, negative when strictly outside,
/// zero when exactly on it.
int insphere(const IPoint& a, const IPoint& b, const IPoint& c, const IPoint& d,
             const IPoint& e);

/// a,b,c,p must be coplanar (exactly, on the lattice). Positive when p lies
/// strictly inside the circumcircle of (a,b,c) within that plane, for any
/// winding of (a,b,c).
int incircle_coplanar(const IPoint& a, const IPoint& b, const IPoint& c,
                      const IPoint& p);

}  // namespace ea3d::exact
