#include "ea3d/predicates.hpp"

namespace ea3d::exact {

namespace {

using u64 = std::uint64_t;
using u128 = unsigned __int128;

inline Int256 from_parts(u64 l0, u64 l1, u64 l2, u64 l3) {
    Int256 r;
    r.limb = {l0, l1, l2, l3};
    return r;
}

}  // namespace

Int256 Int256::from_i128(i128 v) {
    u128 u = static_cast<u128>(v);  // sign-extends in two's complement
    u64 fill = v < 0 ? ~u64(0) : 0;
    return from_parts(u64(u), u64(u >> 64), fill, fill);
}

Int256 Int256::operator+(const Int256& o) const {
    Int256 r;
    u64 carry = 0;
    for (int i = 0; i < 4; ++i) {
        u64 s = limb[i] + o.limb[i];
        u64 c1 = s < limb[i];
        r.limb[i] = s + carry;
        carry = c1 | (r.limb[i] < s);
    }
    return r;
}

Int256 Int256::operator-() const {
    // Two's complement negate: ~x + 1. The +1 carries past a limb only while
    // the negated limb was all ones (result wrapped to zero).
    Int256 r;
    u64 carry = 1;
    for (int i = 0; i < 4; ++i) {
        r.limb[i] = ~limb[i] + carry;
        carry = (carry && r.limb[i] == 0) ? 1 : 0;
    }
    return r;
}

Int256 Int256::operator-(const Int256& o) const { return *this + (-o); }

int Int256::sign() const {
    bool neg = limb[3] >> 63;
    if (neg) return -1;
    return (limb[0] | limb[1] | limb[2] | limb[3]) ? 1 : 0;
}

Int256 Int256::mul(i128 a, i128 b) {
    bool neg = (a < 0) != (b < 0);
    u128 ua = a < 0 ? u128(-(a + 1)) + 1 : u128(a);
    u128 ub = b < 0 ? u128(-(b + 1)) + 1 : u128(b);

    u64 a0 = u64(ua), a1 = u64(ua >> 64);
    u64 b0 = u64(ub), b1 = u64(ub >> 64);

    u128 p00 = u128(a0) * b0;
    u128 p01 = u128(a0) * b1;
    u128 p10 = u128(a1) * b0;
    u128 p11 = u128(a1) * b1;

    u64 l0 = u64(p00);
    u128 mid = (p00 >> 64) + u64(p01) + u64(p10);
    u64 l1 = u64(mid);
    u128 hi = (mid >> 64) + (p01 >> 64) + (p10 >> 64) + u64(p11);
    u64 l2 = u64(hi);
    u64 l3 = u64((hi >> 64) + (p11 >> 64));

    Int256 r = from_parts(l0, l1, l2, l3);
    return neg ? -r : r;
}

namespace {

inline int sign_i128(i128 v) { return v > 0 ? 1 : (v < 0 ? -1 : 0); }

// det[[ax ay az],[bx by bz],[cx cy cz]] with |coords| <= 2^41: exact in i128.
inline i128 det3(i64 ax, i64 ay, i64 az, i64 bx, i64 by, i64 bz, i64 cx, i64 cy,
                 i64 cz) {
    i128 m0 = i128(by) * cz - i128(bz) * cy;
    i128 m1 = i128(bx) * cz - i128(bz) * cx;
    i128 m2 = i128(bx) * cy - i128(by) * cx;
    return i128(ax) * m0 - i128(ay) * m1 + i128(az) * m2;
}

}  // namespace

int orient3d(const IPoint& a, const IPoint& b, const IPoint& c, const IPoint& d) {
    return sign_i128(det3(b.x - a.x, b.y - a.y, b.z - a.z,
                          c.x - a.x, c.y - a.y, c.z - a.z,
                          d.x - a.x, d.y - a.y, d.z - a.z));
}

int insphere(const IPoint& a, const IPoint& b, const IPoint& c, const IPoint& d,
             const IPoint& e) {
    const i64 ax = a.x - e.x, ay = a.y - e.y, az = a.z - e.z;
    const i64 bx = b.x - e.x, by = b.y - e.y, bz = b.z - e.z;
    const i64 cx = c.x - e.x, cy = c.y - e.y, cz = c.z - e.z;
    const i64 dx = d.x - e.x, dy = d.y - e.y, dz = d.z - e.z;

    const i128 la = i128(ax) * ax + i128(ay) * ay + i128(az) * az;
    const i128 lb = i128(bx) * bx + i128(by) * by + i128(bz) * bz;
    const i128 lc = i128(cx) * cx + i128(cy) * cy + i128(cz) * cz;
    const i128 ld = i128(dx) * dx + i128(dy) * dy + i128(dz) * dz;

    const i128 ma = det3(bx, by, bz, cx, cy, cz, dx, dy, dz);
    const i128 mb = det3(ax, ay, az, cx, cy, cz, dx, dy, dz);
    const i128 mc = det3(ax, ay, az, bx, by, bz, dx, dy, dz);
    const i128 md = det3(ax, ay, az, bx, by, bz, cx, cy, cz);

    // Lifted 4x4 determinant, expanded along the lift column. For a
    // positively oriented (a,b,c,d) this is positive iff e is strictly
    // inside the circumsphere (checked against hand-worked cases in tests).
    Int256 det = Int256::mul(la, ma) - Int256::mul(lb, mb) +
                 Int256::mul(lc, mc) - Int256::mul(ld, md);
    return det.sign();
}

int incircle_coplanar(const IPoint& a, const IPoint& b, const IPoint& c,
                      const IPoint& p) {
    // Project onto the coordinate plane where the triangle's normal is
    // largest, then run the 2D incircle predicate with an orientation fix.
    const i64 ux = b.x - a.x, uy = b.y - a.y, uz = b.z - a.z;
    const i64 vx = c.x - a.x, vy = c.y - a.y, vz = c.z - a.z;
    const i128 nx = i128(uy) * vz - i128(uz) * vy;
    const i128 ny = i128(uz) * vx - i128(ux) * vz;
    const i128 nz = i128(ux) * vy - i128(uy) * vx;

    auto absval = [](i128 v) { return v < 0 ? -v : v; };
    const i128 anx = absval(nx), any = absval(ny), anz = absval(nz);
    if (anx == 0 && any == 0 && anz == 0) return 0;  // degenerate triangle

    i64 a0, a1, b0, b1, c0, c1, p0, p1;
    if (anz >= anx && anz >= any) {
        a0 = a.x; a1 = a.y; b0 = b.x; b1 = b.y; c0 = c.x; c1 = c.y; p0 = p.x; p1 = p.y;
    } else if (any >= anx) {
        a0 = a.z; a1 = a.x; b0 = b.z; b1 = b.x; c0 = c.z; c1 = c.x; p0 = p.z; p1 = p.x;
    } else {
        a0 = a.y; a1 = a.z; b0 = b.y; b1 = b.z; c0 = c.y; c1 = c.z; p0 = p.y; p1 = p.z;
    }

    const i64 adx = a0 - p0, ady = a1 - p1;
    const i64 bdx = b0 - p0, bdy = b1 - p1;
    const i64 cdx = c0 - p0, cdy = c1 - p1;

    const i128 abdet = i128(adx) * bdy - i128(bdx) * ady;
    const i128 bcdet = i128(bdx) * cdy - i128(cdx) * bdy;
    const i128 cadet = i128(cdx) * ady - i128(adx) * cdy;
    const i128 alift = i128(adx) * adx + i128(ady) * ady;
    const i128 blift = i128(bdx) * bdx + i128(bdy) * bdy;
    const i128 clift = i128(cdx) * cdx + i128(cdy) * cdy;

    Int256 det = Int256::mul(alift, bcdet) + Int256::mul(blift, cadet) +
                 Int256::mul(clift, abdet);
    int s = det.sign();

    // det sign assumes counterclockwise (a,b,c) in the projected plane;
    // multiply by the projected orientation to make it winding-free.
    const i128 orient = i128(b0 - a0) * (c1 - a1) - i128(b1 - a1) * (c0 - a0);
    int so = sign_i128(orient);
    return s * so;
}

}  // namespace ea3d::exact
