#include "ea3d/tetra.hpp"

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "ea3d/mesh_io.hpp"
#include "ea3d/predicates.hpp"
#include "ea3d/util.hpp"

namespace ea3d {

namespace {

using exact::IPoint;

constexpr int kInf = -1;                  // ghost apex
constexpr std::int64_t kGrid = 1ll << 40;  // predicate lattice
constexpr std::int64_t kDedupShift = 10;   // 2^30 dedup lattice (1e-9 of extent)

struct Tet {
    std::array<int, 4> v;    // vertex ids, v[3] == kInf for ghosts
    std::array<int, 4> nbr;  // neighbor across face opposite v[i]
    bool alive = true;

    bool ghost() const { return v[3] == kInf; }
};

// Face opposite v[i], wound so that orient3d(face, v[i]) > 0 for a
// positively oriented real tet.
constexpr int kFace[4][3] = {{1, 3, 2}, {0, 2, 3}, {0, 3, 1}, {0, 1, 2}};

struct Builder {
    std::vector<IPoint> pts;   // lattice coordinates per vertex
    std::vector<Tet> tets;
    std::vector<std::uint8_t> conflict_mark;
    std::vector<int> marked;
    int last_real = -1;
    SplitMix64 rng{0x9e3779b97f4a7c15ULL};
    std::uint64_t walk_salt = 0;

    const IPoint& pt(int id) const { return pts[std::size_t(id)]; }

    int orient_face(const Tet& t, int face, int p) const {
        return exact::orient3d(pt(t.v[std::size_t(kFace[face][0])]),
                               pt(t.v[std::size_t(kFace[face][1])]),
                               pt(t.v[std::size_t(kFace[face][2])]), pt(p));
    }

    bool in_conflict(const Tet& t, int p) const {
        if (t.ghost()) {
            int s = exact::orient3d(pt(t.v[0]), pt(t.v[1]), pt(t.v[2]), pt(p));
            if (s > 0) return true;
            if (s < 0) return false;
            return exact::incircle_coplanar(pt(t.v[0]), pt(t.v[1]), pt(t.v[2]),
                                            pt(p)) > 0;
        }
        return exact::insphere(pt(t.v[0]), pt(t.v[1]), pt(t.v[2]), pt(t.v[3]),
                               pt(p)) > 0;
    }

    // Walk through real tets toward p; returns a tet in conflict with p.
    int locate(int p) {
        int cur = last_real;
        std::size_t cap = tets.size() * 4 + 64;
        for (std::size_t step = 0; step < cap; ++step) {
            const Tet& t = tets[std::size_t(cur)];
            std::uint64_t h = hash_combine(walk_salt, std::uint64_t(cur) * 7919u + step);
            int first = int(h & 3);
            int next = -1;
            for (int k = 0; k < 4; ++k) {
                int face = (first + k) & 3;
                if (orient_face(t, face, p) < 0) {
                    next = t.nbr[std::size_t(face)];
                    break;
                }
            }
            if (next < 0) return cur;  // inside closed tet -> in conflict
            if (tets[std::size_t(next)].ghost()) return next;
            cur = next;
        }
        // Exact walks terminate; this is a safety net, not an expected path.
        for (int i = 0; i < int(tets.size()); ++i)
            if (tets[std::size_t(i)].alive && in_conflict(tets[std::size_t(i)], p))
                return i;
        throw Error(ErrorCode::degenerate_input, "point location failed");
    }

    void insert(int p) {
        walk_salt = hash_combine(0x51ed2701u, std::uint64_t(p));
        int seed = locate(p);
        if (!in_conflict(tets[std::size_t(seed)], p)) {
            // Located tet touches p on its boundary sphere; a strictly
            // conflicting neighbor must exist.
            int found = -1;
            for (int f = 0; f < 4 && found < 0; ++f) {
                int nb = tets[std::size_t(seed)].nbr[std::size_t(f)];
                if (nb >= 0 && in_conflict(tets[std::size_t(nb)], p)) found = nb;
            }
            if (found < 0)
                throw Error(ErrorCode::degenerate_input,
                            "no conflicting tetrahedron for inserted point");
            seed = found;
        }

        // Flood-fill the conflict cavity from the seed.
        std::vector<int> cavity;
        std::deque<int> queue{seed};
        mark(seed);
        while (!queue.empty()) {
            int id = queue.front();
            queue.pop_front();
            cavity.push_back(id);
            for (int f = 0; f < 4; ++f) {
                int nb = tets[std::size_t(id)].nbr[std::size_t(f)];
                if (nb >= 0 && !is_marked(nb) && in_conflict(tets[std::size_t(nb)], p)) {
                    mark(nb);
                    queue.push_back(nb);
                }
            }
        }

        // Cavity repair: every all-real boundary face must be strictly
        // visible from p, otherwise the outer tet joins the cavity. Ties can
        // only arise in exactly co-spherical configurations.
        bool grew = true;
        while (grew) {
            grew = false;
            for (std::size_t ci = 0; ci < cavity.size() && !grew; ++ci) {
                const Tet& t = tets[std::size_t(cavity[ci])];
                for (int f = 0; f < 4; ++f) {
                    int nb = t.nbr[std::size_t(f)];
                    if (nb < 0 || is_marked(nb)) continue;
                    const int a = t.v[std::size_t(kFace[f][0])];
                    const int b = t.v[std::size_t(kFace[f][1])];
                    const int c = t.v[std::size_t(kFace[f][2])];
                    if (a == kInf || b == kInf || c == kInf) continue;
                    if (exact::orient3d(pt(a), pt(b), pt(c), pt(p)) == 0) {
                        mark(nb);
                        cavity.push_back(nb);
                        grew = true;
                        break;
                    }
                }
            }
        }

        retriangulate(cavity, p);
        unmark_all();
    }

    void mark(int id) {
        conflict_mark[std::size_t(id)] = 1;
        marked.push_back(id);
    }
    bool is_marked(int id) const { return conflict_mark[std::size_t(id)] != 0; }
    void unmark_all() {
        for (int id : marked) conflict_mark[std::size_t(id)] = 0;
        marked.clear();
    }

    int new_tet(std::array<int, 4> v) {
        tets.push_back(Tet{v, {-1, -1, -1, -1}, true});
        conflict_mark.push_back(0);
        return int(tets.size()) - 1;
    }

    struct FaceKey {
        std::array<int, 3> s;
        bool operator==(const FaceKey& o) const { return s == o.s; }
    };
    struct FaceKeyHash {
        std::size_t operator()(const FaceKey& k) const {
            std::uint64_t h = 1469598103934665603ULL;
            for (int v : k.s) {
                h ^= std::uint64_t(std::uint32_t(v));
                h *= 1099511628211ULL;
            }
            return std::size_t(h);
        }
    };
    static FaceKey face_key(int a, int b, int c) {
        std::array<int, 3> s{a, b, c};
        std::sort(s.begin(), s.end());
        return FaceKey{s};
    }

    void retriangulate(const std::vector<int>& cavity, int p) {
        struct Boundary {
            std::array<int, 3> verts;  // winding from the cavity side
            int outside;               // surviving neighbor (tet id)
            int outside_slot;
        };
        std::vector<Boundary> boundary;
        for (int id : cavity) {
            const Tet& t = tets[std::size_t(id)];
            for (int f = 0; f < 4; ++f) {
                int nb = t.nbr[std::size_t(f)];
                if (nb >= 0 && is_marked(nb)) continue;
                std::array<int, 3> verts{t.v[std::size_t(kFace[f][0])],
                                         t.v[std::size_t(kFace[f][1])],
                                         t.v[std::size_t(kFace[f][2])]};
                int slot = -1;
                if (nb >= 0) {
                    const Tet& o = tets[std::size_t(nb)];
                    for (int g = 0; g < 4; ++g)
                        if (o.nbr[std::size_t(g)] == id) slot = g;
                }
                boundary.push_back(Boundary{verts, nb, slot});
            }
        }

        std::vector<int> fresh;
        fresh.reserve(boundary.size());
        std::unordered_map<FaceKey, std::pair<int, int>, FaceKeyHash> open_faces;

        for (const Boundary& bf : boundary) {
            int a = bf.verts[0], b = bf.verts[1], c = bf.verts[2];
            int id;
            if (a == kInf || b == kInf || c == kInf) {
                // Boundary face of the ghost shell: spawn a new ghost over
                // the horizon edge. Winding fixed afterwards from the real
                // neighbor.
                std::array<int, 2> edge{};
                int e = 0;
                for (int v : bf.verts)
                    if (v != kInf) edge[std::size_t(e++)] = v;
                id = new_tet({edge[0], edge[1], p, kInf});
            } else {
                // With exact predicates and cavity repair, every all-real
                // boundary face is strictly visible from p with the winding
                // recorded from the cavity side.
                if (exact::orient3d(pt(a), pt(b), pt(c), pt(p)) <= 0)
                    throw Error(ErrorCode::degenerate_input,
                                "cavity boundary not strictly visible");
                id = new_tet({a, b, c, p});
                last_real = id;
            }
            Tet& nt = tets[std::size_t(id)];
            // Link across the boundary face (opposite the new apex).
            int base = nt.ghost() ? -1 : 3;
            if (nt.ghost()) {
                // Ghost's face not containing p or inf is (v0, v1) + ... none;
                // its link to the outside is across the face opposite p (slot 2).
                base = 2;
            }
            nt.nbr[std::size_t(base)] = bf.outside;
            if (bf.outside >= 0 && bf.outside_slot >= 0)
                tets[std::size_t(bf.outside)].nbr[std::size_t(bf.outside_slot)] = id;

            // Stitch the remaining faces (all contain p) among new tets.
            for (int f = 0; f < 4; ++f) {
                if (f == base) continue;
                FaceKey key = face_key(nt.v[std::size_t(kFace[f][0])],
                                       nt.v[std::size_t(kFace[f][1])],
                                       nt.v[std::size_t(kFace[f][2])]);
                auto it = open_faces.find(key);
                if (it == open_faces.end()) {
                    open_faces.emplace(key, std::make_pair(id, f));
                } else {
                    auto [oid, of] = it->second;
                    tets[std::size_t(id)].nbr[std::size_t(f)] = oid;
                    tets[std::size_t(oid)].nbr[std::size_t(of)] = id;
                    open_faces.erase(it);
                }
            }
            fresh.push_back(id);
        }
        if (!open_faces.empty())
            throw Error(ErrorCode::degenerate_input, "cavity stitching failed");

        // Orient new ghost hull faces outward using their real neighbor.
        for (int id : fresh) {
            Tet& g = tets[std::size_t(id)];
            if (!g.ghost()) continue;
            int rn = g.nbr[3];  // across the real hull face (opposite inf)
            if (rn < 0 || tets[std::size_t(rn)].ghost())
                throw Error(ErrorCode::degenerate_input, "ghost without real mate");
            const Tet& r = tets[std::size_t(rn)];
            int apex = -1;
            for (int v : r.v)
                if (v != g.v[0] && v != g.v[1] && v != g.v[2]) apex = v;
            if (exact::orient3d(pt(g.v[0]), pt(g.v[1]), pt(g.v[2]), pt(apex)) > 0) {
                // Make the hull winding outward. Neighbor slots are indexed
                // by opposite vertex, so they swap along with the vertices.
                std::swap(g.v[0], g.v[1]);
                std::swap(g.nbr[0], g.nbr[1]);
            }
        }

        for (int id : cavity) tets[std::size_t(id)].alive = false;
    }
};

std::uint64_t morton3(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
    auto spread = [](std::uint64_t v) {
        v &= 0x1fffff;
        v = (v | v << 32) & 0x1f00000000ffffULL;
        v = (v | v << 16) & 0x1f0000ff0000ffULL;
        v = (v | v << 8) & 0x100f00f00f00f00fULL;
        v = (v | v << 4) & 0x10c30c30c30c30c3ULL;
        v = (v | v << 2) & 0x1249249249249249ULL;
        return v;
    };
    return spread(x) | (spread(y) << 1) | (spread(z) << 2);
}

}  // namespace

TetraMesh delaunay_tetrahedralize(const std::vector<Eigen::Vector3d>& points) {
    if (points.size() < 4)
        throw Error(ErrorCode::insufficient_points,
                    "need at least 4 points for a tetrahedralization");
    for (const auto& p : points)
        if (!p.allFinite())
            throw Error(ErrorCode::degenerate_input, "non-finite input point");

    // Normalize to the unit cube (isotropic: Delaunay is similarity
    // invariant but not affine invariant) and snap to the predicate lattice.
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::max());
    Eigen::Vector3d hi = -lo;
    for (const auto& p : points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    double extent = (hi - lo).maxCoeff();
    if (!(extent > 0.0))
        throw Error(ErrorCode::insufficient_points,
                    "fewer than 4 distinct points after merging duplicates");

    auto snap = [&](const Eigen::Vector3d& p) {
        Eigen::Vector3d q = (p - lo) / extent * double(kGrid);
        IPoint ip;
        ip.x = std::llround(std::clamp(q.x(), 0.0, double(kGrid)));
        ip.y = std::llround(std::clamp(q.y(), 0.0, double(kGrid)));
        ip.z = std::llround(std::clamp(q.z(), 0.0, double(kGrid)));
        return ip;
    };

    // Duplicate merge: drop any point within ~1e-9 of the extent (2^10
    // lattice units) of an already-kept point, searched over the 27
    // neighboring dedup cells so cell-boundary straddlers merge too.
    struct CellHash {
        std::size_t operator()(const std::array<std::int64_t, 3>& c) const {
            std::uint64_t h = 1469598103934665603ULL;
            for (auto v : c) {
                h ^= std::uint64_t(v);
                h *= 1099511628211ULL;
            }
            return std::size_t(h);
        }
    };
    constexpr std::int64_t kMergeRadius = std::int64_t(1) << kDedupShift;
    std::unordered_map<std::array<std::int64_t, 3>, std::vector<int>, CellHash> cells;
    std::unordered_map<std::array<std::int64_t, 3>, int, CellHash> fine;
    std::vector<Eigen::Vector3d> verts;
    std::vector<IPoint> ipts;
    for (const auto& p : points) {
        IPoint ip = snap(p);
        std::array<std::int64_t, 3> ck{ip.x >> kDedupShift, ip.y >> kDedupShift,
                                       ip.z >> kDedupShift};
        std::array<std::int64_t, 3> fk{ip.x, ip.y, ip.z};
        if (fine.count(fk)) continue;
        bool merged = false;
        for (std::int64_t dx = -1; dx <= 1 && !merged; ++dx)
            for (std::int64_t dy = -1; dy <= 1 && !merged; ++dy)
                for (std::int64_t dz = -1; dz <= 1 && !merged; ++dz) {
                    auto it = cells.find({ck[0] + dx, ck[1] + dy, ck[2] + dz});
                    if (it == cells.end()) continue;
                    for (int id : it->second) {
                        const IPoint& q = ipts[std::size_t(id)];
                        double ex = double(ip.x - q.x), ey = double(ip.y - q.y),
                               ez = double(ip.z - q.z);
                        if (ex * ex + ey * ey + ez * ez <=
                            double(kMergeRadius) * double(kMergeRadius)) {
                            merged = true;
                            break;
                        }
                    }
                }
        if (merged) continue;
        cells[ck].push_back(int(verts.size()));
        fine.emplace(fk, int(verts.size()));
        verts.push_back(p);
        ipts.push_back(ip);
    }

    if (verts.size() < 4)
        throw Error(ErrorCode::insufficient_points,
                    "need at least 4 distinct non-degenerate points");

    // Deterministic spatially coherent insertion order.
    std::vector<int> order(verts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);
    std::vector<std::uint64_t> keys(verts.size());
    for (std::size_t i = 0; i < verts.size(); ++i)
        keys[i] = morton3(std::uint32_t(ipts[i].x >> 20), std::uint32_t(ipts[i].y >> 20),
                          std::uint32_t(ipts[i].z >> 20));
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return keys[std::size_t(a)] != keys[std::size_t(b)]
                   ? keys[std::size_t(a)] < keys[std::size_t(b)]
                   : a < b;
    });

    // Initial simplex: first four points (in insertion order) with nonzero
    // orientation. A coplanar cloud gets the seeded jitter, once.
    std::vector<std::uint8_t> skip(verts.size(), 0);
    auto find_simplex = [&](std::array<int, 4>& sim) {
        std::size_t first = 0;
        while (first < order.size() && skip[std::size_t(order[first])]) ++first;
        if (first == order.size()) return false;
        sim = {order[first], -1, -1, -1};
        std::size_t i = first + 1;
        for (; i < order.size() && sim[1] < 0; ++i)
            if (!skip[std::size_t(order[i])] &&
                (ipts[std::size_t(order[i])].x != ipts[std::size_t(sim[0])].x ||
                 ipts[std::size_t(order[i])].y != ipts[std::size_t(sim[0])].y ||
                 ipts[std::size_t(order[i])].z != ipts[std::size_t(sim[0])].z))
                sim[1] = order[i];
        for (; i < order.size() && sim[2] < 0; ++i) {
            if (skip[std::size_t(order[i])]) continue;
            const IPoint &a = ipts[std::size_t(sim[0])], &b = ipts[std::size_t(sim[1])],
                         &c = ipts[std::size_t(order[i])];
            exact::i128 cx = exact::i128(b.y - a.y) * (c.z - a.z) -
                             exact::i128(b.z - a.z) * (c.y - a.y);
            exact::i128 cy = exact::i128(b.z - a.z) * (c.x - a.x) -
                             exact::i128(b.x - a.x) * (c.z - a.z);
            exact::i128 cz = exact::i128(b.x - a.x) * (c.y - a.y) -
                             exact::i128(b.y - a.y) * (c.x - a.x);
            if (cx != 0 || cy != 0 || cz != 0) sim[2] = order[i];
        }
        for (; i < order.size() && sim[3] < 0; ++i)
            if (!skip[std::size_t(order[i])] &&
                exact::orient3d(ipts[std::size_t(sim[0])], ipts[std::size_t(sim[1])],
                                ipts[std::size_t(sim[2])],
                                ipts[std::size_t(order[i])]) != 0)
                sim[3] = order[i];
        return sim[3] >= 0;
    };

    std::array<int, 4> sim;
    if (!find_simplex(sim)) {
        // Exactly coplanar/collinear: deterministic jitter at ~1.2e-7 of the
        // extent (2^17 lattice units), then retry once.
        for (std::size_t i = 0; i < ipts.size(); ++i) {
            SplitMix64 r(hash_combine(0xc0ffee ^ std::uint64_t(i), 17));
            auto jit = [&]() {
                return std::int64_t(r.next() % (2 * 131072 + 1)) - 131072;
            };
            ipts[i].x = std::clamp<std::int64_t>(ipts[i].x + jit(), 0, kGrid);
            ipts[i].y = std::clamp<std::int64_t>(ipts[i].y + jit(), 0, kGrid);
            ipts[i].z = std::clamp<std::int64_t>(ipts[i].z + jit(), 0, kGrid);
        }
        // Jitter can (rarely) collide points on the lattice; later copies
        // are skipped rather than inserted twice.
        fine.clear();
        for (std::size_t i = 0; i < ipts.size(); ++i) {
            std::array<std::int64_t, 3> fk{ipts[i].x, ipts[i].y, ipts[i].z};
            if (!fine.emplace(fk, int(i)).second) skip[i] = 1;
        }
        if (!find_simplex(sim))
            throw Error(ErrorCode::degenerate_input,
                        "points remain degenerate after jitter");
    }

    Builder builder;
    builder.pts = ipts;

    // First tet (positively oriented) and its four ghosts.
    {
        std::array<int, 4> v = sim;
        if (exact::orient3d(ipts[std::size_t(v[0])], ipts[std::size_t(v[1])],
                            ipts[std::size_t(v[2])], ipts[std::size_t(v[3])]) < 0)
            std::swap(v[2], v[3]);
        int t0 = builder.new_tet(v);
        builder.last_real = t0;
        for (int f = 0; f < 4; ++f) {
            // Hull face wound outward: reverse of the inward winding.
            int a = v[std::size_t(kFace[f][0])];
            int b = v[std::size_t(kFace[f][2])];
            int c = v[std::size_t(kFace[f][1])];
            int g = builder.new_tet({a, b, c, kInf});
            builder.tets[std::size_t(g)].nbr[3] = t0;
            builder.tets[std::size_t(t0)].nbr[std::size_t(f)] = g;
        }
        // Ghost-to-ghost adjacency around the first tet.
        for (int ga = 1; ga <= 4; ++ga)
            for (int gb = 1; gb <= 4; ++gb) {
                if (ga == gb) continue;
                Tet& A = builder.tets[std::size_t(ga)];
                const Tet& B = builder.tets[std::size_t(gb)];
                for (int fa = 0; fa < 3; ++fa) {  // faces containing kInf
                    std::array<int, 3> faceA{A.v[std::size_t(kFace[fa][0])],
                                             A.v[std::size_t(kFace[fa][1])],
                                             A.v[std::size_t(kFace[fa][2])]};
                    std::sort(faceA.begin(), faceA.end());
                    for (int fb = 0; fb < 3; ++fb) {
                        std::array<int, 3> faceB{B.v[std::size_t(kFace[fb][0])],
                                                 B.v[std::size_t(kFace[fb][1])],
                                                 B.v[std::size_t(kFace[fb][2])]};
                        std::sort(faceB.begin(), faceB.end());
                        if (faceA == faceB) A.nbr[std::size_t(fa)] = gb;
                    }
                }
            }
    }

    std::unordered_set<int> used(sim.begin(), sim.end());
    for (int id : order) {
        if (used.count(id) || skip[std::size_t(id)]) continue;
        builder.insert(id);
    }

    // Extract the finished triangulation. Face enumeration is shared with
    // the loaders so serialized face ids stay stable.
    TetraMesh mesh;
    mesh.vertices = std::move(verts);
    for (const Tet& t : builder.tets) {
        if (!t.alive || t.ghost()) continue;
        mesh.tetrahedra.push_back(t.v);
    }
    rebuild_face_tables(mesh);
    return mesh;
}

}  // namespace ea3d
