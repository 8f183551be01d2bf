#include "mcad/geometry.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>

#include "mcad/rng.hpp"

namespace mcad::geom {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kEps = 1e-12;
}  // namespace

// --- tessellation ------------------------------------------------------------

std::vector<Vec2> tessellate_arc(Vec2 from, Vec2 to, double alpha, bool ccw) {
    std::vector<Vec2> pts;
    pts.reserve(kArcSegments + 1);
    double dx = to.x - from.x, dy = to.y - from.y;
    double chord = std::sqrt(dx * dx + dy * dy);
    if (chord < kEps || alpha <= kEps || alpha >= 2 * kPi - 1e-9) {
        // Degenerate chord or sweep: fall back to a straight segment.
        pts.push_back(from);
        pts.push_back(to);
        return pts;
    }
    double radius = chord / (2.0 * std::sin(alpha / 2.0));
    Vec2 mid{(from.x + to.x) / 2.0, (from.y + to.y) / 2.0};
    // Left normal of the chord; the center sits on it for ccw traversal,
    // flipping side automatically as alpha passes pi via cos(alpha/2).
    Vec2 nl{-dy / chord, dx / chord};
    double h = radius * std::cos(alpha / 2.0);
    Vec2 center = ccw ? Vec2{mid.x + nl.x * h, mid.y + nl.y * h}
                      : Vec2{mid.x - nl.x * h, mid.y - nl.y * h};
    double a0 = std::atan2(from.y - center.y, from.x - center.x);
    double sweep = ccw ? alpha : -alpha;
    for (int i = 0; i <= kArcSegments; ++i) {
        double a = a0 + sweep * double(i) / double(kArcSegments);
        pts.push_back({center.x + radius * std::cos(a), center.y + radius * std::sin(a)});
    }
    pts.front() = from;
    pts.back() = to;
    return pts;
}

std::vector<Vec2> tessellate_circle(Vec2 center, double radius) {
    std::vector<Vec2> pts;
    pts.reserve(kArcSegments + 1);
    for (int i = 0; i < kArcSegments; ++i) {
        double a = 2 * kPi * double(i) / double(kArcSegments);
        pts.push_back({center.x + radius * std::cos(a), center.y + radius * std::sin(a)});
    }
    pts.push_back(pts.front());
    return pts;
}

// --- 2-D profile queries ------------------------------------------------------

double profile_area(const Profile& p) {
    double total = 0;
    for (const Loop& loop : p.loops) {
        double a = 0;
        for (size_t i = 0; i + 1 < loop.pts.size(); ++i) {
            const Vec2& u = loop.pts[i];
            const Vec2& v = loop.pts[i + 1];
            a += u.x * v.y - v.x * u.y;
        }
        total += std::abs(a) / 2.0;
    }
    return total;
}

bool profile_contains(const Profile& p, Vec2 q) {
    // Even-odd rule, half-open crossing test.
    int crossings = 0;
    for (const Loop& loop : p.loops) {
        for (size_t i = 0; i + 1 < loop.pts.size(); ++i) {
            const Vec2& a = loop.pts[i];
            const Vec2& b = loop.pts[i + 1];
            if ((a.y > q.y) != (b.y > q.y)) {
                double x = a.x + (q.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if (x > q.x) ++crossings;
            }
        }
    }
    return crossings % 2 == 1;
}

namespace {

double point_segment_dist2(Vec2 q, Vec2 a, Vec2 b) {
    double abx = b.x - a.x, aby = b.y - a.y;
    double len2 = abx * abx + aby * aby;
    double t = len2 > 0 ? ((q.x - a.x) * abx + (q.y - a.y) * aby) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    double dx = q.x - (a.x + t * abx), dy = q.y - (a.y + t * aby);
    return dx * dx + dy * dy;
}

}  // namespace

double profile_sdf(const Profile& p, Vec2 q) {
    double d2 = std::numeric_limits<double>::max();
    for (const Loop& loop : p.loops)
        for (size_t i = 0; i + 1 < loop.pts.size(); ++i)
            d2 = std::min(d2, point_segment_dist2(q, loop.pts[i], loop.pts[i + 1]));
    double d = std::sqrt(d2);
    return profile_contains(p, q) ? -d : d;
}

// --- scene construction -------------------------------------------------------

Frame make_frame(double theta, double phi, double gamma, Vec3 origin, double scale) {
    Vec3 n{std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
    Vec3 ref = std::abs(n.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
    Vec3 u0 = cross(ref, n);
    double l = norm(u0);
    u0 = (1.0 / l) * u0;
    Vec3 v0 = cross(n, u0);
    Frame f;
    f.origin = origin;
    f.n = n;
    f.u = std::cos(gamma) * u0 + std::sin(gamma) * v0;
    f.v = -std::sin(gamma) * u0 + std::cos(gamma) * v0;
    f.scale = scale;
    return f;
}

namespace {

bool segments_cross(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
    auto orient = [](Vec2 p, Vec2 q, Vec2 r) {
        return (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
    };
    double o1 = orient(a, b, c), o2 = orient(a, b, d);
    double o3 = orient(c, d, a), o4 = orient(c, d, b);
    return ((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0)) && o1 != 0 && o2 != 0 && o3 != 0 &&
           o4 != 0;
}

void check_loop(const Loop& loop) {
    size_t n = loop.pts.size();
    if (n < 4) throw GeometryError("zero-area profile");

    // Proper-crossing check over non-adjacent segment pairs. Runs before the
    // area test so a bowtie (zero signed area) reports as self-intersecting.
    size_t segs = n - 1;
    for (size_t i = 0; i + 1 < segs; ++i) {
        for (size_t j = i + 2; j < segs; ++j) {
            if (i == 0 && j == segs - 1) continue;  // closure adjacency
            if (segments_cross(loop.pts[i], loop.pts[i + 1], loop.pts[j], loop.pts[j + 1]))
                throw GeometryError("self-intersecting loop");
        }
    }

    double a = 0;
    for (size_t i = 0; i + 1 < n; ++i)
        a += loop.pts[i].x * loop.pts[i + 1].y - loop.pts[i + 1].x * loop.pts[i].y;
    if (std::abs(a) / 2.0 < 1e-9) throw GeometryError("zero-area profile");
}

struct LoopBuilder {
    std::vector<Vec2> pts;
    bool polyline = false;

    void start() {
        pts.clear();
        polyline = false;
    }

    Loop finish_polyline() {
        // Line/arc loops start at the sketch origin; the final endpoint snaps
        // back within one quantization step.
        Vec2 start{0, 0};
        Vec2 end = pts.back();
        double dx = end.x - start.x, dy = end.y - start.y;
        if (std::sqrt(dx * dx + dy * dy) > kSnapTol)
            throw GeometryError("unclosed loop");
        pts.back() = start;
        Loop loop{std::move(pts)};
        check_loop(loop);
        return loop;
    }
};

}  // namespace

SolidScene build_scene(const CadSequence& seq) {
    validate(seq);

    std::vector<ExtrusionBody> bodies;
    Profile profile;
    LoopBuilder lb;
    bool in_loop = false;

    auto close_loop = [&]() {
        if (!in_loop) return;
        if (lb.polyline) profile.loops.push_back(lb.finish_polyline());
        in_loop = false;
    };

    for (int t = 0; t < seq.raw_length; ++t) {
        const Command& c = seq.at(t);
        switch (c.kind) {
            case CommandKind::SOL:
                close_loop();
                lb.start();
                lb.pts.push_back({0, 0});
                in_loop = true;
                break;
            case CommandKind::Line:
                lb.polyline = true;
                lb.pts.push_back({c.slots[slot::X], c.slots[slot::Y]});
                break;
            case CommandKind::Arc: {
                lb.polyline = true;
                Vec2 from = lb.pts.back();
                Vec2 to{c.slots[slot::X], c.slots[slot::Y]};
                auto arc = tessellate_arc(from, to, enc::slot_to_alpha(c.slots[slot::Alpha]),
                                          c.slots[slot::Flag] > 0.5);
                for (size_t i = 1; i < arc.size(); ++i) lb.pts.push_back(arc[i]);
                break;
            }
            case CommandKind::Circle: {
                double r = c.slots[slot::Radius];
                if (!(r > kEps)) throw GeometryError("zero-area profile");
                Loop loop{tessellate_circle({c.slots[slot::X], c.slots[slot::Y]}, r)};
                check_loop(loop);
                profile.loops.push_back(std::move(loop));
                in_loop = false;
                break;
            }
            case CommandKind::Extrude: {
                close_loop();
                double s = enc::slot_to_scale(c.slots[slot::Scale]);
                if (!(s > 0)) throw GeometryError("nonpositive profile scale");
                double e1 = enc::slot_to_extent(c.slots[slot::E1]);
                double e2 = enc::slot_to_extent(c.slots[slot::E2]);
                auto ext = ExtentKind(std::clamp(int(std::lround(c.slots[slot::Extent])), 0, 2));
                double lo, hi;
                switch (ext) {
                    case ExtentKind::OneSided:
                        lo = std::min(0.0, e1);
                        hi = std::max(0.0, e1);
                        break;
                    case ExtentKind::Symmetric:
                        hi = std::abs(e1) / 2.0;
                        lo = -hi;
                        break;
                    case ExtentKind::TwoSided:
                    default:
                        lo = std::min(-e2, e1);
                        hi = std::max(-e2, e1);
                        break;
                }
                if (hi - lo < 1e-9) throw GeometryError("zero-depth extrusion");

                ExtrusionBody body;
                body.profile = std::move(profile);
                profile = Profile{};
                body.frame = make_frame(enc::slot_to_theta(c.slots[slot::Theta]),
                                        enc::slot_to_phi(c.slots[slot::Phi]),
                                        enc::slot_to_phi(c.slots[slot::Gamma]),
                                        {enc::slot_to_origin(c.slots[slot::PX]),
                                         enc::slot_to_origin(c.slots[slot::PY]),
                                         enc::slot_to_origin(c.slots[slot::PZ])},
                                        s);
                body.lo = lo;
                body.hi = hi;
                body.op = BoolOp(std::clamp(int(std::lround(c.slots[slot::Bool])), 0, 3));
                if (bodies.empty() && body.op != BoolOp::New)
                    throw GeometryError("first body must be 'new'");
                bodies.push_back(std::move(body));
                break;
            }
            case CommandKind::EOS:
                break;
        }
    }
    return SolidScene(std::move(bodies));
}

SolidScene::SolidScene(std::vector<ExtrusionBody> bodies) : bodies_(std::move(bodies)) {
    constexpr double inf = std::numeric_limits<double>::max();
    aabb_.lo = {inf, inf, inf};
    aabb_.hi = {-inf, -inf, -inf};
    bool any = false;
    for (const ExtrusionBody& b : bodies_) {
        if (b.op == BoolOp::Cut || b.op == BoolOp::Intersect) continue;
        any = true;
        for (const Loop& loop : b.profile.loops) {
            for (const Vec2& p : loop.pts) {
                for (double t : {b.lo, b.hi}) {
                    Vec3 w = b.frame.origin + (b.frame.scale * p.x) * b.frame.u +
                             (b.frame.scale * p.y) * b.frame.v + t * b.frame.n;
                    aabb_.lo.x = std::min(aabb_.lo.x, w.x);
                    aabb_.lo.y = std::min(aabb_.lo.y, w.y);
                    aabb_.lo.z = std::min(aabb_.lo.z, w.z);
                    aabb_.hi.x = std::max(aabb_.hi.x, w.x);
                    aabb_.hi.y = std::max(aabb_.hi.y, w.y);
                    aabb_.hi.z = std::max(aabb_.hi.z, w.z);
                }
            }
        }
    }
    if (!any) aabb_ = Aabb{{0, 0, 0}, {0, 0, 0}};
}

double SolidScene::body_sdf(int i, Vec3 q) const {
    const ExtrusionBody& b = bodies_[size_t(i)];
    Vec3 d = q - b.frame.origin;
    double w = dot(d, b.frame.n);
    Vec2 local{dot(d, b.frame.u) / b.frame.scale, dot(d, b.frame.v) / b.frame.scale};
    double d2 = b.frame.scale * profile_sdf(b.profile, local);
    double dz = std::max(b.lo - w, w - b.hi);
    return std::max(d2, dz);
}

double SolidScene::sdf(Vec3 q) const {
    double acc = std::numeric_limits<double>::max();
    for (int i = 0; i < int(bodies_.size()); ++i) {
        double d = body_sdf(i, q);
        switch (bodies_[size_t(i)].op) {
            case BoolOp::New:
            case BoolOp::Join:
                acc = std::min(acc, d);
                break;
            case BoolOp::Cut:
                acc = std::max(acc, -d);
                break;
            case BoolOp::Intersect:
                acc = std::max(acc, d);
                break;
        }
    }
    return acc;
}

// --- grid sampling -------------------------------------------------------------

GridField evaluate_grid(const SolidScene& scene, int res, bool parallel) {
    GridField g;
    g.res = res;
    const Aabb& b = scene.bounds();
    for (int axis = 0; axis < 3; ++axis) {
        double pad = std::max(b.extent(axis) * kGridPad, 1e-3);
        (axis == 0 ? g.box.lo.x : axis == 1 ? g.box.lo.y : g.box.lo.z) =
            (axis == 0 ? b.lo.x : axis == 1 ? b.lo.y : b.lo.z) - pad;
        (axis == 0 ? g.box.hi.x : axis == 1 ? g.box.hi.y : g.box.hi.z) =
            (axis == 0 ? b.hi.x : axis == 1 ? b.hi.y : b.hi.z) + pad;
    }
    g.values.resize(size_t(res) * res * res);

    if (parallel) {
#pragma omp parallel for schedule(static)
        for (int k = 0; k < res; ++k)
            for (int j = 0; j < res; ++j)
                for (int i = 0; i < res; ++i)
                    g.values[(size_t(k) * res + j) * res + i] = scene.sdf(g.node(i, j, k));
    } else {
        for (int k = 0; k < res; ++k)
            for (int j = 0; j < res; ++j)
                for (int i = 0; i < res; ++i)
                    g.values[(size_t(k) * res + j) * res + i] = scene.sdf(g.node(i, j, k));
    }
    return g;
}

namespace {

inline bool node_inside(const GridField& g, int i, int j, int k) {
    return g.values[(size_t(k) * g.res + j) * g.res + i] < 0;
}

std::vector<std::array<int, 3>> sign_change_cells(const GridField& g) {
    std::vector<std::array<int, 3>> cells;
    int n = g.res - 1;
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                bool first = node_inside(g, i, j, k);
                bool mixed = false;
                for (int c = 1; c < 8 && !mixed; ++c)
                    mixed = node_inside(g, i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)) !=
                            first;
                if (mixed) cells.push_back({i, j, k});
            }
    return cells;
}

}  // namespace

PointCloud sample_surface(const SolidScene& scene, int m, uint64_t seed, int res) {
    if (m <= 0) throw ShapeMismatch("point count must be positive");
    GridField g = evaluate_grid(scene, res);
    auto cells = sign_change_cells(g);
    if (cells.empty()) throw EmptySolid();

    double diag = g.cell_diag();
    std::vector<Vec3> pts;
    pts.reserve(cells.size());
    for (const auto& c : cells) {
        Vec3 p = g.node(c[0], c[1], c[2]) +
                 Vec3{0.5 * g.cell(0), 0.5 * g.cell(1), 0.5 * g.cell(2)};
        double d0 = scene.sdf(p);
        // Central-difference gradient, one bisection pass along it.
        double hx = g.cell(0), hy = g.cell(1), hz = g.cell(2);
        Vec3 grad{(scene.sdf({p.x + hx, p.y, p.z}) - scene.sdf({p.x - hx, p.y, p.z})) / (2 * hx),
                  (scene.sdf({p.x, p.y + hy, p.z}) - scene.sdf({p.x, p.y - hy, p.z})) / (2 * hy),
                  (scene.sdf({p.x, p.y, p.z + hz}) - scene.sdf({p.x, p.y, p.z - hz})) / (2 * hz)};
        double gl = norm(grad);
        if (gl > 1e-9) {
            Vec3 dir = (d0 > 0 ? -1.0 / gl : 1.0 / gl) * grad;
            double t_hi = diag;
            Vec3 far = p + t_hi * dir;
            if ((scene.sdf(far) < 0) != (d0 < 0)) {
                double lo = 0, hi = t_hi;
                for (int it = 0; it < 20; ++it) {
                    double mid = (lo + hi) / 2;
                    Vec3 pm = p + mid * dir;
                    if ((scene.sdf(pm) < 0) == (d0 < 0)) lo = mid;
                    else hi = mid;
                }
                p = p + ((lo + hi) / 2) * dir;
            }
        }
        pts.push_back(p);
    }

    Rng rng(seed);
    PointCloud cloud;
    if (int(pts.size()) > m) {
        // Farthest-point sampling.
        std::vector<double> best(pts.size(), std::numeric_limits<double>::max());
        std::vector<Vec3> keep;
        keep.reserve(size_t(m));
        int cur = rng.uniform_int(int(pts.size()));
        for (int picked = 0; picked < m; ++picked) {
            keep.push_back(pts[size_t(cur)]);
            const Vec3 p = pts[size_t(cur)];
            int next = 0;
            double far2 = -1;
            for (size_t i = 0; i < pts.size(); ++i) {
                Vec3 d = pts[i] - p;
                double d2 = dot(d, d);
                if (d2 < best[i]) best[i] = d2;
                if (best[i] > far2) {
                    far2 = best[i];
                    next = int(i);
                }
            }
            cur = next;
        }
        cloud.pts = std::move(keep);
    } else {
        cloud.pts = pts;
        // Jittered duplication up to the requested count.
        while (int(cloud.pts.size()) < m) {
            const Vec3& base = pts[size_t(rng.uniform_int(int(pts.size())))];
            cloud.pts.push_back({base.x + g.cell(0) * 0.2 * (rng.uniform() - 0.5),
                                 base.y + g.cell(1) * 0.2 * (rng.uniform() - 0.5),
                                 base.z + g.cell(2) * 0.2 * (rng.uniform() - 0.5)});
        }
    }
    return cloud;
}

// --- surface nets ---------------------------------------------------------------

TriMesh extract_mesh(const SolidScene& scene, int res) {
    GridField g = evaluate_grid(scene, res);
    int n = res - 1;
    std::vector<int> cell_vertex(size_t(n) * n * n, -1);
    auto cell_id = [&](int i, int j, int k) -> int& {
        return cell_vertex[(size_t(k) * n + j) * n + i];
    };
    auto value = [&](int i, int j, int k) {
        return g.values[(size_t(k) * g.res + j) * g.res + i];
    };

    TriMesh mesh;
    static const int edges[12][2][3] = {
        {{0, 0, 0}, {1, 0, 0}}, {{0, 1, 0}, {1, 1, 0}}, {{0, 0, 1}, {1, 0, 1}}, {{0, 1, 1}, {1, 1, 1}},
        {{0, 0, 0}, {0, 1, 0}}, {{1, 0, 0}, {1, 1, 0}}, {{0, 0, 1}, {0, 1, 1}}, {{1, 0, 1}, {1, 1, 1}},
        {{0, 0, 0}, {0, 0, 1}}, {{1, 0, 0}, {1, 0, 1}}, {{0, 1, 0}, {0, 1, 1}}, {{1, 1, 0}, {1, 1, 1}},
    };

    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                bool first = value(i, j, k) < 0;
                bool mixed = false;
                for (int c = 1; c < 8 && !mixed; ++c)
                    mixed = (value(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)) < 0) != first;
                if (!mixed) continue;

                // Vertex: mean of edge-crossing points.
                Vec3 acc{0, 0, 0};
                int cnt = 0;
                for (const auto& e : edges) {
                    int ai = i + e[0][0], aj = j + e[0][1], ak = k + e[0][2];
                    int bi = i + e[1][0], bj = j + e[1][1], bk = k + e[1][2];
                    double va = value(ai, aj, ak), vb = value(bi, bj, bk);
                    if ((va < 0) == (vb < 0)) continue;
                    double t = va / (va - vb);
                    Vec3 a = g.node(ai, aj, ak), b = g.node(bi, bj, bk);
                    acc = acc + (a + t * (b - a));
                    ++cnt;
                }
                Vec3 v = cnt > 0 ? (1.0 / cnt) * acc
                                 : g.node(i, j, k) +
                                       Vec3{0.5 * g.cell(0), 0.5 * g.cell(1), 0.5 * g.cell(2)};
                cell_id(i, j, k) = int(mesh.vertices.size());
                mesh.vertices.push_back(v);
            }

    if (mesh.vertices.empty()) throw EmptySolid();

    auto emit_quad = [&](int a, int b, int c, int d, bool flip) {
        if (a < 0 || b < 0 || c < 0 || d < 0) return;
        if (flip) {
            mesh.triangles.push_back({a, d, c});
            mesh.triangles.push_back({a, c, b});
        } else {
            mesh.triangles.push_back({a, b, c});
            mesh.triangles.push_back({a, c, d});
        }
    };

    // One quad per grid edge whose endpoint signs differ, connecting the four
    // cells around the edge. Padding keeps the surface away from the boundary.
    for (int k = 1; k < n; ++k)
        for (int j = 1; j < n; ++j)
            for (int i = 0; i < n; ++i) {  // x-edges
                bool a = value(i, j, k) < 0, b = value(i + 1, j, k) < 0;
                if (a == b) continue;
                emit_quad(cell_id(i, j - 1, k - 1), cell_id(i, j, k - 1), cell_id(i, j, k),
                          cell_id(i, j - 1, k), a);
            }
    for (int k = 1; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 1; i < n; ++i) {  // y-edges
                bool a = value(i, j, k) < 0, b = value(i, j + 1, k) < 0;
                if (a == b) continue;
                emit_quad(cell_id(i - 1, j, k - 1), cell_id(i - 1, j, k), cell_id(i, j, k),
                          cell_id(i, j, k - 1), a);
            }
    for (int k = 0; k < n; ++k)
        for (int j = 1; j < n; ++j)
            for (int i = 1; i < n; ++i) {  // z-edges
                bool a = value(i, j, k) < 0, b = value(i, j, k + 1) < 0;
                if (a == b) continue;
                emit_quad(cell_id(i - 1, j - 1, k), cell_id(i, j - 1, k), cell_id(i, j, k),
                          cell_id(i - 1, j, k), a);
            }
    return mesh;
}

void write_obj(const TriMesh& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path);
    char buf[128];
    for (const Vec3& v : mesh.vertices) {
        std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", v.x, v.y, v.z);
        out << buf;
    }
    for (const auto& t : mesh.triangles) {
        std::snprintf(buf, sizeof(buf), "f %d %d %d\n", t[0] + 1, t[1] + 1, t[2] + 1);
        out << buf;
    }
    if (!out) throw IoError("write failed: " + path);
}

void write_ply(const PointCloud& cloud, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path);
    out << "ply\nformat ascii 1.0\nelement vertex " << cloud.pts.size()
        << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
    char buf[128];
    for (const Vec3& p : cloud.pts) {
        std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g\n", p.x, p.y, p.z);
        out << buf;
    }
    if (!out) throw IoError("write failed: " + path);
}

int export_mesh(const SolidScene& scene, const std::string& path, int res) {
    TriMesh mesh = extract_mesh(scene, res);
    write_obj(mesh, path);
    return int(mesh.triangles.size());
}

}  // namespace mcad::geom
