#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mcad/codec.hpp"
#include "mcad/errors.hpp"

namespace mcad::geom {

struct Vec2 {
    double x = 0, y = 0;
};
struct Vec3 {
    double x = 0, y = 0, z = 0;
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

inline constexpr int kArcSegments = 32;           // tessellation per arc/circle
inline constexpr double kSnapTol = 2.0 / 255.0;   // loop closure, one quant step
inline constexpr int kGridRes = 64;               // SDF sampling grid
inline constexpr double kGridPad = 0.05;          // bounding box padding

/// Closed 2-D polyline in sketch units; pts.front() == pts.back().
struct Loop {
    std::vector<Vec2> pts;
};

/// Even-odd filled set of closed loops.
struct Profile {
    std::vector<Loop> loops;
};

enum class BoolOp : uint8_t { New = 0, Join = 1, Cut = 2, Intersect = 3 };
enum class ExtentKind : uint8_t { OneSided = 0, Symmetric = 1, TwoSided = 2 };

/// Orthonormal sketch frame: world = origin + scale*(x*u + y*v) + t*n.
struct Frame {
    Vec3 origin;
    Vec3 u, v, n;
    double scale = 1.0;
};

Frame make_frame(double theta, double phi, double gamma, Vec3 origin, double scale);

struct ExtrusionBody {
    Profile profile;
    Frame frame;
    double lo = 0, hi = 0;  // extent span along n, world units, lo < hi
    BoolOp op = BoolOp::New;
};

struct Aabb {
    Vec3 lo, hi;
    double extent(int axis) const {
        return axis == 0 ? hi.x - lo.x : axis == 1 ? hi.y - lo.y : hi.z - lo.z;
    }
    double max_extent() const {
        return std::max(extent(0), std::max(extent(1), extent(2)));
    }
    Vec3 center() const { return 0.5 * (lo + hi); }
};

struct PointCloud {
    std::vector<Vec3> pts;
};

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
};

/// Points along a circular arc from `from` to `to` sweeping `alpha` radians,
/// counter-clockwise when ccw. Returns kArcSegments+1 points including both
/// endpoints.
std::vector<Vec2> tessellate_arc(Vec2 from, Vec2 to, double alpha, bool ccw);

/// Closed kArcSegments-gon approximating a circle (first point repeated last).
std::vector<Vec2> tessellate_circle(Vec2 center, double radius);

/// Signed distance to a closed polygon set (even-odd), negative inside.
double profile_sdf(const Profile& p, Vec2 q);
bool profile_contains(const Profile& p, Vec2 q);
double profile_area(const Profile& p);

/// Executed geometry. Immutable after build; sdf() is pure and safe to call
/// concurrently. bounds() covers material added by new/join bodies (cuts only
/// remove material, so the solid stays inside).
class SolidScene {
public:
    explicit SolidScene(std::vector<ExtrusionBody> bodies);

    /// Conservative CSG pseudo-SDF: exact sign, magnitude a lower bound.
    /// Per body max(profile 2-D SDF, slab distance); combined in order with
    /// new/join -> min, cut -> max(d, -d_body), intersect -> max.
    double sdf(Vec3 q) const;

    /// Sign query against a single body, bypassing CSG (for oracles/tests).
    double body_sdf(int i, Vec3 q) const;

    const std::vector<ExtrusionBody>& bodies() const { return bodies_; }
    const Aabb& bounds() const { return aabb_; }

private:
    std::vector<ExtrusionBody> bodies_;
    Aabb aabb_;
};

/// Executes a grammar-valid sequence: one ExtrusionBody per sketch-extrude
/// unit, arcs/circles tessellated at 32 segments, line/arc loops starting at
/// the sketch origin and snapped closed within 2/255. Throws GeometryError for
/// unclosed loops, zero-depth extrusions, self-intersecting loops, zero-area
/// profiles, or a first body that is not "new".
SolidScene build_scene(const CadSequence& seq);

struct GridField {
    Aabb box;                   // padded sampling box
    int res;                    // nodes per axis
    std::vector<double> values; // res^3, x fastest
    double cell(int axis) const { return box.extent(axis) / double(res - 1); }
    double cell_diag() const {
        double cx = cell(0), cy = cell(1), cz = cell(2);
        return std::sqrt(cx * cx + cy * cy + cz * cz);
    }
    Vec3 node(int i, int j, int k) const {
        return {box.lo.x + cell(0) * i, box.lo.y + cell(1) * j, box.lo.z + cell(2) * k};
    }
};

/// Samples the SDF on a res^3 node grid over bounds() + 5% padding.
/// `parallel` switches the OpenMP kernel; results are identical.
GridField evaluate_grid(const SolidScene& scene, int res = kGridRes, bool parallel = true);

/// Surface points from sign-change cells of a 64^3 grid, each projected to the
/// surface by bisection along the central-difference gradient, then reduced or
/// expanded to exactly m points (farthest-point sampling / jittered
/// duplication). Deterministic per seed. Throws EmptySolid when the grid has
/// no sign change.
PointCloud sample_surface(const SolidScene& scene, int m, uint64_t seed, int res = kGridRes);

/// Surface-net triangle mesh from the 64^3 grid: one vertex per sign-change
/// cell, one quad (two triangles) per grid edge crossing the surface.
TriMesh extract_mesh(const SolidScene& scene, int res = kGridRes);

/// Writes extract_mesh() output as ASCII OBJ; returns the triangle count.
int export_mesh(const SolidScene& scene, const std::string& path, int res = kGridRes);

void write_obj(const TriMesh& mesh, const std::string& path);
void write_ply(const PointCloud& cloud, const std::string& path);

}  // namespace mcad::geom
