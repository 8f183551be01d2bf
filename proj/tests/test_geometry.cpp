#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>

#include "helpers_geom.hpp"
#include "mcad/geometry.hpp"

using namespace mcad;
using namespace mcad::geom;
using namespace mcad::testing;

namespace {

// Exact distance to the surface of an axis-aligned box.
double box_surface_distance(Vec3 p, Vec3 lo, Vec3 hi) {
    double qx = std::max(lo.x - p.x, p.x - hi.x);
    double qy = std::max(lo.y - p.y, p.y - hi.y);
    double qz = std::max(lo.z - p.z, p.z - hi.z);
    double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0), oz = std::max(qz, 0.0);
    double outside = std::sqrt(ox * ox + oy * oy + oz * oz);
    double inside = std::min(std::max(qx, std::max(qy, qz)), 0.0);
    return std::abs(outside + inside);
}

CadSequence unit_cube_sequence() {
    ExtrudeSpec e;
    e.px = -0.5;
    e.py = -0.5;
    e.pz = -0.5;
    e.e1 = 1.0;
    return make_sequence(rect_unit(1.0, 1.0, e));
}

}  // namespace

TEST_CASE("single cylinder builds one body") {
    ExtrudeSpec e;
    CadSequence seq = make_sequence(circle_unit(0, 0, 0.5, e));
    SolidScene scene = build_scene(seq);
    CHECK(scene.bodies().size() == 1);
    CHECK(scene.sdf({0, 0, 0.5}) < 0);
}

TEST_CASE("cut flips the SDF sign inside the cut region") {
    ExtrudeSpec base;
    base.px = -1;
    base.py = -1;
    base.pz = 0;
    base.s = 2.0;
    base.e1 = 1.0;
    auto cmds = rect_unit(1.0, 1.0, base);  // box [-1,1]^2 x [0,1]
    ExtrudeSpec cutter;
    cutter.pz = 0.25;
    cutter.e1 = 0.5;
    cutter.b = 2;  // cut
    auto unit2 = circle_unit(0, 0, 0.3, cutter);
    cmds.insert(cmds.end(), unit2.begin(), unit2.end());
    SolidScene scene = build_scene(make_sequence(cmds));
    CHECK(scene.bodies().size() == 2);
    CHECK(scene.sdf({0, 0, 0.5}) > 0);    // inside the cut: outside the solid
    CHECK(scene.sdf({0.7, 0.7, 0.5}) < 0);  // material remains
}

TEST_CASE("zero-depth extrusion is rejected") {
    ExtrudeSpec e;
    e.e1 = 0.0;
    e.e2 = 0.0;
    e.u = 2;  // two-sided [0,0]
    CadSequence seq = make_sequence(circle_unit(0, 0, 0.5, e));
    CHECK_THROWS_WITH_AS(build_scene(seq), doctest::Contains("zero-depth"), GeometryError);
}

TEST_CASE("unclosed and degenerate loops are rejected") {
    ExtrudeSpec e;
    CHECK_THROWS_WITH_AS(
        build_scene(make_sequence({sol(), line(0.5, 0), line(0.5, 0.5), extrude(e)})),
        doctest::Contains("unclosed"), GeometryError);
    CHECK_THROWS_WITH_AS(
        build_scene(make_sequence({sol(), line(0.5, 0), line(0, 0), extrude(e)})),
        doctest::Contains("zero-area"), GeometryError);
    // bowtie self-intersection
    CHECK_THROWS_WITH_AS(
        build_scene(make_sequence(
            {sol(), line(1, 1), line(1, 0), line(0, 1), line(0, 0), extrude(e)})),
        doctest::Contains("self-intersecting"), GeometryError);
}

TEST_CASE("first body must be new") {
    ExtrudeSpec e;
    e.b = 1;
    CHECK_THROWS_WITH_AS(build_scene(make_sequence(circle_unit(0, 0, 0.5, e))),
                         doctest::Contains("first body"), GeometryError);
}

TEST_CASE("unit cube SDF values") {
    SolidScene scene = build_scene(unit_cube_sequence());
    CHECK(scene.sdf({0, 0, 0}) == doctest::Approx(-0.5));
    CHECK(scene.sdf({0.5, 0, 0}) == doctest::Approx(0).epsilon(1e-6));
    CHECK(scene.sdf({10, 0, 0}) == doctest::Approx(9.5));
    CHECK(scene.bounds().max_extent() == doctest::Approx(1.0));
}

TEST_CASE("SDF sign agrees with the point-in-extrusion oracle") {
    Rng rng(31);
    for (int s = 0; s < 10; ++s) {
        SolidScene scene = build_scene(random_single_body(rng));
        REQUIRE(scene.bodies().size() == 1);
        for (int i = 0; i < 2000; ++i) {
            Vec3 q = random_point_near(scene.bounds(), rng);
            bool inside = scene.sdf(q) < 0;
            CHECK(inside == oracle_inside(scene.bodies()[0], q));
        }
    }
}

TEST_CASE("CSG sign identities for cut and intersect") {
    Rng rng(77);
    for (int s = 0; s < 20; ++s) {
        CadSequence a = random_single_body(rng);
        CadSequence b = random_single_body(rng);
        std::vector<Command> cmds;
        for (int t = 0; t < a.raw_length; ++t) cmds.push_back(a.at(t));
        int split = int(cmds.size());
        for (int t = 0; t < b.raw_length; ++t) cmds.push_back(b.at(t));
        bool cut = s % 2 == 0;
        cmds.back().slots[slot::Bool] = cut ? 2 : 3;
        SolidScene scene = build_scene(make_sequence(cmds));
        (void)split;
        for (int i = 0; i < 500; ++i) {
            Vec3 q = random_point_near(scene.bounds(), rng);
            bool in_a = scene.body_sdf(0, q) < 0;
            bool in_b = scene.body_sdf(1, q) < 0;
            bool in_scene = scene.sdf(q) < 0;
            if (cut) CHECK(in_scene == (in_a && !in_b));
            else CHECK(in_scene == (in_a && in_b));
        }
    }
}

TEST_CASE("grid evaluation: parallel equals serial") {
    Rng rng(3);
    SolidScene scene = build_scene(random_single_body(rng));
    GridField a = evaluate_grid(scene, 32, true);
    GridField b = evaluate_grid(scene, 32, false);
    CHECK(a.values == b.values);
}

TEST_CASE("sample_surface: cube points lie near the analytic surface") {
    SolidScene scene = build_scene(unit_cube_sequence());
    PointCloud cloud = sample_surface(scene, 2000, 11);
    REQUIRE(int(cloud.pts.size()) == 2000);
    GridField g = evaluate_grid(scene);
    double tol = 2.0 * g.cell_diag();
    for (const Vec3& p : cloud.pts)
        CHECK(box_surface_distance(p, {-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}) <= tol);
}

TEST_CASE("sample_surface determinism and |sdf| bound") {
    Rng rng(21);
    SolidScene scene = build_scene(random_single_body(rng));
    PointCloud a = sample_surface(scene, 500, 42);
    PointCloud b = sample_surface(scene, 500, 42);
    REQUIRE(a.pts.size() == b.pts.size());
    GridField g = evaluate_grid(scene);
    for (size_t i = 0; i < a.pts.size(); ++i) {
        CHECK(a.pts[i].x == b.pts[i].x);
        CHECK(a.pts[i].y == b.pts[i].y);
        CHECK(a.pts[i].z == b.pts[i].z);
        CHECK(std::abs(scene.sdf(a.pts[i])) <= 2.0 * g.cell_diag());
    }
}

TEST_CASE("cut that removes everything yields EmptySolid") {
    ExtrudeSpec base;
    base.pz = 0;
    base.e1 = 0.5;
    auto cmds = circle_unit(0, 0, 0.4, base);
    ExtrudeSpec cutter;
    cutter.px = -1;
    cutter.py = -1;
    cutter.pz = -1;
    cutter.s = 3.0;
    cutter.e1 = 3.0;
    cutter.b = 2;
    auto unit2 = rect_unit(1.0, 1.0, cutter);  // giant cut swallows the base
    cmds.insert(cmds.end(), unit2.begin(), unit2.end());
    SolidScene scene = build_scene(make_sequence(cmds));
    CHECK_THROWS_AS(sample_surface(scene, 100, 1), EmptySolid);
    CHECK_THROWS_AS(extract_mesh(scene), EmptySolid);
}

TEST_CASE("cube mesh is closed with Euler characteristic 2") {
    SolidScene scene = build_scene(unit_cube_sequence());
    TriMesh mesh = extract_mesh(scene);
    REQUIRE(!mesh.triangles.empty());

    std::map<std::pair<int, int>, int> edge_use;
    for (const auto& t : mesh.triangles) {
        for (int k = 0; k < 3; ++k) {
            int a = t[size_t(k)], b = t[size_t((k + 1) % 3)];
            edge_use[{std::min(a, b), std::max(a, b)}]++;
        }
    }
    for (const auto& [e, n] : edge_use) CHECK(n == 2);  // closed 2-manifold

    long V = long(mesh.vertices.size());
    long E = long(edge_use.size());
    long F = long(mesh.triangles.size());
    CHECK(V - E + F == 2);
}

TEST_CASE("cylinder mesh vertices stay within a cell diagonal of the surface") {
    ExtrudeSpec e;
    CadSequence seq = make_sequence(circle_unit(0, 0, 0.5, e));
    SolidScene scene = build_scene(seq);
    TriMesh mesh = extract_mesh(scene);
    GridField g = evaluate_grid(scene);
    for (const Vec3& v : mesh.vertices) CHECK(std::abs(scene.sdf(v)) <= g.cell_diag());
}

TEST_CASE("export_mesh writes OBJ and returns the triangle count") {
    SolidScene scene = build_scene(unit_cube_sequence());
    int n = export_mesh(scene, "/tmp/mcad_test_cube.obj");
    CHECK(n > 0);
    std::ifstream in("/tmp/mcad_test_cube.obj");
    REQUIRE(in.good());
    std::string line;
    int verts = 0, faces = 0;
    while (std::getline(in, line)) {
        if (line.starts_with("v ")) ++verts;
        if (line.starts_with("f ")) ++faces;
    }
    CHECK(faces == n);
    CHECK(verts > 0);
}

TEST_CASE("normalization contract over random models") {
    Rng rng(55);
    int checked = 0;
    for (int i = 0; i < 40; ++i) {
        CadSequence seq = random_single_body(rng);
        CadSequence n;
        try {
            n = normalize(seq);
        } catch (const Error&) {
            continue;  // generator can emit degenerate geometry
        }
        SolidScene scene = build_scene(n);
        const Aabb& b = scene.bounds();
        CHECK(b.lo.x >= -1.0 - 1e-9);
        CHECK(b.lo.y >= -1.0 - 1e-9);
        CHECK(b.lo.z >= -1.0 - 1e-9);
        CHECK(b.hi.x <= 1.0 + 1e-9);
        CHECK(b.hi.y <= 1.0 + 1e-9);
        CHECK(b.hi.z <= 1.0 + 1e-9);
        CHECK(b.max_extent() >= 2.0 - 1e-6);
        CHECK(b.max_extent() <= 2.0 + 1e-9);
        ++checked;
    }
    CHECK(checked > 20);
}
