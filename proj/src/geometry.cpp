#include "cwg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "cwg/fem.hpp"

namespace cwg::geometry {

namespace {

// --- boundary curve adapters ---------------------------------------------

struct Curve {
    // closed CCW parametrization over t in [0,1)
    std::function<Vec2(double)> point;
    std::function<bool(const Vec2&)> inside;      // strict interior test
    double perimeter = 0.0;
};

bool point_in_polygon(const std::vector<Vec2>& poly, const Vec2& p) {
    // winding by crossing count
    bool in = false;
    std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[j];
        if ((a.y() > p.y()) != (b.y() > p.y())) {
            double xint = (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x();
            if (p.x() < xint) in = !in;
        }
    }
    return in;
}

double polygon_signed_area(const std::vector<Vec2>& poly) {
    double s = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[(i + 1) % poly.size()];
        s += a.x() * b.y() - b.x() * a.y();
    }
    return 0.5 * s;
}

Curve make_curve(const CrossSectionSpec& spec) {
    Curve c;
    switch (spec.kind) {
        case SectionKind::disk: {
            require(spec.radius > 0.0, "cross_section: radius must be positive");
            double R = spec.radius;
            c.point = [R](double t) { return Vec2(R * std::cos(2 * pi * t), R * std::sin(2 * pi * t)); };
            c.inside = [R](const Vec2& p) { return p.norm() < R; };
            c.perimeter = 2 * pi * R;
            break;
        }
        case SectionKind::ellipse: {
            require(spec.semi_a > 0.0 && spec.semi_b > 0.0, "cross_section: semi-axes must be positive");
            double a = spec.semi_a, b = spec.semi_b;
            // arc-length equalized parameter via a fixed lookup table
            const int M = 4096;
            std::vector<double> s(M + 1, 0.0);
            Vec2 prev(a, 0.0);
            for (int i = 1; i <= M; ++i) {
                double u = 2 * pi * i / M;
                Vec2 q(a * std::cos(u), b * std::sin(u));
                s[i] = s[i - 1] + (q - prev).norm();
                prev = q;
            }
            double per = s[M];
            c.point = [a, b, s, per, M](double t) {
                double target = t * per;
                auto it = std::lower_bound(s.begin(), s.end(), target);
                int i = static_cast<int>(std::distance(s.begin(), it));
                if (i <= 0) i = 1;
                if (i > M) i = M;
                double f = (target - s[i - 1]) / std::max(s[i] - s[i - 1], 1e-300);
                double u = 2 * pi * (i - 1 + f) / M;
                return Vec2(a * std::cos(u), b * std::sin(u));
            };
            c.inside = [a, b](const Vec2& p) {
                double q = p.x() * p.x() / (a * a) + p.y() * p.y() / (b * b);
                return q < 1.0;
            };
            c.perimeter = per;
            break;
        }
        case SectionKind::polygon: {
            require(spec.polygon.size() >= 3, "cross_section: polygon needs >=3 vertices");
            require(polygon_signed_area(spec.polygon) > 0.0, "cross_section: polygon must be CCW");
            require(point_in_polygon(spec.polygon, Vec2(0, 0)), "cross_section: origin must lie inside");
            std::vector<Vec2> poly = spec.polygon;
            std::vector<double> cum(poly.size() + 1, 0.0);
            for (std::size_t i = 0; i < poly.size(); ++i)
                cum[i + 1] = cum[i] + (poly[(i + 1) % poly.size()] - poly[i]).norm();
            double per = cum.back();
            c.point = [poly, cum, per](double t) {
                double target = t * per;
                std::size_t i = 0;
                while (i + 1 < cum.size() && cum[i + 1] < target) ++i;
                double f = (target - cum[i]) / std::max(cum[i + 1] - cum[i], 1e-300);
                const Vec2& A = poly[i % poly.size()];
                const Vec2& B = poly[(i + 1) % poly.size()];
                return Vec2(A + f * (B - A));
            };
            c.inside = [poly](const Vec2& p) { return point_in_polygon(poly, p); };
            c.perimeter = per;
            break;
        }
    }
    return c;
}

// --- Bowyer-Watson Delaunay ------------------------------------------------

struct DelTri {
    int v[3];
    int adj[3];  // neighbor across edge (v[i], v[i+1]); -1 for hull
    bool alive = true;
};

double orient2d(const Vec2& a, const Vec2& b, const Vec2& c) {
    return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

// Expects (a, b, c) positively oriented.  Disk sections put every boundary
// sample on one circle, so incircle tests between boundary points are exact
// ties; resolving them by rounding noise tears the insertion cavity apart.
// Near-ties therefore count as inside: within one insertion that is the same
// consistent infinitesimal drop of p's lifted height for every triangle, and
// the cavity stays star-shaped.
bool in_circumcircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p) {
    double ax = a.x() - p.x(), ay = a.y() - p.y();
    double bx = b.x() - p.x(), by = b.y() - p.y();
    double cx = c.x() - p.x(), cy = c.y() - p.y();
    double la = ax * ax + ay * ay, lb = bx * bx + by * by, lc = cx * cx + cy * cy;
    double det = la * (bx * cy - cx * by) - lb * (ax * cy - cx * ay) + lc * (ax * by - bx * ay);
    double scale = la + lb + lc;
    return det > -1e-12 * scale * scale;
}

// plain incremental Delaunay over the given points; returns triangles as index
// triples (positively oriented)
std::vector<std::array<int, 3>> delaunay(const std::vector<Vec2>& pts) {
    std::size_t n = pts.size();
    require(n >= 3, "delaunay: need at least 3 points");
    Vec2 lo = pts[0], hi = pts[0];
    for (const auto& p : pts) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    double d = std::max(hi.x() - lo.x(), hi.y() - lo.y());
    Vec2 mid = 0.5 * (lo + hi);
    // super-triangle far outside the hull
    std::vector<Vec2> P(pts);
    int s0 = static_cast<int>(P.size());
    P.push_back(mid + Vec2(-20 * d, -10 * d));
    P.push_back(mid + Vec2(20 * d, -10 * d));
    P.push_back(mid + Vec2(0, 20 * d));

    std::vector<std::array<int, 3>> tris;
    tris.push_back({s0, s0 + 1, s0 + 2});

    for (int ip = 0; ip < static_cast<int>(n); ++ip) {
        const Vec2& p = P[static_cast<std::size_t>(ip)];
        // find all triangles whose circumcircle contains p
        std::vector<std::size_t> bad;
        for (std::size_t t = 0; t < tris.size(); ++t) {
            const auto& T = tris[t];
            if (in_circumcircle(P[T[0]], P[T[1]], P[T[2]], p)) bad.push_back(t);
        }
        // boundary of the union of bad triangles
        std::map<std::pair<int, int>, int> edge_count;
        for (std::size_t t : bad)
            for (int e = 0; e < 3; ++e) {
                int a = tris[t][e], b = tris[t][(e + 1) % 3];
                auto key = std::minmax(a, b);
                edge_count[{key.first, key.second}]++;
            }
        std::vector<std::array<int, 2>> cavity;
        for (std::size_t t : bad)
            for (int e = 0; e < 3; ++e) {
                int a = tris[t][e], b = tris[t][(e + 1) % 3];
                auto key = std::minmax(a, b);
                if (edge_count[{key.first, key.second}] == 1) cavity.push_back({a, b});
            }
        std::sort(bad.rbegin(), bad.rend());
        for (std::size_t t : bad) {
            tris[t] = tris.back();
            tris.pop_back();
        }
        for (const auto& e : cavity) {
            std::array<int, 3> T{e[0], e[1], ip};
            if (orient2d(P[T[0]], P[T[1]], P[T[2]]) < 0.0) std::swap(T[1], T[2]);
            tris.push_back(T);
        }
    }
    // drop triangles touching the super-triangle
    std::vector<std::array<int, 3>> out;
    for (const auto& T : tris)
        if (T[0] < s0 && T[1] < s0 && T[2] < s0) out.push_back(T);
    return out;
}

}  // namespace

CrossSectionSpec CrossSectionSpec::from_config_text(const std::string& text) {
    CrossSectionSpec spec;
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> errors;
    bool kind_seen = false;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        try {
            if (key == "kind") {
                kind_seen = true;
                if (val == "disk") spec.kind = SectionKind::disk;
                else if (val == "ellipse") spec.kind = SectionKind::ellipse;
                else if (val == "polygon") spec.kind = SectionKind::polygon;
                else errors.push_back("kind: unknown value '" + val + "'");
            } else if (key == "radius") spec.radius = std::stod(val);
            else if (key == "semi_a") spec.semi_a = std::stod(val);
            else if (key == "semi_b") spec.semi_b = std::stod(val);
            else if (key == "h") spec.h = std::stod(val);
            else if (key == "vertices") {
                std::istringstream vs(val);
                double x, y;
                spec.polygon.clear();
                while (vs >> x >> y) spec.polygon.emplace_back(x, y);
            } else errors.push_back("unknown key '" + key + "'");
        } catch (const std::exception&) {
            errors.push_back(key + ": cannot parse '" + val + "'");
        }
    }
    if (!kind_seen) errors.push_back("missing key 'kind'");
    if (spec.h <= 0.0) errors.push_back("h must be positive");
    if (!errors.empty()) {
        std::string msg = "cross_section config invalid:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw ValidationError(msg);
    }
    return spec;
}

double Mesh::area() const {
    double s = 0.0;
    for (const auto& T : triangles) {
        const Vec2& a = vertices[static_cast<std::size_t>(T[0])];
        const Vec2& b = vertices[static_cast<std::size_t>(T[1])];
        const Vec2& c = vertices[static_cast<std::size_t>(T[2])];
        s += 0.5 * orient2d(a, b, c);
    }
    return s;
}

double Mesh::max_radius() const {
    double r = 0.0;
    for (const auto& v : vertices) r = std::max(r, v.norm());
    return r;
}

std::uint64_t Mesh::content_hash() const {
    std::uint64_t h = fnv1a(vertices.data(), vertices.size() * sizeof(Vec2));
    h = fnv1a(triangles.data(), triangles.size() * sizeof(std::array<int, 3>), h);
    for (const auto& e : boundary) h = fnv1a(&e.v0, sizeof(int) * 2, h);
    return h;
}

Mesh generate_mesh(const CrossSectionSpec& spec) {
    require(spec.h > 0.0 && spec.h < 10.0, "generate_mesh: h out of range");
    Curve curve = make_curve(spec);

    // boundary samples, spacing <= h along the curve; polygon corners are kept
    int nb = std::max(8, static_cast<int>(std::ceil(curve.perimeter / spec.h)));
    std::vector<Vec2> pts;
    if (spec.kind == SectionKind::polygon) {
        // sample each polygon edge separately so corners are exact vertices
        std::size_t np = spec.polygon.size();
        for (std::size_t i = 0; i < np; ++i) {
            const Vec2& A = spec.polygon[i];
            const Vec2& B = spec.polygon[(i + 1) % np];
            int k = std::max(1, static_cast<int>(std::ceil((B - A).norm() / spec.h)));
            for (int j = 0; j < k; ++j) pts.push_back(A + (static_cast<double>(j) / k) * (B - A));
        }
        nb = static_cast<int>(pts.size());
    } else {
        for (int i = 0; i < nb; ++i) pts.push_back(curve.point(static_cast<double>(i) / nb));
    }
    int n_bdry = nb;

    // interior lattice (hex packing), offset by irrational shifts to avoid
    // cocircular degeneracies, pruned near the boundary polyline
    Vec2 lo = pts[0], hi = pts[0];
    for (const auto& p : pts) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    double dx = spec.h, dy = spec.h * std::sqrt(3.0) / 2.0;
    double clearance = 0.62 * spec.h;
    auto near_boundary = [&](const Vec2& p) {
        for (int i = 0; i < n_bdry; ++i) {
            const Vec2& a = pts[static_cast<std::size_t>(i)];
            const Vec2& b = pts[static_cast<std::size_t>((i + 1) % n_bdry)];
            Vec2 ab = b - a;
            double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
            if ((p - (a + t * ab)).norm() < clearance) return true;
        }
        return false;
    };
    int row = 0;
    for (double y = lo.y() + 0.3183 * dy; y < hi.y(); y += dy, ++row) {
        double x0 = lo.x() + 0.2718 * dx + (row % 2 ? 0.5 * dx : 0.0);
        for (double x = x0; x < hi.x(); x += dx) {
            Vec2 p(x, y);
            if (curve.inside(p) && !near_boundary(p)) pts.push_back(p);
        }
    }

    auto tris = delaunay(pts);

    Mesh mesh;
    mesh.spec = spec;
    mesh.vertices = pts;
    // keep triangles whose centroid is strictly inside omega
    for (const auto& T : tris) {
        Vec2 cen = (pts[T[0]] + pts[T[1]] + pts[T[2]]) / 3.0;
        if (curve.inside(cen)) mesh.triangles.push_back(T);
    }
    require(!mesh.triangles.empty(), "generate_mesh: empty triangulation (h too coarse?)");

    // boundary edges = edges used by exactly one kept triangle
    std::map<std::pair<int, int>, std::pair<int, int>> edge_use;  // sorted edge -> (count, oriented a)
    for (const auto& T : mesh.triangles)
        for (int e = 0; e < 3; ++e) {
            int a = T[e], b = T[(e + 1) % 3];
            auto key = std::minmax(a, b);
            auto& slot = edge_use[{key.first, key.second}];
            slot.first++;
            slot.second = a;  // orientation from the kept triangle (domain left)
        }
    std::map<int, int> next_on_loop;
    int n_bedges = 0;
    for (const auto& [key, use] : edge_use) {
        if (use.first != 1) continue;
        int a = use.second;
        int b = (a == key.first) ? key.second : key.first;
        if (next_on_loop.count(a))
            throw SolverError("generate_mesh: non-manifold boundary at vertex " + std::to_string(a));
        next_on_loop[a] = b;
        ++n_bedges;
    }
    if (n_bedges != n_bdry)
        throw SolverError("generate_mesh: boundary loop has " + std::to_string(n_bedges) +
                          " edges, expected " + std::to_string(n_bdry) +
                          " samples; refine h or adjust clearance");

    mesh.boundary_mark.assign(mesh.vertices.size(), 0);
    int start = 0;  // vertex 0 is a boundary sample by construction
    int v = start;
    do {
        auto it = next_on_loop.find(v);
        if (it == next_on_loop.end()) throw SolverError("generate_mesh: open boundary loop");
        int w = it->second;
        BoundaryEdge be;
        be.v0 = v;
        be.v1 = w;
        const Vec2& A = mesh.vertices[static_cast<std::size_t>(v)];
        const Vec2& B = mesh.vertices[static_cast<std::size_t>(w)];
        be.midpoint = 0.5 * (A + B);
        be.length = (B - A).norm();
        Vec2 t = (B - A) / be.length;
        be.normal = Vec2(t.y(), -t.x());  // outward for a CCW loop
        mesh.boundary.push_back(be);
        mesh.boundary_vertices.push_back(v);
        mesh.boundary_mark[static_cast<std::size_t>(v)] = 1;
        v = w;
    } while (v != start && static_cast<int>(mesh.boundary.size()) <= n_bedges);
    if (v != start || static_cast<int>(mesh.boundary.size()) != n_bedges)
        throw SolverError("generate_mesh: boundary loop does not close");

    // loop must run CCW (positive enclosed area) so normals point outward
    double loop_area = 0.0;
    for (const auto& e : mesh.boundary) {
        const Vec2& A = mesh.vertices[static_cast<std::size_t>(e.v0)];
        const Vec2& B = mesh.vertices[static_cast<std::size_t>(e.v1)];
        loop_area += 0.5 * (A.x() * B.y() - B.x() * A.y());
    }
    if (loop_area < 0.0) throw SolverError("generate_mesh: boundary loop is clockwise");

    return mesh;
}

void write_mesh_text(const Mesh& mesh, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), "write_mesh_text: cannot open " + path);
    out << "cwg-mesh/1\n";
    out.precision(17);
    switch (mesh.spec.kind) {
        case SectionKind::disk: out << "disk " << mesh.spec.radius; break;
        case SectionKind::ellipse: out << "ellipse " << mesh.spec.semi_a << " " << mesh.spec.semi_b; break;
        case SectionKind::polygon: out << "polygon " << mesh.spec.polygon.size(); break;
    }
    out << " h " << mesh.spec.h << "\n";
    out << mesh.vertices.size() << " " << mesh.triangles.size() << " " << mesh.boundary.size() << "\n";
    for (const auto& v : mesh.vertices) out << v.x() << " " << v.y() << "\n";
    for (const auto& t : mesh.triangles) out << t[0] << " " << t[1] << " " << t[2] << "\n";
    for (const auto& e : mesh.boundary) out << e.v0 << " " << e.v1 << "\n";
}

Mesh read_mesh_text(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "read_mesh_text: cannot open " + path);
    std::string header;
    std::getline(in, header);
    require(header == "cwg-mesh/1", "read_mesh_text: unsupported header '" + header + "'");
    Mesh mesh;
    std::string kind;
    in >> kind;
    if (kind == "disk") {
        mesh.spec.kind = SectionKind::disk;
        in >> mesh.spec.radius;
    } else if (kind == "ellipse") {
        mesh.spec.kind = SectionKind::ellipse;
        in >> mesh.spec.semi_a >> mesh.spec.semi_b;
    } else if (kind == "polygon") {
        mesh.spec.kind = SectionKind::polygon;
        std::size_t np;
        in >> np;
    } else {
        throw ValidationError("read_mesh_text: unknown section kind '" + kind + "'");
    }
    std::string htag;
    in >> htag >> mesh.spec.h;
    require(htag == "h", "read_mesh_text: malformed spec line");
    std::size_t nv, nt, ne;
    in >> nv >> nt >> ne;
    require(in.good(), "read_mesh_text: bad counts line");
    mesh.vertices.resize(nv);
    for (auto& v : mesh.vertices) in >> v.x() >> v.y();
    mesh.triangles.resize(nt);
    for (auto& t : mesh.triangles) in >> t[0] >> t[1] >> t[2];
    mesh.boundary_mark.assign(nv, 0);
    mesh.boundary.resize(ne);
    for (auto& e : mesh.boundary) {
        in >> e.v0 >> e.v1;
        const Vec2& A = mesh.vertices[static_cast<std::size_t>(e.v0)];
        const Vec2& B = mesh.vertices[static_cast<std::size_t>(e.v1)];
        e.midpoint = 0.5 * (A + B);
        e.length = (B - A).norm();
        Vec2 t = (B - A) / e.length;
        e.normal = Vec2(t.y(), -t.x());
        mesh.boundary_vertices.push_back(e.v0);
        mesh.boundary_mark[static_cast<std::size_t>(e.v0)] = 1;
    }
    require(in.good(), "read_mesh_text: truncated file");
    return mesh;
}

bool FaceSet::contains_all(const FaceSet& other) const {
    std::vector<char> in(1 + (edges.empty() ? 0 : static_cast<std::size_t>(*std::max_element(edges.begin(), edges.end()))), 0);
    for (int e : edges) in[static_cast<std::size_t>(e)] = 1;
    for (int e : other.edges)
        if (static_cast<std::size_t>(e) >= in.size() || !in[static_cast<std::size_t>(e)]) return false;
    return true;
}

double FaceSet::arc_length(const Mesh& mesh) const {
    double s = 0.0;
    for (int e : edges) s += mesh.boundary[static_cast<std::size_t>(e)].length;
    return s;
}

FacePartition face_partition(const Mesh& mesh, const Vec2& xi0) {
    require(std::abs(xi0.norm() - 1.0) < 1e-12, "face_partition: xi0 must be a unit vector");
    FacePartition fp;
    fp.plus.xi = fp.minus.xi = xi0;
    fp.plus.tag = "shadowed";
    fp.minus.tag = "illuminated";
    for (std::size_t e = 0; e < mesh.boundary.size(); ++e) {
        double s = xi0.dot(mesh.boundary[e].normal);
        if (s >= 0.0) fp.plus.edges.push_back(static_cast<int>(e));
        if (s <= 0.0) fp.minus.edges.push_back(static_cast<int>(e));
    }
    return fp;
}

EpsilonFaces epsilon_faces(const Mesh& mesh, const Vec2& xi, double eps) {
    require(std::abs(xi.norm() - 1.0) < 1e-12, "epsilon_faces: xi must be a unit vector");
    require(eps > 0.0, "epsilon_faces: eps must be positive");
    EpsilonFaces ef;
    ef.plus.xi = ef.minus.xi = xi;
    ef.plus.eps = ef.minus.eps = eps;
    ef.plus.tag = "eps-shadowed";
    ef.minus.tag = "eps-illuminated";
    for (std::size_t e = 0; e < mesh.boundary.size(); ++e) {
        double s = xi.dot(mesh.boundary[e].normal);
        if (s > eps) ef.plus.edges.push_back(static_cast<int>(e));
        else ef.minus.edges.push_back(static_cast<int>(e));
    }
    if (ef.plus.edges.empty()) ef.plus_empty_warning = true;
    return ef;
}

BoundaryPartition make_partition(const Mesh& mesh, const Vec2& xi0, double margin) {
    require(std::abs(xi0.norm() - 1.0) < 1e-12, "make_partition: xi0 must be a unit vector");
    require(margin > 0.0 && margin < pi / 2, "make_partition: margin must lie in (0, pi/2)");
    BoundaryPartition bp;
    double band = std::sin(margin);
    bp.input_face.xi = bp.output_face.xi = xi0;
    bp.input_face.tag = "F'";
    bp.output_face.tag = "G'";
    for (std::size_t e = 0; e < mesh.boundary.size(); ++e) {
        double s = xi0.dot(mesh.boundary[e].normal);
        if (s >= -band) bp.input_face.edges.push_back(static_cast<int>(e));
        if (s <= band) bp.output_face.edges.push_back(static_cast<int>(e));
    }
    return bp;
}

double choose_epsilon(const Mesh& mesh, const BoundaryPartition& part, const Vec2& xi0) {
    // coverage precondition: F' union G' = whole boundary
    std::vector<char> covered(mesh.boundary.size(), 0);
    for (int e : part.input_face.edges) covered[static_cast<std::size_t>(e)] = 1;
    for (int e : part.output_face.edges) covered[static_cast<std::size_t>(e)] = 1;
    for (std::size_t e = 0; e < covered.size(); ++e)
        require(covered[e] != 0, "choose_epsilon: F' and G' do not cover boundary edge " + std::to_string(e));
    {
        std::vector<char> in_f(mesh.boundary.size(), 0);
        bool overlap = false;
        for (int e : part.input_face.edges) in_f[static_cast<std::size_t>(e)] = 1;
        for (int e : part.output_face.edges) overlap = overlap || in_f[static_cast<std::size_t>(e)];
        require(overlap, "choose_epsilon: F' and G' must overlap");
    }

    for (int p = 1; p <= 14; ++p) {
        double eps = std::ldexp(1.0, -p);
        // xi ranges over the unit directions with |xi-xi0| <= eps (chord metric)
        double half_angle = 2.0 * std::asin(std::min(1.0, eps / 2.0));
        double base = std::atan2(xi0.y(), xi0.x());
        bool ok = true;
        for (int i = 0; i < 64 && ok; ++i) {
            double a = base - half_angle + (2.0 * half_angle) * i / 63.0;
            Vec2 xi(std::cos(a), std::sin(a));
            EpsilonFaces back = epsilon_faces(mesh, -xi, eps);   // shadowed for -xi must sit in F'
            EpsilonFaces fore = epsilon_faces(mesh, xi, eps);    // shadowed for +xi must sit in G'
            ok = part.input_face.contains_all(back.minus) && part.output_face.contains_all(fore.minus);
        }
        if (ok) return eps;
    }
    throw ValidationError("choose_epsilon: no eps in {2^-1..2^-14} satisfies the face inclusions");
}

double poincare_constant(const Mesh& mesh, double tol, int max_iter) {
    SpMat K = fem::stiffness(mesh);
    SpMat M = fem::mass(mesh);
    fem::IndexSplit split(mesh);
    std::size_t ni = split.interior.size();
    require(ni > 0, "poincare_constant: mesh has no interior vertices");

    // restrict to interior dofs
    std::vector<Triplet> tk, tm;
    for (int col = 0; col < K.outerSize(); ++col)
        for (SpMat::InnerIterator it(K, col); it; ++it) {
            int i = split.interior_of[static_cast<std::size_t>(it.row())];
            int j = split.interior_of[static_cast<std::size_t>(it.col())];
            if (i >= 0 && j >= 0) tk.emplace_back(i, j, it.value());
        }
    for (int col = 0; col < M.outerSize(); ++col)
        for (SpMat::InnerIterator it(M, col); it; ++it) {
            int i = split.interior_of[static_cast<std::size_t>(it.row())];
            int j = split.interior_of[static_cast<std::size_t>(it.col())];
            if (i >= 0 && j >= 0) tm.emplace_back(i, j, it.value());
        }
    SpMat Ki(static_cast<int>(ni), static_cast<int>(ni)), Mi(static_cast<int>(ni), static_cast<int>(ni));
    Ki.setFromTriplets(tk.begin(), tk.end());
    Mi.setFromTriplets(tm.begin(), tm.end());

    Eigen::SimplicialLDLT<SpMat> ldlt(Ki);
    if (ldlt.info() != Eigen::Success) throw SolverError("poincare_constant: stiffness factorization failed");

    // inverse power iteration on K x = lambda M x
    VecX x = VecX::Ones(static_cast<Eigen::Index>(ni));
    x /= std::sqrt(x.dot(Mi * x));
    double lambda = 0.0, res = 1.0;
    for (int it = 0; it < max_iter; ++it) {
        VecX y = ldlt.solve(Mi * x);
        double nrm = std::sqrt(y.dot(Mi * y));
        if (!(nrm > 0.0)) throw SolverError("poincare_constant: iteration collapsed");
        x = y / nrm;
        VecX Kx = Ki * x, Mx = Mi * x;
        lambda = x.dot(Kx) / x.dot(Mx);
        res = (Kx - lambda * Mx).norm() / Kx.norm();
        if (res < tol) return std::sqrt(lambda);
    }
    throw SolverError("poincare_constant: inverse iteration did not converge, last residual " +
                      std::to_string(res));
}

}  // namespace cwg::geometry
