// Cross-section geometry: mesh generation, boundary face bookkeeping, the
// Poincare constant, and the illumination threshold search.
//
// The cross section omega is a bounded C2-or-polygonal domain in R^2 containing
// the origin.  All face sets are collections of boundary edges; membership of
// an edge in a direction-dependent face is always decided at the edge midpoint
// using the outward normal there.
#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "cwg/common.hpp"

namespace cwg::geometry {

enum class SectionKind { disk, ellipse, polygon };

// Description of omega.  h is the target edge length of the triangulation.
struct CrossSectionSpec {
    SectionKind kind = SectionKind::disk;
    double radius = 1.0;                  // disk
    double semi_a = 1.0, semi_b = 0.7;    // ellipse semi-axes
    std::vector<Vec2> polygon;            // CCW vertices, origin strictly inside
    double h = 0.1;

    static CrossSectionSpec from_config_text(const std::string& text);
};

struct BoundaryEdge {
    int v0 = -1, v1 = -1;   // endpoint vertex ids, loop order (domain on the left)
    Vec2 midpoint;
    Vec2 normal;            // unit outward normal at the midpoint
    double length = 0.0;
};

struct Mesh {
    std::vector<Vec2> vertices;
    std::vector<std::array<int, 3>> triangles;   // positively oriented
    std::vector<BoundaryEdge> boundary;          // single closed CCW loop
    std::vector<int> boundary_vertices;          // loop order, boundary[i] = (bv[i], bv[i+1])
    CrossSectionSpec spec;

    std::size_t n_vertices() const { return vertices.size(); }
    bool is_boundary_vertex(int v) const { return boundary_mark[static_cast<std::size_t>(v)] != 0; }
    std::vector<char> boundary_mark;             // 1 if vertex lies on the boundary loop

    double area() const;
    double max_radius() const;                   // sup_{x' in omega} |x'|, from vertices
    std::uint64_t content_hash() const;
};

// Delaunay triangulation of the sampled boundary polyline plus an interior
// point lattice; triangles outside omega are discarded.  Throws SolverError if
// the boundary of the result is not a single loop matching the samples.
Mesh generate_mesh(const CrossSectionSpec& spec);

// Plain-text mesh container (versioned header "cwg-mesh/1").
void write_mesh_text(const Mesh& mesh, const std::string& path);
Mesh read_mesh_text(const std::string& path);

// Face sets are edge-index lists into mesh.boundary, with the data that
// produced them kept for reporting.
struct FaceSet {
    std::vector<int> edges;
    Vec2 xi{1.0, 0.0};
    double eps = 0.0;
    std::string tag;

    bool contains_all(const FaceSet& other) const;
    double arc_length(const Mesh& mesh) const;
};

// Shadowed / illuminated split for direction xi0: plus holds xi0.nu' >= 0,
// minus holds xi0.nu' <= 0.  Edges with xi0.nu' = 0 at the midpoint land in both.
struct FacePartition {
    FaceSet plus, minus;
};
FacePartition face_partition(const Mesh& mesh, const Vec2& xi0);

// Strict epsilon faces: plus is xi.nu' > eps, minus is xi.nu' <= eps.  The two
// sets partition the boundary edge list exactly.  eps >= 1 yields an empty
// plus face and sets the warning flag.
struct EpsilonFaces {
    FaceSet plus, minus;
    bool plus_empty_warning = false;
};
EpsilonFaces epsilon_faces(const Mesh& mesh, const Vec2& xi, double eps);

// Observation setup: F' (Dirichlet input arc) and G' (flux measurement arc).
// Invariants: F' union G' covers the boundary and the overlap is nonempty.
struct BoundaryPartition {
    FaceSet input_face;    // F'
    FaceSet output_face;   // G'
};

// F' = {nu'.xi0 >= -sin(margin)}, G' = {nu'.xi0 <= +sin(margin)}: closed
// neighborhoods of the shadowed / illuminated halves overlapping in two bands.
BoundaryPartition make_partition(const Mesh& mesh, const Vec2& xi0, double margin);

// Halving search over eps in {2^-1,...,2^-14}: the largest candidate such that
// for all unit xi with |xi - xi0| <= eps (64-direction grid over the chord
// ball) the shadowed face for -xi lies in F' and the one for +xi lies in G'.
// Throws ValidationError if no candidate passes or if F',G' do not cover.
double choose_epsilon(const Mesh& mesh, const BoundaryPartition& part, const Vec2& xi0);

// sqrt of the smallest Dirichlet-Laplacian eigenvalue of the discretized
// cross section (P1, inverse power iteration).  Throws SolverError on
// non-convergence, with the last residual in the message.
double poincare_constant(const Mesh& mesh, double tol = 1e-12, int max_iter = 400);

}  // namespace cwg::geometry
