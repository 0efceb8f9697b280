#pragma once

#include "pspool/mesh.hpp"

namespace pspool::shapes {

/// Regular icosahedron with vertices on the unit sphere.
Mesh icosahedron();

/// Icosahedron with each face split into four `levels` times, projected to the unit sphere.
Mesh icosphere(int levels);

/// Latitude/longitude sphere with two pole vertices: 2 * slices * (stacks - 1) faces.
Mesh uv_sphere(int slices, int stacks);

/// Torus grid with major radius 1 and the given minor radius: 2 * rings * sides faces.
Mesh torus(int rings, int sides, double minor_radius);

/// Regular tetrahedron.
Mesh tetrahedron();

}  // namespace pspool::shapes
