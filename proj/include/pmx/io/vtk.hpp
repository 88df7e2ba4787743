#pragma once

#include <span>
#include <string>
#include <vector>

#include "pmx/mesh.hpp"
#include "pmx/particles.hpp"

namespace pmx {

/// Writes this rank's owned particles to `<path>.<rank>.vtk` as legacy ASCII
/// POLYDATA with one vertex per particle. Scalars and fixed arrays of up to
/// four values become SCALARS, D-vectors become VECTORS (padded to three
/// components). Properties VTK cannot hold are skipped with a warning on
/// stderr. Positions beyond the third axis are dropped. Returns the files
/// written.
std::vector<std::string> vtk_write_particles(const ParticleSet& pset, const std::string& path,
                                             std::span<const PropId> props);

/// Writes each owned block as STRUCTURED_POINTS. Block 0 goes to
/// `<path>.<rank>.vtk`, further blocks to `<path>.<rank>.b<k>.vtk`. Grids
/// above three dimensions are rejected.
std::vector<std::string> vtk_write_grid(const DistributedGrid& grid, const std::string& path,
                                        std::span<const PropId> props);

}  // namespace pmx
