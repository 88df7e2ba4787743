#pragma once

#include <array>

#include "pmx/mesh.hpp"
#include "pmx/particles.hpp"

namespace pmx {

/// Monaghan's M'4 kernel, support |x| < 2.
double m4prime(double x);

/// Tensor-product M'4 weights of the 4^D nodes around a position: for each
/// axis, the first node key and the four 1D weights.
struct StencilWeights {
    GridKey first;
    std::vector<std::array<double, 4>> w;
};
StencilWeights m4prime_weights(const DistributedGrid& grid, std::span<const double> x);

/// Scatters `src` of every owned particle onto `dst` of the grid, then folds
/// ghost-frame contributions onto their owners. `dst` is overwritten on every
/// node. Frame contributions outside the domain on non-periodic axes are
/// dropped, so particles should stay at least two spacings from such walls.
/// Collective.
void p2m(const ParticleSet& pset, PropId src, DistributedGrid& grid, PropId dst);

/// Interpolates `src` onto `dst` of every owned particle. Grid ghosts must be
/// current.
void m2p(const DistributedGrid& grid, PropId src, ParticleSet& pset, PropId dst);

}  // namespace pmx
