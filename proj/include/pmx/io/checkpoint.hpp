#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pmx/decomposition.hpp"
#include "pmx/mesh.hpp"
#include "pmx/particles.hpp"

namespace pmx {

inline constexpr char kCheckpointMagic[8] = {'P', 'M', 'C', 'K', 'P', 'T', '0', '1'};
inline constexpr char kCheckpointTrailer[8] = {'P', 'M', 'C', 'K', 'E', 'N', 'D', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class EntityKind : std::uint8_t { Particles = 0, Grid = 1 };

struct ChunkEntry {
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
    std::uint32_t crc = 0;
};

/// Everything a checkpoint says about itself, read from the header and footer.
/// The saved decomposition (cell grid, ghost width and assignment) lets a
/// restart on the same rank count reproduce the original layout.
struct CheckpointInfo {
    std::uint32_t version = kCheckpointVersion;
    std::uint32_t dim = 0;
    EntityKind kind = EntityKind::Particles;
    PropertySchema schema;
    AxisBox domain;
    BoundaryConditions bc;
    std::uint64_t global_size = 0;
    std::uint32_t saved_ranks = 0;
    /// Grid files only.
    std::vector<std::int64_t> nodes_per_axis;
    double ghost_width = 0.0;
    std::vector<std::int64_t> cells_per_axis;
    Assignment assignment;
    std::vector<ChunkEntry> chunks;
};

/// CRC-32C (Castagnoli) of a byte range.
std::uint32_t crc32c(std::span<const std::byte> data);

/// Writes the owned particles of every rank to one file. Collective.
void checkpoint_save(const ParticleSet& pset, const std::string& path);
/// Writes the owned nodes of every rank to one file. Collective.
void checkpoint_save(const DistributedGrid& grid, const std::string& path);

/// Reads the header and footer of a checkpoint; throws CorruptFileError when
/// the file is truncated or malformed. Local, no communication.
CheckpointInfo checkpoint_inspect(const std::string& path);

/// The decomposition stored in the file when the world has the saved rank
/// count, otherwise a fresh one over the same domain. Collective.
DecompositionPtr checkpoint_decomposition(World& world, const CheckpointInfo& info,
                                          const DecompositionOptions& options = {});

/// Reads chunks round-robin over the ranks, then maps every entity onto
/// `decomposition`. When `expected` is non-empty the stored schema must equal
/// it. Collective.
ParticleSet checkpoint_load_particles(World& world, const std::string& path, DecompositionPtr decomposition,
                                      const PropertySchema& expected = {});
DistributedGrid checkpoint_load_grid(World& world, const std::string& path, DecompositionPtr decomposition,
                                     const PropertySchema& expected = {});

}  // namespace pmx
