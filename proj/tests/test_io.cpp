#include <doctest.h>

#include <fstream>

#include "checkpoint_matrix.hpp"
#include "pmx/io/vtk.hpp"
#include "vtk_reader.hpp"

using namespace pmx;
using namespace pmx::testing;

TEST_CASE("crc32c check value") {
    // Standard check input for CRC-32C.
    CHECK(crc32c(to_bytes("123456789")) == 0xE3069283u);
    CHECK(crc32c({}) == 0u);
}

TEST_CASE("checkpoint roundtrip across rank counts") {
    auto dir = scratch_dir("io_matrix");
    for (int p : {1, 2, 4})
        for (int q : {1, 3}) {
            CAPTURE(p);
            CAPTURE(q);
            auto r = checkpoint_roundtrip(p, q, dir, 150);
            CHECK(r.particles == 150);
            CHECK(r.particles_equal);
            CHECK(r.grid_equal);
        }
    std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint header and chunk layout") {
    auto dir = scratch_dir("io_layout");
    const auto path = (dir / "p.ckpt").string();
    world_spawn(3, [&](World& w) {
        auto d = matrix_decomposition(w);
        auto ps = matrix_particles(w, d, 10);
        checkpoint_save(ps, path);
        auto info = checkpoint_inspect(path);
        CHECK(info.kind == EntityKind::Particles);
        CHECK(info.dim == 2);
        CHECK(info.saved_ranks == 3);
        CHECK(info.global_size == 10);
        CHECK(info.schema == checkpoint_schema());
        CHECK(info.chunks.size() == 3);
        CHECK(info.assignment == d->assignment());
        for (std::size_t c = 1; c < info.chunks.size(); ++c)
            CHECK(info.chunks[c].offset == info.chunks[c - 1].offset + info.chunks[c - 1].length);
    });
    std::ifstream f(path, std::ios::binary);
    char magic[8];
    f.read(magic, 8);
    CHECK(std::string(magic, 8) == "PMCKPT01");
    std::filesystem::remove_all(dir);
}

TEST_CASE("empty particle set checkpoints to zero-count chunks") {
    auto dir = scratch_dir("io_empty");
    const auto path = (dir / "e.ckpt").string();
    world_spawn(2, [&](World& w) {
        auto d = matrix_decomposition(w);
        ParticleSet ps(w, d, checkpoint_schema());
        checkpoint_save(ps, path);
        auto back = checkpoint_load_particles(w, path, d);
        CHECK(back.n_owned() == 0);
        CHECK(checkpoint_inspect(path).global_size == 0);
    });
    std::filesystem::remove_all(dir);
}

TEST_CASE("same rank count restores the saved decomposition and columns") {
    auto dir = scratch_dir("io_identity");
    const auto path = (dir / "i.ckpt").string();
    world_spawn(2, [&](World& w) {
        DecompositionOptions opt;
        opt.cells_per_axis = std::vector<std::int64_t>{8, 8};
        std::vector<double> skew(64, 1.0);
        for (std::size_t i = 0; i < 20; ++i) skew[i] = 6.0;
        auto d = Decomposition::build(w, AxisBox(Point{0, 0}, Point{1, 1}), all_periodic(2), GhostSpec(0.0625), opt, skew);
        auto ps = matrix_particles(w, d, 60);
        checkpoint_save(ps, path);
        auto info = checkpoint_inspect(path);
        auto d2 = checkpoint_decomposition(w, info);
        CHECK(d2->assignment() == d->assignment());
        auto back = checkpoint_load_particles(w, path, d2);
        CHECK(owned_state(back) == owned_state(ps));
    });
    std::filesystem::remove_all(dir);
}

TEST_CASE("corrupt and incompatible checkpoints are rejected collectively") {
    auto dir = scratch_dir("io_corrupt");
    const auto path = (dir / "c.ckpt").string();
    const auto gpath = (dir / "g.ckpt").string();
    world_spawn(2, [&](World& w) {
        auto d = matrix_decomposition(w);
        checkpoint_save(matrix_particles(w, d, 50), path);
        checkpoint_save(matrix_grid(w, d), gpath);
    });
    const auto size = std::filesystem::file_size(path);

    SUBCASE("truncated") {
        std::filesystem::resize_file(path, size - 5);
        world_spawn(2, [&](World& w) {
            CHECK_THROWS_AS(checkpoint_load_particles(w, path, matrix_decomposition(w)), CorruptFileError);
        });
    }
    SUBCASE("flipped byte in the second chunk") {
        auto info = checkpoint_inspect(path);
        {
            std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
            f.seekp(static_cast<std::streamoff>(info.chunks[1].offset + 13));
            char c = 0x5a;
            f.write(&c, 1);
        }
        world_spawn(3, [&](World& w) {
            try {
                checkpoint_load_particles(w, path, matrix_decomposition(w));
                FAIL("no error");
            } catch (const CorruptFileError& e) {
                CHECK(std::string(e.what()).find("chunk 1") != std::string::npos);
            }
        });
    }
    SUBCASE("wrong schema or entity kind") {
        world_spawn(2, [&](World& w) {
            auto d = matrix_decomposition(w);
            CHECK_THROWS_AS(checkpoint_load_particles(w, path, d, {scalar("mass")}), IncompatibleSchemaError);
            CHECK_THROWS_AS(checkpoint_load_grid(w, path, d), IncompatibleSchemaError);
            CHECK_THROWS_AS(checkpoint_load_particles(w, gpath, d), IncompatibleSchemaError);
        });
    }
    SUBCASE("not a checkpoint") {
        std::ofstream(path, std::ios::trunc) << "hello, this is not a checkpoint file at all";
        CHECK_THROWS_AS(checkpoint_inspect(path), CorruptFileError);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("vtk particles: one particle at the origin") {
    auto dir = scratch_dir("vtk_one");
    const auto base = (dir / "one").string();
    world_spawn(1, [&](World& w) {
        auto d = matrix_decomposition(w);
        ParticleSet ps(w, d, {scalar("q")});
        auto i = ps.add(std::vector<double>{0.0, 0.0}, 1);
        ps.real(0, i)[0] = 1.5;
        auto files = vtk_write_particles(ps, base, std::vector<PropId>{0});
        REQUIRE(files.size() == 1);
        CHECK(files[0] == base + ".0.vtk");
    });
    std::ifstream f(base + ".0.vtk");
    std::stringstream text;
    text << f.rdbuf();
    CHECK(text.str().find("POINTS 1 double\n0 0 0\n") != std::string::npos);
    auto vtk = read_vtk(base + ".0.vtk");
    CHECK(vtk.npoints == 1);
    CHECK(vtk.fields.at("q").values == std::vector<double>{1.5});
    std::filesystem::remove_all(dir);
}

TEST_CASE("vtk particles per rank parse and match") {
    auto dir = scratch_dir("vtk_particles");
    const auto base = (dir / "cloud").string();
    world_spawn(3, [&](World& w) {
        auto d = matrix_decomposition(w);
        auto ps = matrix_particles(w, d, 90);
        auto files = vtk_write_particles(ps, base, std::vector<PropId>{0, 1, 2, 3});
        auto vtk = read_vtk(files.at(0));
        CHECK(vtk.dataset == "POLYDATA");
        CHECK(vtk.npoints == ps.n_owned());
        CHECK(vtk.fields.size() == 3);
        CHECK(vtk.fields.at("vel").section == "VECTORS");
        CHECK(vtk.fields.at("tag").type == "long");
        for (std::size_t i = 0; i < ps.n_owned(); ++i) {
            CHECK(vtk.points[3 * i] == ps.position(i)[0]);
            CHECK(vtk.fields.at("mass").values[i] == ps.real(0, i)[0]);
            CHECK(vtk.fields.at("vel").values[3 * i + 1] == ps.real(1, i)[1]);
            CHECK(vtk.fields.at("vel").values[3 * i + 2] == 0.0);
        }
    });
    std::filesystem::remove_all(dir);
}

TEST_CASE("vtk empty set and grid dimensions") {
    auto dir = scratch_dir("vtk_grid");
    world_spawn(1, [&](World& w) {
        auto d = matrix_decomposition(w);
        ParticleSet ps(w, d, {scalar("q")});
        auto files = vtk_write_particles(ps, (dir / "empty").string(), std::vector<PropId>{0});
        auto vtk = read_vtk(files[0]);
        CHECK(vtk.npoints == 0);
        CHECK(vtk.fields.count("q") == 1);

        DecompositionOptions opt;
        opt.cells_per_axis = std::vector<std::int64_t>{1, 1};
        auto d1 = Decomposition::build(w, AxisBox(Point{0, 0}, Point{1, 1}), all_non_periodic(2), GhostSpec(0.0), opt);
        DistributedGrid g(w, d1, {2, 2}, {scalar("u")});
        auto gf = vtk_write_grid(g, (dir / "g").string(), std::vector<PropId>{0});
        std::ifstream f(gf[0]);
        std::stringstream text;
        text << f.rdbuf();
        CHECK(text.str().find("DIMENSIONS 2 2 1") != std::string::npos);
    });
    std::filesystem::remove_all(dir);
}

TEST_CASE("vtk grid blocks cover the grid") {
    auto dir = scratch_dir("vtk_blocks");
    const auto base = (dir / "mesh").string();
    std::vector<std::string> all;
    world_spawn(4, [&](World& w) {
        auto d = matrix_decomposition(w);
        auto g = matrix_grid(w, d);
        auto files = vtk_write_grid(g, base, std::vector<PropId>{0, 1});
        CHECK(files.size() == g.block_count());
        std::int64_t points = 0;
        for (std::size_t b = 0; b < files.size(); ++b) {
            auto vtk = read_vtk(files[b]);
            CHECK(vtk.dataset == "STRUCTURED_POINTS");
            CHECK(vtk.spacing[0] == g.spacing(0));
            auto origin = g.node_position(g.block(b).owned.low);
            CHECK(vtk.origin[1] == origin[1]);
            CHECK(vtk.fields.at("u").values.size() == vtk.npoints);
            // First value belongs to the block's low corner.
            CHECK(vtk.fields.at("u").values[0] == g.block(b).data.real(0, g.block(b).index(g.block(b).owned.low))[0]);
            points += static_cast<std::int64_t>(vtk.npoints);
        }
        CHECK(w.allreduce_sum(points) == 32 * 32);
    });
    std::filesystem::remove_all(dir);
}

TEST_CASE("vtk skips properties it cannot represent") {
    auto dir = scratch_dir("vtk_skip");
    world_spawn(1, [&](World& w) {
        DecompositionOptions opt;
        opt.cells_per_axis = std::vector<std::int64_t>{2, 2, 2, 2};
        auto d = Decomposition::build(w, AxisBox(Point(4, 0.0), Point(4, 1.0)), all_periodic(4), GhostSpec(0.1), opt);
        ParticleSet ps(w, d, {vector_d("v"), scalar("s")});
        ps.add(std::vector<double>{0.1, 0.2, 0.3, 0.4}, 0);
        auto files = vtk_write_particles(ps, (dir / "p4").string(), std::vector<PropId>{0, 1});
        auto vtk = read_vtk(files[0]);
        CHECK(vtk.fields.count("v") == 0);
        CHECK(vtk.fields.count("s") == 1);
        CHECK(vtk.points == std::vector<double>{0.1, 0.2, 0.3});
    });
    std::filesystem::remove_all(dir);
}
