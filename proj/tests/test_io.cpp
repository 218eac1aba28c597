#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include <zlib.h>

#include "spn/checkpoint.hpp"
#include "spn/heatmap.hpp"
#include "spn/png_io.hpp"
#include "spn/rng.hpp"
#include "spn/train.hpp"

using namespace spn;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
    return fs::temp_directory_path() / name;
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f);
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(p, std::ios::binary);
    REQUIRE(f);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Minimal PNG assembler used to exercise decode filters our writer never emits.
std::vector<std::uint8_t> assemble_png(std::size_t w, std::size_t h, std::size_t channels,
                                       const std::vector<std::uint8_t>& filtered_scanlines) {
    std::vector<std::uint8_t> out{0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    auto put_u32 = [&](std::uint32_t v) {
        out.push_back(static_cast<std::uint8_t>(v >> 24));
        out.push_back(static_cast<std::uint8_t>(v >> 16));
        out.push_back(static_cast<std::uint8_t>(v >> 8));
        out.push_back(static_cast<std::uint8_t>(v));
    };
    auto chunk = [&](const char type[4], const std::vector<std::uint8_t>& payload) {
        put_u32(static_cast<std::uint32_t>(payload.size()));
        const std::size_t crc_start = out.size();
        out.insert(out.end(), type, type + 4);
        out.insert(out.end(), payload.begin(), payload.end());
        const auto crc =
            static_cast<std::uint32_t>(::crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start)));
        put_u32(crc);
    };
    std::vector<std::uint8_t> ihdr;
    auto put_u32_v = [&](std::uint32_t v) {
        ihdr.push_back(static_cast<std::uint8_t>(v >> 24));
        ihdr.push_back(static_cast<std::uint8_t>(v >> 16));
        ihdr.push_back(static_cast<std::uint8_t>(v >> 8));
        ihdr.push_back(static_cast<std::uint8_t>(v));
    };
    put_u32_v(static_cast<std::uint32_t>(w));
    put_u32_v(static_cast<std::uint32_t>(h));
    ihdr.push_back(8);
    ihdr.push_back(channels == 1 ? 0 : (channels == 3 ? 2 : 6));
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    chunk("IHDR", ihdr);

    uLongf bound = ::compressBound(static_cast<uLong>(filtered_scanlines.size()));
    std::vector<std::uint8_t> compressed(bound);
    REQUIRE(::compress2(compressed.data(), &bound, filtered_scanlines.data(),
                        static_cast<uLong>(filtered_scanlines.size()), 6) == Z_OK);
    compressed.resize(bound);
    chunk("IDAT", compressed);
    chunk("IEND", {});
    return out;
}

} // namespace

TEST_CASE("png roundtrip for RGB and grayscale") {
    Rng rng(1);
    for (std::size_t channels : {std::size_t{1}, std::size_t{3}}) {
        Image8 img;
        img.width = 13;
        img.height = 7;
        img.channels = channels;
        img.pixels.resize(13 * 7 * channels);
        for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));

        const fs::path path = temp_file("spn_test_roundtrip.png");
        write_png(path, img);
        const Image8 back = read_png(path);
        CHECK(back.width == img.width);
        CHECK(back.height == img.height);
        CHECK(back.channels == img.channels);
        CHECK(back.pixels == img.pixels);
        fs::remove(path);
    }
}

TEST_CASE("png reader handles Sub, Up, Average and Paeth filters") {
    // 3x3 grayscale with known pixel values, every row differently filtered
    const std::vector<std::uint8_t> pixels{10, 20, 30, 15, 25, 35, 40, 42, 44};
    std::vector<std::uint8_t> scan;
    // row 0: Sub filter (delta to the left neighbor)
    scan.push_back(1);
    scan.push_back(10);
    scan.push_back(20 - 10);
    scan.push_back(30 - 20);
    // row 1: Up filter (delta to the row above)
    scan.push_back(2);
    scan.push_back(15 - 10);
    scan.push_back(25 - 20);
    scan.push_back(35 - 30);
    // row 2: Average then Paeth-equivalent deltas
    scan.push_back(3);
    scan.push_back(static_cast<std::uint8_t>(40 - (0 + 15) / 2));
    scan.push_back(static_cast<std::uint8_t>(42 - (40 + 25) / 2));
    scan.push_back(static_cast<std::uint8_t>(44 - (42 + 35) / 2));
    const auto bytes = assemble_png(3, 3, 1, scan);
    const fs::path path = temp_file("spn_test_filters.png");
    write_bytes(path, bytes);
    const Image8 img = read_png(path);
    CHECK(img.pixels == pixels);
    fs::remove(path);

    // Paeth on an RGB row
    std::vector<std::uint8_t> scan2;
    scan2.push_back(0);
    for (std::uint8_t v : {200, 100, 50, 210, 110, 60}) scan2.push_back(v);
    scan2.push_back(4); // Paeth: predictor for x<bpp is b (row above), else full Paeth
    const std::uint8_t row2[6] = {190, 105, 55, 215, 108, 62};
    const std::uint8_t row1[6] = {200, 100, 50, 210, 110, 60};
    for (std::size_t x = 0; x < 6; ++x) {
        const int a = x >= 3 ? row2[x - 3] : 0;
        const int b = row1[x];
        const int c = x >= 3 ? row1[x - 3] : 0;
        const int p = a + b - c;
        const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
        const int pred = (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
        scan2.push_back(static_cast<std::uint8_t>((row2[x] - pred) & 0xff));
    }
    const auto bytes2 = assemble_png(2, 2, 3, scan2);
    write_bytes(path, bytes2);
    const Image8 rgb = read_png(path);
    CHECK(std::memcmp(rgb.pixels.data(), row1, 6) == 0);
    CHECK(std::memcmp(rgb.pixels.data() + 6, row2, 6) == 0);
    fs::remove(path);
}

TEST_CASE("png reader drops the alpha channel") {
    std::vector<std::uint8_t> scan;
    scan.push_back(0);
    for (std::uint8_t v : {10, 20, 30, 255, 40, 50, 60, 128}) scan.push_back(v);
    const auto bytes = assemble_png(2, 1, 4, scan);
    const fs::path path = temp_file("spn_test_rgba.png");
    write_bytes(path, bytes);
    const Image8 img = read_png(path);
    CHECK(img.channels == 3);
    CHECK(img.pixels == std::vector<std::uint8_t>{10, 20, 30, 40, 50, 60});
    fs::remove(path);
}

TEST_CASE("png reader rejects junk") {
    const fs::path path = temp_file("spn_test_junk.png");
    write_bytes(path, {1, 2, 3, 4, 5});
    CHECK_THROWS_AS(read_png(path), DataError);
    fs::remove(path);
}

TEST_CASE("emit_heatmap normalizes to the full gray range") {
    const fs::path path = temp_file("spn_test_heat.png");

    SUBCASE("constant map renders mid-gray") {
        emit_heatmap(Grid(4, 6, 3.25), path);
        const Image8 img = read_png(path);
        CHECK(img.channels == 1);
        for (auto p : img.pixels) CHECK(static_cast<int>(p) == 128);
    }
    SUBCASE("one-hot map renders a single white pixel on black") {
        Grid g(5, 5, 0.0);
        g(2, 3) = 7.0;
        emit_heatmap(g, path);
        const Image8 img = read_png(path);
        for (std::size_t y = 0; y < 5; ++y)
            for (std::size_t x = 0; x < 5; ++x)
                CHECK(static_cast<int>(img.at(y, x, 0)) == ((y == 2 && x == 3) ? 255 : 0));
    }
    fs::remove(path);
}

TEST_CASE("csv emit/load roundtrip preserves full precision") {
    Rng rng(17);
    Grid g(6, 4);
    for (double& x : g.v) x = rng.uniform(-1e6, 1e6) * std::pow(10.0, rng.uniform(-12.0, 0.0));
    const fs::path path = temp_file("spn_test_map.csv");
    emit_csv(g, path);
    const Grid back = load_csv(path);
    REQUIRE(back.rows == g.rows);
    REQUIRE(back.cols == g.cols);
    for (std::size_t i = 0; i < g.v.size(); ++i) CHECK(back.v[i] == g.v[i]); // bitwise
    fs::remove(path);
}

namespace {

Network trained_tiny_net(SgdState* state_out) {
    Network net = make_network(tiny_network_spec(), 9);
    std::vector<LabeledImage> data;
    for (std::uint64_t s = 0; s < 4; ++s) {
        Rng rng(70 + s);
        Tensor3 img(1, 16, 16);
        for (double& x : img.v) x = rng.uniform();
        data.push_back({img, {static_cast<int>(s % 3)}});
    }
    OptimizerConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    SgdState state = SgdState::zeros_like(net);
    train(net, data, cfg, &state);
    if (state_out != nullptr) *state_out = state;
    return net;
}

} // namespace

TEST_CASE("checkpoint roundtrip is bit-exact") {
    SgdState state;
    Network net = trained_tiny_net(&state);
    OptimizerConfig opt;
    opt.epochs = 2;
    TrainingSummary summary;
    summary.epochs_run = 2;
    summary.final_loss = 0.5;
    summary.final_accuracy = 0.75;
    summary.mean_walk_iterations = 33.0;

    const fs::path path = temp_file("spn_test_ckpt.spn");
    save_checkpoint(net, opt, &state, summary, path);
    LoadedCheckpoint back = load_checkpoint(path);

    auto refs_a = parameter_refs(net);
    auto refs_b = parameter_refs(back.net);
    REQUIRE(refs_a.size() == refs_b.size());
    for (std::size_t i = 0; i < refs_a.size(); ++i) {
        CHECK(refs_a[i].name == refs_b[i].name);
        CHECK(refs_a[i].shape == refs_b[i].shape);
        CHECK(std::memcmp(refs_a[i].data, refs_b[i].data, refs_a[i].size * sizeof(double)) == 0);
    }
    REQUIRE(back.state.velocity.size() == state.velocity.size());
    for (std::size_t i = 0; i < state.velocity.size(); ++i) CHECK(back.state.velocity[i] == state.velocity[i]);
    CHECK(back.training.epochs_run == 2);
    CHECK(back.training.final_accuracy == 0.75);
    CHECK(back.optimizer.epochs == 2);
    fs::remove(path);
}

TEST_CASE("checkpoint error taxonomy") {
    Network net = trained_tiny_net(nullptr);
    OptimizerConfig opt;
    TrainingSummary summary;
    const fs::path path = temp_file("spn_test_ckpt2.spn");
    save_checkpoint(net, opt, nullptr, summary, path);
    const std::vector<std::uint8_t> good = read_bytes(path);

    SUBCASE("corrupted magic") {
        auto bad = good;
        bad[0] = 'X';
        write_bytes(path, bad);
        CHECK_THROWS_AS(load_checkpoint(path), BadMagicError);
    }
    SUBCASE("unsupported version") {
        auto bad = good;
        const std::string needle = "\"version\":1";
        auto it = std::search(bad.begin(), bad.end(), needle.begin(), needle.end());
        REQUIRE(it != bad.end());
        *(it + needle.size() - 1) = '9';
        write_bytes(path, bad);
        CHECK_THROWS_AS(load_checkpoint(path), VersionError);
    }
    SUBCASE("truncated data") {
        auto bad = good;
        bad.resize(bad.size() - 16);
        write_bytes(path, bad);
        CHECK_THROWS_AS(load_checkpoint(path), TruncatedError);
    }
    SUBCASE("trailing garbage breaks the offset audit") {
        auto bad = good;
        bad.insert(bad.end(), {0, 0, 0, 0, 0, 0, 0, 0});
        write_bytes(path, bad);
        CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    }
    SUBCASE("header offsets are cross-checked against the file length") {
        // growing a declared shape makes the data section inconsistent
        auto bad = good;
        const std::string needle = "\"shape\":[3]";
        auto it = std::search(bad.begin(), bad.end(), needle.begin(), needle.end());
        REQUIRE(it != bad.end());
        *(it + 9) = '5';
        write_bytes(path, bad);
        CHECK_THROWS(load_checkpoint(path));
    }
    fs::remove(path);
}
