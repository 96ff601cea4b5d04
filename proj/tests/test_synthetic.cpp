#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "resobj/errors.hpp"
#include "resobj/model.hpp"
#include "resobj/synthetic.hpp"

using namespace resobj;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "resobj_test_synthetic";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("scenes are a pure function of config and index") {
    const SceneConfig c;
    const Scene a = generate_scene(c, 17);
    const Scene b = generate_scene(c, 17);
    CHECK(a.input == b.input);
    CHECK(a.objects.size() == b.objects.size());
    // Generating other scenes in between changes nothing.
    for (std::uint64_t i = 0; i < 5; ++i) generate_scene(c, i);
    CHECK(generate_scene(c, 17).input == a.input);
    CHECK_FALSE(generate_scene(c, 18).input == a.input);
    SceneConfig other = c;
    other.base_seed = 2;
    CHECK_FALSE(generate_scene(other, 17).input == a.input);
}

TEST_CASE("ground truth respects the config") {
    SceneConfig c;
    c.num_classes = 5;
    for (std::uint64_t i = 0; i < 300; ++i) {
        const Scene s = generate_scene(c, i);
        CHECK(s.objects.size() >= 1);
        CHECK(s.objects.size() <= 3);
        for (std::size_t k = 0; k < s.objects.size(); ++k) {
            const auto& o = s.objects[k];
            CHECK(o.cls >= 1);
            CHECK(o.cls <= 5);
            CHECK(o.box.x1 >= 0.0);
            CHECK(o.box.y1 >= 0.0);
            CHECK(o.box.x2 <= 32.0);
            CHECK(o.box.y2 <= 32.0);
            CHECK(o.box.width() >= 3.0);
            CHECK(o.box.width() <= 6.0);
            for (std::size_t m = k + 1; m < s.objects.size(); ++m) CHECK(iou(o.box, s.objects[m].box) == 0.0);
        }
    }
}

TEST_CASE("noiseless rendering is nonzero exactly inside the box") {
    SceneConfig c;
    c.num_classes = 1;
    c.min_objects = c.max_objects = 1;
    c.noise_std = 0.0;
    for (std::uint64_t i = 0; i < 20; ++i) {
        const Scene s = generate_scene(c, i);
        REQUIRE(s.objects.size() == 1);
        const Box& b = s.objects[0].box;
        const auto pattern = class_pattern(1, 1, c.channels);
        for (std::size_t ch = 0; ch < c.channels; ++ch) {
            for (std::size_t y = 0; y < c.grid_h; ++y) {
                for (std::size_t x = 0; x < c.grid_w; ++x) {
                    const bool inside = x >= b.x1 && x < b.x2 && y >= b.y1 && y < b.y2;
                    const double v = s.input[(ch * c.grid_h + y) * c.grid_w + x];
                    CHECK((v != 0.0) == inside);
                    if (inside) CHECK(v == pattern[ch]);
                }
            }
        }
    }
}

TEST_CASE("class patterns are distinct and positive") {
    for (int k : {1, 2, 3, 8, 27}) {
        std::set<std::vector<double>> seen;
        for (int cls = 1; cls <= k; ++cls) {
            const auto p = class_pattern(cls, k, 3);
            for (double v : p) CHECK(v > 0.0);
            seen.insert(p);
        }
        CHECK(seen.size() == static_cast<std::size_t>(k));
    }
    CHECK_THROWS_AS(class_pattern(0, 3, 3), ContractViolation);
    CHECK_THROWS_AS(class_pattern(4, 3, 3), ContractViolation);
}

TEST_CASE("imbalance statistics") {
    SUBCASE("default config is severely imbalanced") {
        const auto stats = imbalance_stats(SceneConfig{}, default_anchor_layout(), 1000);
        CHECK(stats.positive_fraction > 0.0);
        CHECK(stats.positive_fraction < 0.02);
        CHECK(stats.mean_negatives > 100 * stats.mean_positives);
    }
    SUBCASE("empty scenes have no positives") {
        SceneConfig c;
        c.min_objects = c.max_objects = 0;
        const auto stats = imbalance_stats(c, default_anchor_layout(), 10);
        CHECK(stats.mean_positives == 0.0);
        CHECK(stats.positive_fraction == 0.0);
    }
    SUBCASE("an object filling the grid") {
        SceneConfig c;
        c.grid_h = c.grid_w = 6;
        c.min_size = c.max_size = 6;
        c.min_objects = c.max_objects = 1;
        const auto stats = imbalance_stats(c, AnchorLayout{6, 6, {{6.0, 1.0}}}, 3);
        CHECK(stats.positive_fraction > 0.1);
    }
    CHECK_THROWS_AS(imbalance_stats(SceneConfig{}, default_anchor_layout(), 0), ContractViolation);
}

TEST_CASE("validation scenes use odd indices of their own stream") {
    const SceneConfig c;
    SceneConfig v = c;
    v.base_seed = 77;
    for (std::size_t j = 0; j < 4; ++j) {
        const Scene s = validation_scene(c, 77, j);
        CHECK(s.index == 2 * j + 1);
        CHECK(s.input == generate_scene(v, 2 * j + 1).input);
    }
}

TEST_CASE("config validation") {
    SceneConfig c;
    c.max_size = 40;
    CHECK_THROWS_AS(generate_scene(c, 0), ContractViolation);
    c = SceneConfig{};
    c.num_classes = 0;
    CHECK_THROWS_AS(generate_scene(c, 0), ContractViolation);
    c = SceneConfig{};
    c.min_objects = 4;
    CHECK_THROWS_AS(generate_scene(c, 0), ContractViolation);
}

TEST_CASE("counter rng") {
    CounterRng a(5, 9), b(5, 9), c(5, 10);
    CHECK(a.next_u64() == b.next_u64());
    CHECK(a.next_u64() != c.next_u64());
    CounterRng r(1, 1);
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        CHECK_UNARY(u >= 0.0 && u < 1.0);
        const double z = r.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(std::abs(sq / n - 1.0) < 0.02);
    for (int i = 0; i < 1000; ++i) {
        const auto k = r.uniform_int(3, 6);
        CHECK(k >= 3);
        CHECK(k <= 6);
    }
}

TEST_CASE("scene dump round trip") {
    const Scene s = generate_scene(SceneConfig{}, 4);
    const auto path = temp_file("scene.bin");
    write_scene_file(path, s);
    const Scene back = read_scene_file(path);
    CHECK(back.index == s.index);
    REQUIRE(back.objects.size() == s.objects.size());
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
        CHECK(back.objects[i].cls == s.objects[i].cls);
        CHECK(back.objects[i].box.x1 == s.objects[i].box.x1);
        CHECK(back.objects[i].box.y2 == s.objects[i].box.y2);
    }
    REQUIRE(back.input.shape == s.input.shape);
    for (std::size_t i = 0; i < s.input.numel(); ++i) {
        CHECK(back.input[i] == static_cast<double>(static_cast<float>(s.input[i])));
    }

    // Truncated payload.
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 3);
    CHECK_THROWS_AS(read_scene_file(path), FormatError);
    {
        std::ofstream bad(path, std::ios::binary | std::ios::trunc);
        bad << "NOTASCENE-----------";
    }
    CHECK_THROWS_AS(read_scene_file(path), FormatError);
    CHECK_THROWS_AS(read_scene_file(temp_file("missing.bin")), FormatError);
}
