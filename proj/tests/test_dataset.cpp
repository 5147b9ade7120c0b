#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "uqpen/dataset.hpp"
#include "uqpen/errors.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

using namespace uqpen;

namespace {

GeneratorConfig small_config() {
    GeneratorConfig config;
    config.class_count = 4;
    config.confusable_pairs = {{0, 1}};
    config.writers_right = 2;
    config.writers_left = 1;
    config.samples_per_writer_per_class = 2;
    config.noise_sigma = 0.05;
    config.seed = 11;
    return config;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

} // namespace

TEST_CASE("generate is deterministic") {
    const auto a = generate(small_config());
    const auto b = generate(small_config());
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].values == b.samples[i].values);
        CHECK(a.samples[i].label == b.samples[i].label);
        CHECK(a.samples[i].writer_id == b.samples[i].writer_id);
    }
}

TEST_CASE("generated samples are 64x13 and finite") {
    const auto ds = generate(small_config());
    CHECK(ds.samples.size() == 3u * 4u * 2u);
    for (const auto& s : ds.samples) {
        REQUIRE(s.values.rows() == 64);
        REQUIRE(s.values.cols() == 13);
        for (double v : s.values.data()) {
            CHECK(std::isfinite(v));
        }
    }
}

TEST_CASE("noise-free samples of one writer and class are identical") {
    auto config = small_config();
    config.noise_sigma = 0.0;
    config.writers_right = 1;
    config.writers_left = 0;
    config.samples_per_writer_per_class = 2;
    const auto ds = generate(config);
    for (int c = 0; c < config.class_count; ++c) {
        const auto& first = ds.samples[static_cast<std::size_t>(2 * c)];
        const auto& second = ds.samples[static_cast<std::size_t>(2 * c + 1)];
        REQUIRE(first.label == second.label);
        CHECK(first.values == second.values);
    }
}

TEST_CASE("confusable pair differs only by 0.6 on positional channels") {
    auto config = small_config();
    config.noise_sigma = 0.0;
    config.writers_right = 1;
    config.writers_left = 0;
    config.samples_per_writer_per_class = 1;
    const auto ds = generate(config);
    const auto& a = ds.samples[0]; // class 0
    const auto& b = ds.samples[1]; // class 1 = 0.6-scaled class 0
    REQUIRE(a.label == 0);
    REQUIRE(b.label == 1);
    // x/y acceleration channels of both placements scale by 0.6.
    for (std::size_t t = 0; t < 64; ++t) {
        for (std::size_t c : {0u, 1u, 3u, 4u}) {
            CHECK(b.values(t, c) == doctest::Approx(0.6 * a.values(t, c)).epsilon(1e-12));
        }
        // Gravity axes, gyro, magnetometer, and force are identical.
        for (std::size_t c : {2u, 5u, 6u, 7u, 8u, 9u, 10u, 11u, 12u}) {
            CHECK(b.values(t, c) == doctest::Approx(a.values(t, c)).epsilon(1e-12));
        }
    }
}

TEST_CASE("left hand shifts c0 and c6..c11 but keeps force") {
    // Same writer-style stream for both hands: writer 0 in each dataset.
    auto base = small_config();
    base.noise_sigma = 0.0;
    base.samples_per_writer_per_class = 1;
    base.class_count = 4;
    base.confusable_pairs.clear();

    auto right_cfg = base;
    right_cfg.writers_right = 1;
    right_cfg.writers_left = 0;
    auto left_cfg = base;
    left_cfg.writers_right = 0;
    left_cfg.writers_left = 1;

    const auto right = generate(right_cfg);
    const auto left = generate(left_cfg);
    REQUIRE(right.samples.size() == left.samples.size());
    for (std::size_t i = 0; i < right.samples.size(); ++i) {
        const auto& r = right.samples[i].values;
        const auto& l = left.samples[i].values;
        for (std::size_t c : {0u, 6u, 7u, 8u, 9u, 10u, 11u}) {
            double max_diff = 0.0;
            for (std::size_t t = 0; t < 64; ++t) {
                max_diff = std::max(max_diff, std::abs(r(t, c) - l(t, c)));
            }
            CHECK(max_diff > 1e-6);
        }
        for (std::size_t t = 0; t < 64; ++t) {
            CHECK(r(t, 12) == l(t, 12));
        }
    }
}

TEST_CASE("csv round trip on 64-step data is exact") {
    const auto ds = generate(small_config());
    const auto path = temp_path("uqpen_ds_roundtrip.csv");
    save_csv(ds, path);
    const auto loaded = load_csv(path);
    REQUIRE(loaded.samples.size() == ds.samples.size());
    CHECK(loaded.class_count == ds.class_count);
    CHECK(loaded.class_names == ds.class_names);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        CHECK(loaded.samples[i].values == ds.samples[i].values);
        CHECK(loaded.samples[i].label == ds.samples[i].label);
        CHECK(loaded.samples[i].writer_id == ds.samples[i].writer_id);
        CHECK(loaded.samples[i].hand == ds.samples[i].hand);
        CHECK(loaded.samples[i].sample_id == ds.samples[i].sample_id);
    }
    // Byte-exact second save.
    const auto path2 = temp_path("uqpen_ds_roundtrip2.csv");
    save_csv(loaded, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("csv loader resamples short samples and reports bad rows") {
    const auto path = temp_path("uqpen_ds_short.csv");
    {
        std::ofstream out(path, std::ios::binary);
        out << "sample_id,writer_id,hand,label,step";
        for (int c = 0; c < 13; ++c) out << ",c" << c;
        out << "\n";
        for (int t = 0; t < 32; ++t) {
            out << "0,0,R,a," << t;
            for (int c = 0; c < 13; ++c) out << "," << (t * 0.5);
            out << "\n";
        }
        for (int t = 0; t < 64; ++t) {
            out << "1,0,R,b," << t;
            for (int c = 0; c < 13; ++c) out << ",1.5";
            out << "\n";
        }
    }
    const auto ds = load_csv(path);
    REQUIRE(ds.samples.size() == 2);
    CHECK(ds.samples[0].values.rows() == 64);
    // Endpoints preserved by resampling.
    CHECK(ds.samples[0].values(0, 0) == 0.0);
    CHECK(ds.samples[0].values(63, 0) == 31 * 0.5);
    std::filesystem::remove(path);

    SUBCASE("missing column names the line") {
        const auto bad = temp_path("uqpen_ds_badcol.csv");
        {
            std::ofstream out(bad, std::ios::binary);
            out << "sample_id,writer_id,hand,label,step";
            for (int c = 0; c < 13; ++c) out << ",c" << c;
            out << "\n";
            out << "0,0,R,a,0";
            for (int c = 0; c < 12; ++c) out << ",0.0"; // one channel short
            out << "\n";
        }
        CHECK_THROWS_WITH_AS(load_csv(bad), doctest::Contains("line 2"), ParseError);
        std::filesystem::remove(bad);
    }
}

TEST_CASE("csv loader rejects non-contiguous steps, bad hand, non-finite") {
    const auto write_rows = [](const std::filesystem::path& p,
                               const std::vector<std::string>& rows) {
        std::ofstream out(p, std::ios::binary);
        out << "sample_id,writer_id,hand,label,step";
        for (int c = 0; c < 13; ++c) out << ",c" << c;
        out << "\n";
        for (const auto& r : rows) out << r << "\n";
    };
    std::string channels;
    for (int c = 0; c < 13; ++c) channels += ",0.25";

    const auto p = temp_path("uqpen_ds_bad.csv");
    write_rows(p, {"0,0,R,a,0" + channels, "0,0,R,a,2" + channels});
    CHECK_THROWS_WITH_AS(load_csv(p), doctest::Contains("non-contiguous"), ParseError);

    write_rows(p, {"0,0,X,a,0" + channels});
    CHECK_THROWS_WITH_AS(load_csv(p), doctest::Contains("hand"), ParseError);

    write_rows(p, {"0,0,R,a,0,nan" + channels.substr(5)});
    CHECK_THROWS_AS(load_csv(p), ParseError);
    std::filesystem::remove(p);
}

TEST_CASE("writer-dependent split partitions evenly") {
    GeneratorConfig config;
    config.class_count = 5;
    config.confusable_pairs.clear();
    config.writers_right = 10;
    config.writers_left = 0;
    config.samples_per_writer_per_class = 2;
    config.seed = 3;
    const auto ds = generate(config); // 100 samples, 20 per class
    const auto fs = split(ds, SplitMode::WriterDependent, 5, 17);
    REQUIRE(fs.folds.size() == 5);
    std::set<std::size_t> all_test;
    for (const auto& fold : fs.folds) {
        CHECK(fold.test.size() == 20);
        CHECK(fold.train.size() == 80);
        for (auto i : fold.test) {
            CHECK(all_test.insert(i).second); // pairwise disjoint
        }
    }
    CHECK(all_test.size() == ds.samples.size());

    const auto fs2 = split(ds, SplitMode::WriterDependent, 5, 17);
    for (std::size_t f = 0; f < 5; ++f) {
        CHECK(fs.folds[f].train == fs2.folds[f].train);
        CHECK(fs.folds[f].test == fs2.folds[f].test);
    }
}

TEST_CASE("writer-independent split keeps writers disjoint") {
    GeneratorConfig config;
    config.class_count = 3;
    config.confusable_pairs.clear();
    config.writers_right = 10;
    config.writers_left = 0;
    config.samples_per_writer_per_class = 1;
    config.seed = 4;
    const auto ds = generate(config);
    const auto fs = split(ds, SplitMode::WriterIndependent, 5, 21);
    for (const auto& fold : fs.folds) {
        std::set<int> train_writers, test_writers;
        for (auto i : fold.train) train_writers.insert(ds.samples[i].writer_id);
        for (auto i : fold.test) test_writers.insert(ds.samples[i].writer_id);
        for (int w : test_writers) {
            CHECK(train_writers.count(w) == 0);
        }
    }
}

TEST_CASE("writer-independent split with exactly fold_count writers") {
    GeneratorConfig config;
    config.class_count = 2;
    config.confusable_pairs.clear();
    config.writers_right = 5;
    config.writers_left = 0;
    config.samples_per_writer_per_class = 2;
    const auto ds = generate(config);
    const auto fs = split(ds, SplitMode::WriterIndependent, 5, 8);
    for (const auto& fold : fs.folds) {
        std::set<int> test_writers;
        for (auto i : fold.test) test_writers.insert(ds.samples[i].writer_id);
        CHECK(test_writers.size() == 1); // one writer per fold
        CHECK(fold.test.size() == 4);
        CHECK(fold.train.size() == 16);
    }
}

TEST_CASE("writer-independent split requires enough writers") {
    GeneratorConfig config;
    config.class_count = 2;
    config.confusable_pairs.clear();
    config.writers_right = 3;
    config.writers_left = 0;
    config.samples_per_writer_per_class = 1;
    const auto ds = generate(config);
    CHECK_THROWS_AS(split(ds, SplitMode::WriterIndependent, 5, 1), std::invalid_argument);
}

TEST_CASE("split manifest round trips") {
    const auto ds = generate(small_config());
    const auto fs = split(ds, SplitMode::WriterDependent, 3, 9);
    const auto path = temp_path("uqpen_split.json");
    save_split(fs, path);
    const auto loaded = load_split(path);
    CHECK(loaded.mode == fs.mode);
    REQUIRE(loaded.folds.size() == fs.folds.size());
    for (std::size_t f = 0; f < fs.folds.size(); ++f) {
        CHECK(loaded.folds[f].train == fs.folds[f].train);
        CHECK(loaded.folds[f].test == fs.folds[f].test);
    }
    // Bit-exact file round trip.
    const auto path2 = temp_path("uqpen_split2.json");
    save_split(loaded, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("filter_by_hand counts and warning contract") {
    const auto ds = generate(small_config()); // 2 right writers, 1 left
    const auto right = filter_by_hand(ds, Hand::Right);
    const auto left = filter_by_hand(ds, Hand::Left);
    CHECK(right.samples.size() == 2u * 4u * 2u);
    CHECK(left.samples.size() == 1u * 4u * 2u);
    CHECK(right.class_count == ds.class_count);

    // Filtering an already right-only dataset is the identity.
    const auto again = filter_by_hand(right, Hand::Right);
    REQUIRE(again.samples.size() == right.samples.size());
    for (std::size_t i = 0; i < right.samples.size(); ++i) {
        CHECK(again.samples[i].values == right.samples[i].values);
    }

    // A filter that empties every class reports them.
    std::vector<int> empty;
    const auto none = filter_by_hand(right, Hand::Left, &empty);
    CHECK(none.samples.empty());
    CHECK(none.class_count == ds.class_count);
    CHECK(empty.size() == static_cast<std::size_t>(ds.class_count));
}

TEST_CASE("generate rejects bad configs") {
    GeneratorConfig config;
    config.class_count = 1;
    CHECK_THROWS_AS(generate(config), std::invalid_argument);
    config.class_count = 4;
    config.confusable_pairs = {{0, 0}};
    CHECK_THROWS_AS(generate(config), std::invalid_argument);
    config.confusable_pairs = {{0, 9}};
    CHECK_THROWS_AS(generate(config), std::invalid_argument);
}
