#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "assl/data/augment.hpp"
#include "assl/data/image_io.hpp"
#include "assl/data/manifest.hpp"
#include "assl/data/synth.hpp"

using namespace assl;
using namespace assl::data;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("assl_test_" + std::to_string(Rng(std::random_device{}()).next_u64()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Image8 tiny_image(uint8_t fill, int64_t side = 32) {
  Image8 img;
  img.height = side;
  img.width = side;
  img.rgb.assign(static_cast<size_t>(side * side * 3), fill);
  return img;
}

}  // namespace

TEST_CASE("roof classes: four categories, bijective code mapping") {
  CHECK(kNumClasses == 4);
  CHECK(to_string(RoofClass::gable) == "Gable");
  CHECK(*roof_class_from_string("hip") == RoofClass::hip);
  CHECK(*roof_class_from_string("FLAT") == RoofClass::flat);
  CHECK(*roof_class_from_string("Complex") == RoofClass::complex_roof);
  CHECK_FALSE(roof_class_from_string("Dome").has_value());
  for (int c = 0; c < 4; ++c)
    CHECK(static_cast<int>(*roof_class_from_string(
              to_string(roof_class_from_code(c)))) == c);
}

TEST_CASE("scan_image_folder") {
  SUBCASE("empty directory") {
    TempDir dir;
    auto m = scan_image_folder(dir.path.string(), FolderLayout::flat);
    CHECK(m.entries.empty());
    CHECK(m.warnings == 0);
  }
  SUBCASE("missing root is fatal") {
    CHECK_THROWS_AS(scan_image_folder("/nonexistent/dir", FolderLayout::flat),
                    std::runtime_error);
  }
  SUBCASE("category subdirectories assign labels") {
    TempDir dir;
    for (const auto& name : roof_class_names()) {
      fs::create_directories(dir.path / name);
      write_image((dir.path / name / "img.png").string(), tiny_image(100));
    }
    auto m =
        scan_image_folder(dir.path.string(), FolderLayout::category_subdirs);
    REQUIRE(m.entries.size() == 4);
    for (const auto& e : m.entries) {
      REQUIRE(e.label.has_value());
      CHECK(e.rel_path.rfind(to_string(roof_class_from_code(*e.label)), 0) == 0);
    }
  }
  SUBCASE("scene folders become unlabeled tag groups") {
    TempDir dir;
    int64_t expected_files = 0;
    for (int i = 0; i < 30; ++i) {
      char name[16];
      std::snprintf(name, sizeof(name), "scene%02d", i);
      fs::create_directories(dir.path / name);
      write_image((dir.path / name / "a.png").string(), tiny_image(10 + i));
      write_image((dir.path / name / "b.png").string(), tiny_image(40 + i));
    }
    // Independent walker as the oracle.
    for (const auto& e : fs::recursive_directory_iterator(dir.path))
      if (e.is_regular_file() && e.path().extension() == ".png")
        ++expected_files;
    auto m =
        scan_image_folder(dir.path.string(), FolderLayout::category_subdirs);
    CHECK(static_cast<int64_t>(m.entries.size()) == expected_files);
    std::set<std::string> tags;
    for (const auto& e : m.entries) {
      CHECK_FALSE(e.label.has_value());
      tags.insert(e.tag);
    }
    CHECK(tags.size() == 30);
  }
  SUBCASE("undecodable files are skipped with a warning") {
    TempDir dir;
    write_image((dir.path / "ok.png").string(), tiny_image(1));
    std::ofstream bad(dir.path / "broken.png");
    bad << "not a png";
    bad.close();
    auto m = scan_image_folder(dir.path.string(), FolderLayout::flat);
    CHECK(m.entries.size() == 1);
    CHECK(m.warnings == 1);
  }
  SUBCASE("entries come out sorted and stable") {
    TempDir dir;
    write_image((dir.path / "b.png").string(), tiny_image(2));
    write_image((dir.path / "a.png").string(), tiny_image(1));
    auto m = scan_image_folder(dir.path.string(), FolderLayout::flat);
    REQUIRE(m.entries.size() == 2);
    CHECK(m.entries[0].rel_path == "a.png");
    CHECK(m.entries[1].rel_path == "b.png");
  }
}

TEST_CASE("load_manifest") {
  TempDir dir;
  SUBCASE("labels, empty labels, order") {
    std::ofstream out(dir.path / "m.csv", std::ios::binary);
    out << "path,label\n"
        << "a.png,Gable\n"
        << "b.png,\n"
        << "c.png,complex\n";
    out.close();
    auto m = load_manifest((dir.path / "m.csv").string());
    REQUIRE(m.entries.size() == 3);
    CHECK(m.entries[0].rel_path == "a.png");
    CHECK(*m.entries[0].label == 0);
    CHECK_FALSE(m.entries[1].label.has_value());
    CHECK(*m.entries[2].label == 3);
    CHECK(m.warnings == 0);
  }
  SUBCASE("unknown label names the data row") {
    std::ofstream out(dir.path / "m.csv", std::ios::binary);
    out << "path,label\n"
        << "c.png,Dome\n";
    out.close();
    try {
      load_manifest((dir.path / "m.csv").string());
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("row 1") != std::string::npos);
      CHECK(std::string(e.what()).find("Dome") != std::string::npos);
    }
  }
  SUBCASE("duplicate path kept with a warning") {
    std::ofstream out(dir.path / "m.csv", std::ios::binary);
    out << "path,label\n"
        << "a.png,Hip\n"
        << "a.png,Hip\n";
    out.close();
    auto m = load_manifest((dir.path / "m.csv").string());
    CHECK(m.entries.size() == 2);
    CHECK(m.warnings == 1);
  }
  SUBCASE("bad header is fatal") {
    std::ofstream out(dir.path / "m.csv", std::ios::binary);
    out << "file,cls\n";
    out.close();
    CHECK_THROWS_AS(load_manifest((dir.path / "m.csv").string()),
                    std::runtime_error);
  }
  SUBCASE("save and reload round-trips entries in order") {
    DatasetManifest m;
    m.root = dir.path.string();
    m.entries = {{"x.png", 2, ""}, {"y.png", std::nullopt, ""}, {"z.png", 0, ""}};
    save_manifest(m, (dir.path / "rt.csv").string());
    auto back = load_manifest((dir.path / "rt.csv").string());
    REQUIRE(back.entries.size() == 3);
    CHECK(back.entries[0].rel_path == "x.png");
    CHECK(*back.entries[0].label == 2);
    CHECK_FALSE(back.entries[1].label.has_value());
    CHECK(*back.entries[2].label == 0);
  }
}

TEST_CASE("decode_and_normalize") {
  SUBCASE("zero image, identity normalization") {
    ImageRecord rec{"", tiny_image(0), std::nullopt};
    auto out = decode_and_normalize(rec, {0, 0, 0}, {1, 1, 1});
    for (int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0f);
  }
  SUBCASE("saturated image lands exactly at one") {
    ImageRecord rec{"", tiny_image(255), std::nullopt};
    auto out = decode_and_normalize(rec, {0.5f, 0.5f, 0.5f}, {0.5f, 0.5f, 0.5f});
    for (int64_t i = 0; i < out.size(); ++i)
      CHECK(out[i] == doctest::Approx(1.0f).epsilon(1e-7));
  }
  SUBCASE("random image matches the per-pixel formula") {
    Rng rng(3);
    Image8 img = tiny_image(0);
    for (auto& b : img.rgb) b = static_cast<uint8_t>(rng.uniform_int(256));
    ImageRecord rec{"", img, std::nullopt};
    const std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
    const std::array<float, 3> stddev{0.229f, 0.224f, 0.225f};
    auto out = decode_and_normalize(rec, mean, stddev);
    for (int64_t y = 0; y < 32; ++y)
      for (int64_t x = 0; x < 32; ++x)
        for (int64_t c = 0; c < 3; ++c) {
          float expected =
              (static_cast<float>(img.at(y, x, c)) / 255.0f - mean[c]) /
              stddev[c];
          CHECK(out[(c * 32 + y) * 32 + x] ==
                doctest::Approx(expected).epsilon(1e-7));
        }
    SUBCASE("unnormalize recovers pixels/255") {
      auto back = unnormalize(out, mean, stddev);
      for (int64_t y = 0; y < 32; ++y)
        for (int64_t x = 0; x < 32; ++x)
          for (int64_t c = 0; c < 3; ++c)
            CHECK(std::abs(back[(c * 32 + y) * 32 + x] -
                           static_cast<float>(img.at(y, x, c)) / 255.0f) <
                  1e-6);
    }
  }
  SUBCASE("zero std is fatal") {
    ImageRecord rec{"", tiny_image(7), std::nullopt};
    CHECK_THROWS_AS(decode_and_normalize(rec, {0, 0, 0}, {1, 0, 1}),
                    std::invalid_argument);
  }
}

TEST_CASE("random_resized_crop") {
  Rng seed_rng(5);
  Tensor<float> img({3, 48, 48});
  for (int64_t i = 0; i < img.size(); ++i)
    img[i] = static_cast<float>(seed_rng.uniform());

  SUBCASE("degenerate range on a square input is a plain resize") {
    Rng rng(1);
    auto out = random_resized_crop(img, 24, 24, 1.0, 1.0, 1.0, 1.0, rng);
    auto expected = bilinear_resize(img, 24, 24);
    REQUIRE(out.same_shape(expected));
    for (int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == expected[i]);
  }
  SUBCASE("same seed reproduces bytes") {
    Rng a(99), b(99);
    auto out1 = random_resized_crop(img, 16, 16, 0.2, 1.0, 0.75, 4.0 / 3, a);
    auto out2 = random_resized_crop(img, 16, 16, 0.2, 1.0, 0.75, 4.0 / 3, b);
    CHECK(std::memcmp(out1.data(), out2.data(), sizeof(float) * out1.size()) == 0);
  }
  SUBCASE("realized area fraction is uniform on [0.2, 1.0]") {
    // Fixed aspect keeps every sampled box inside a square image, so no
    // rejection or fallback biases the distribution.
    Rng rng(7);
    double mean = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      auto box = sample_crop_box(64, 64, 0.2, 1.0, 1.0, 1.0, rng);
      mean += static_cast<double>(box.h * box.w) / (64.0 * 64.0);
    }
    mean /= n;
    const double sigma = (0.8 / std::sqrt(12.0)) / std::sqrt(double(n));
    CHECK(std::abs(mean - 0.6) < 3 * sigma);
  }
  SUBCASE("invalid scale range") {
    Rng rng(1);
    CHECK_THROWS_AS(random_resized_crop(img, 8, 8, 0.0, 1.0, 1, 1, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(random_resized_crop(img, 8, 8, 0.5, 0.2, 1, 1, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("horizontal_flip") {
  Rng seed_rng(6);
  Tensor<float> img({3, 8, 8});
  for (int64_t i = 0; i < img.size(); ++i)
    img[i] = static_cast<float>(seed_rng.uniform());

  SUBCASE("p=0 is the identity") {
    Rng rng(1);
    auto out = horizontal_flip(img, 0.0, rng);
    CHECK(std::memcmp(out.data(), img.data(), sizeof(float) * img.size()) == 0);
  }
  SUBCASE("p=1 is an involution") {
    Rng r1(2), r2(3);
    auto once = horizontal_flip(img, 1.0, r1);
    auto twice = horizontal_flip(once, 1.0, r2);
    CHECK(std::memcmp(twice.data(), img.data(), sizeof(float) * img.size()) == 0);
    CHECK(std::memcmp(once.data(), img.data(), sizeof(float) * img.size()) != 0);
  }
  SUBCASE("flip rate concentrates at p=0.5") {
    int flips = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      Rng rng(1000 + i);
      auto out = horizontal_flip(img, 0.5, rng);
      if (std::memcmp(out.data(), img.data(), sizeof(float) * img.size()) != 0)
        ++flips;
    }
    const double sigma = std::sqrt(0.25 / n);
    CHECK(std::abs(flips / double(n) - 0.5) < 3 * sigma);
  }
}

TEST_CASE("simclr_view_pair") {
  Rng seed_rng(9);
  Tensor<float> img({3, 40, 40});
  for (int64_t i = 0; i < img.size(); ++i)
    img[i] = static_cast<float>(seed_rng.uniform());

  SUBCASE("identity recipe returns the resized input twice") {
    auto recipe = AugmentRecipe::identity(24);
    auto [v1, v2] = simclr_view_pair(img, recipe, {1, 2, 3});
    auto expected = bilinear_resize(img, 24, 24);
    CHECK(std::memcmp(v1.data(), expected.data(), sizeof(float) * v1.size()) == 0);
    CHECK(std::memcmp(v2.data(), expected.data(), sizeof(float) * v2.size()) == 0);
  }
  SUBCASE("same seed reproduces the pair bit-for-bit") {
    AugmentRecipe recipe;
    recipe.out_size = 24;
    auto [a1, a2] = simclr_view_pair(img, recipe, {5, 6, 7});
    auto [b1, b2] = simclr_view_pair(img, recipe, {5, 6, 7});
    CHECK(std::memcmp(a1.data(), b1.data(), sizeof(float) * a1.size()) == 0);
    CHECK(std::memcmp(a2.data(), b2.data(), sizeof(float) * a2.size()) == 0);
  }
  SUBCASE("views differ almost always under the default recipe") {
    AugmentRecipe recipe;
    recipe.out_size = 16;
    int distinct = 0;
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
      auto [v1, v2] = simclr_view_pair(img, recipe, {11, 0, i});
      if (std::memcmp(v1.data(), v2.data(), sizeof(float) * v1.size()) != 0)
        ++distinct;
    }
    CHECK(distinct > n * 99 / 100);
  }
}

TEST_CASE("synthetic roof samples") {
  SUBCASE("determinism") {
    auto a = synth_roof_sample(RoofClass::hip, 48, 1234);
    auto b = synth_roof_sample(RoofClass::hip, 48, 1234);
    CHECK(a.image.rgb == b.image.rgb);
    auto c = synth_roof_sample(RoofClass::hip, 48, 1235);
    CHECK(a.image.rgb != c.image.rgb);
  }
  SUBCASE("every category decodes at the requested size with label intact") {
    for (int cls = 0; cls < 4; ++cls) {
      for (uint64_t seed : {1ULL, 2ULL, 99ULL}) {
        auto rec = synth_roof_sample(roof_class_from_code(cls), 40, seed);
        CHECK(rec.image.height == 40);
        CHECK(rec.image.width == 40);
        CHECK(static_cast<int>(*rec.label) == cls);
        validate_record(rec);
      }
    }
  }
  SUBCASE("size below 32 is rejected") {
    CHECK_THROWS_AS(synth_roof_sample(RoofClass::flat, 16, 1),
                    std::invalid_argument);
  }
  SUBCASE("flat roofs have less facet variance than gable roofs") {
    // Roof pixels are warm-tinted (r > g), background is green (g > r);
    // compare luminance variance within the roof region.
    auto roof_variance = [](const ImageRecord& rec) {
      double sum = 0, sq = 0;
      int64_t count = 0;
      for (int64_t y = 0; y < rec.image.height; ++y)
        for (int64_t x = 0; x < rec.image.width; ++x) {
          double r = rec.image.at(y, x, 0), g = rec.image.at(y, x, 1);
          if (r > g) {
            double lum = (r + g + rec.image.at(y, x, 2)) / (3 * 255.0);
            sum += lum;
            sq += lum * lum;
            ++count;
          }
        }
      if (count < 16) return 0.0;
      double mean = sum / count;
      return sq / count - mean * mean;
    };
    int wins = 0;
    for (uint64_t seed = 1; seed <= 8; ++seed) {
      auto flat = synth_roof_sample(RoofClass::flat, 64, seed);
      auto gable = synth_roof_sample(RoofClass::gable, 64, seed);
      if (roof_variance(flat) < roof_variance(gable)) ++wins;
    }
    CHECK(wins >= 7);  // facet contrast dominates noise
  }
  SUBCASE("balanced dataset layout") {
    TempDir dir;
    SynthDatasetSpec spec;
    spec.per_class_train = 3;
    spec.per_class_val = 1;
    spec.size = 32;
    CHECK(write_synth_dataset(dir.path.string(), spec) == 16);
    auto train = load_manifest((dir.path / "train.csv").string());
    auto val = load_manifest((dir.path / "val.csv").string());
    CHECK(train.entries.size() == 12);
    CHECK(val.entries.size() == 4);
    std::array<int, 4> counts{};
    for (const auto& e : train.entries) counts[static_cast<size_t>(*e.label)]++;
    for (int c : counts) CHECK(c == 3);
    // Every referenced file decodes.
    for (const auto& e : val.entries)
      CHECK(decode_image((dir.path / e.rel_path).string()).has_value());
  }
}

TEST_CASE("image io round trip") {
  TempDir dir;
  Rng rng(77);
  Image8 img = tiny_image(0, 40);
  for (auto& b : img.rgb) b = static_cast<uint8_t>(rng.uniform_int(256));
  write_image((dir.path / "x.png").string(), img);
  auto back = decode_image((dir.path / "x.png").string());
  REQUIRE(back.has_value());
  CHECK(back->height == 40);
  CHECK(back->width == 40);
  CHECK(back->rgb == img.rgb);  // png is lossless
  CHECK_FALSE(decode_image((dir.path / "missing.png").string()).has_value());
}
