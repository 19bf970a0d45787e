#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "munet/data.hpp"

using namespace munet;
namespace fs = std::filesystem;

namespace {

Mosaic random_image(int w, int h, std::uint64_t seed) {
  Mosaic m(w, h);
  Rng rng(seed, 1);
  for (auto& v : m.px) v = static_cast<float>(rng.uniform());
  return m;
}

LabelMap random_labels(int w, int h, int k, std::uint64_t seed, double void_frac = 0.3) {
  LabelMap lab(w, h);
  Rng rng(seed, 2);
  for (auto& v : lab.lab)
    v = rng.uniform() < void_frac ? kUnlabeled
                                  : static_cast<std::uint8_t>(rng.uniform_int(k));
  return lab;
}

}  // namespace

TEST_CASE("axis origins: stride grid plus zero plus flush, deduplicated") {
  REQUIRE(patch_axis_origins(512, 256, 128, 0) == std::vector<int>{0, 128, 256});
  REQUIRE(patch_axis_origins(256, 256, 256, 0) == std::vector<int>{0});
  REQUIRE(patch_axis_origins(300, 256, 256, 0) == std::vector<int>{0, 44});

  // non-multiple extent: 43 grid origins plus the flush one
  auto xs = patch_axis_origins(3000, 256, 64, 0);
  REQUIRE(xs.size() == 44);
  REQUIRE(xs.front() == 0);
  REQUIRE(xs.back() == 3000 - 256);
  REQUIRE(xs[42] == 2688);
  for (std::size_t i = 1; i < xs.size(); ++i) REQUIRE(xs[i] > xs[i - 1]);

  // jitter shifts the grid but keeps 0 and the flush origin
  REQUIRE(patch_axis_origins(512, 256, 128, 32) ==
          std::vector<int>{0, 32, 160, 256});

  REQUIRE_THROWS_AS(patch_axis_origins(100, 256, 64, 0), DataError);
}

TEST_CASE("a 512 image with window 256 and stride 128 yields nine patches") {
  Mosaic img = random_image(512, 512, 3);
  img.resolution_um = 2.0f;
  LabelMap lab = random_labels(512, 512, 6, 3);
  PatchSpec spec;
  spec.window = 256;
  spec.stride = 128;
  auto patches = extract_patches(img, lab, spec, 0);
  REQUIRE(patches.size() == 9);
  int idx = 0;
  for (int y0 : {0, 128, 256})
    for (int x0 : {0, 128, 256}) {
      REQUIRE(patches[idx].x0 == x0);
      REQUIRE(patches[idx].y0 == y0);
      REQUIRE(patches[idx].image.width == 256);
      REQUIRE(patches[idx].image.resolution_um == 2.0f);
      // spot-check the crop content
      REQUIRE(patches[idx].image.at(10, 20) == img.at(x0 + 10, y0 + 20));
      REQUIRE(patches[idx].labels.at(255, 255) == lab.at(x0 + 255, y0 + 255));
      ++idx;
    }
}

TEST_CASE("patch spec validation") {
  PatchSpec spec;
  spec.window = 0;
  REQUIRE_THROWS_AS(spec.validate(), ConfigError);
  spec.window = 256;
  spec.stride = 0;
  REQUIRE_THROWS_AS(spec.validate(), ConfigError);
  spec.stride = 64;
  spec.jitter = 65;
  REQUIRE_THROWS_AS(spec.validate(), ConfigError);
  spec.jitter = 64;
  spec.validate();

  Mosaic img = random_image(256, 256, 1);
  LabelMap lab = random_labels(256, 256, 6, 1);
  REQUIRE_THROWS_AS(extract_patches(img, lab, spec, 65), ConfigError);
  LabelMap off(255, 256);
  REQUIRE_THROWS_AS(extract_patches(img, off, spec, 0), DataError);
}

TEST_CASE("the default augment draw is a bitwise identity") {
  Mosaic img = random_image(33, 17, 5);
  LabelMap lab = random_labels(33, 17, 6, 5);
  Mosaic img2 = img;
  LabelMap lab2 = lab;
  apply_augment(img2, lab2, AugmentDraw{});
  REQUIRE(img2.px == img.px);
  REQUIRE(lab2.lab == lab.lab);
}

TEST_CASE("quarter rotation is exact and four of them restore the input") {
  Mosaic img(3, 2);
  // row 0: a b c / row 1: d e f
  img.px = {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f};
  LabelMap lab(3, 2);
  lab.lab = {0, 1, 2, 3, 4, 5};

  Mosaic r_img = img;
  LabelMap r_lab = lab;
  AugmentDraw quarter;
  quarter.rot_quarter = 1;
  apply_augment(r_img, r_lab, quarter);
  REQUIRE(r_img.width == 2);
  REQUIRE(r_img.height == 3);
  // CCW: the right column (c, f) becomes the top row
  REQUIRE(r_img.at(0, 0) == 0.3f);
  REQUIRE(r_img.at(1, 0) == 0.6f);
  REQUIRE(r_img.at(0, 2) == 0.1f);
  REQUIRE(r_lab.at(0, 0) == 2);
  REQUIRE(r_lab.at(1, 2) == 3);

  AugmentDraw full;
  full.rot_quarter = 4;  // only reachable by composing, but exercises the loop
  Mosaic f_img = img;
  LabelMap f_lab = lab;
  apply_augment(f_img, f_lab, full);
  REQUIRE(f_img.px == img.px);
  REQUIRE(f_lab.lab == lab.lab);
}

TEST_CASE("flips are involutive and compose with rotation deterministically") {
  Mosaic img = random_image(8, 6, 7);
  LabelMap lab = random_labels(8, 6, 6, 7);
  AugmentDraw d;
  d.flip_horizontal = true;
  d.flip_vertical = true;
  Mosaic once = img;
  LabelMap once_lab = lab;
  apply_augment(once, once_lab, d);
  REQUIRE(once.at(0, 0) == img.at(7, 5));
  Mosaic twice = once;
  LabelMap twice_lab = once_lab;
  apply_augment(twice, twice_lab, d);
  REQUIRE(twice.px == img.px);
  REQUIRE(twice_lab.lab == lab.lab);
}

TEST_CASE("shears only ever grow the unlabeled set") {
  Rng rng(31, 4);
  AugmentSpec spec;
  spec.rot90 = false;
  spec.flip_h = false;
  spec.flip_v = false;
  spec.max_intensity_shift = 0.0;
  spec.max_shear = 0.08;
  for (int trial = 0; trial < 50; ++trial) {
    Mosaic img = random_image(24, 24, 100 + trial);
    LabelMap lab = random_labels(24, 24, 6, 100 + trial, 0.2);
    std::size_t before = count_unlabeled(lab);
    AugmentDraw d = draw_augment(spec, rng);
    apply_augment(img, lab, d);
    REQUIRE(count_unlabeled(lab) >= before);
    for (float v : img.px) {
      REQUIRE(v >= 0.0f);
      REQUIRE(v <= 1.0f);
    }
  }
}

TEST_CASE("a pure shear keeps row content when the offset rounds to zero") {
  Mosaic img = random_image(5, 5, 9);
  LabelMap lab = random_labels(5, 5, 6, 9, 0.0);
  AugmentDraw d;
  d.shear_axis = 1;
  d.shear_slope = 0.04;  // max |offset| = 0.08 < 0.5, every row rounds to 0
  Mosaic out = img;
  LabelMap out_lab = lab;
  apply_augment(out, out_lab, d);
  REQUIRE(out_lab.lab == lab.lab);       // labels resample at integer offsets
  REQUIRE(out.px != img.px);             // image interpolates fractionally
  REQUIRE(count_unlabeled(out_lab) == 0);
}

TEST_CASE("a strong column shear voids the pixels shifted in from outside") {
  LabelMap lab(9, 9, 2);
  Mosaic img = random_image(9, 9, 11);
  AugmentDraw d;
  d.shear_axis = 2;
  d.shear_slope = 0.5;  // columns at the edges shift by two rows
  apply_augment(img, lab, d);
  REQUIRE(count_unlabeled(lab) > 0);
  // column 0: offset = 0.5 * (0 - 4) = -2, so rows 7, 8 pull from outside
  REQUIRE(lab.at(0, 8) == kUnlabeled);
  REQUIRE(lab.at(0, 0) == 2);
  // center column: offset 0, untouched
  for (int y = 0; y < 9; ++y) REQUIRE(lab.at(4, y) == 2);
}

TEST_CASE("intensity shift is additive and clipped to the unit range") {
  Mosaic img(2, 1);
  img.px = {0.98f, 0.5f};
  LabelMap lab(2, 1, 0);
  AugmentDraw d;
  d.intensity_shift = 0.05;
  apply_augment(img, lab, d);
  REQUIRE(img.px[0] == 1.0f);  // clipped at the top
  REQUIRE(img.px[1] == Catch::Approx(0.55).margin(1e-6));

  d.intensity_shift = -0.6;
  apply_augment(img, lab, d);
  REQUIRE(img.px[0] == Catch::Approx(0.4).margin(1e-6));
  REQUIRE(img.px[1] == 0.0f);  // clipped at the bottom
}

TEST_CASE("draw_augment respects the spec switches and is seed-deterministic") {
  AugmentSpec all_off;
  all_off.rot90 = false;
  all_off.flip_h = false;
  all_off.flip_v = false;
  all_off.max_shear = 0.0;
  all_off.max_intensity_shift = 0.0;
  Rng rng(1, 1);
  for (int i = 0; i < 10; ++i) {
    AugmentDraw d = draw_augment(all_off, rng);
    REQUIRE(d.rot_quarter == 0);
    REQUIRE_FALSE(d.flip_horizontal);
    REQUIRE_FALSE(d.flip_vertical);
    REQUIRE(d.shear_axis == 0);
    REQUIRE(d.intensity_shift == 0.0);
  }

  AugmentSpec spec;
  Rng a(42, 0), b(42, 0);
  for (int i = 0; i < 20; ++i) {
    AugmentDraw da = draw_augment(spec, a);
    AugmentDraw db = draw_augment(spec, b);
    REQUIRE(da.rot_quarter == db.rot_quarter);
    REQUIRE(da.flip_horizontal == db.flip_horizontal);
    REQUIRE(da.flip_vertical == db.flip_vertical);
    REQUIRE(da.shear_axis == db.shear_axis);
    REQUIRE(da.shear_slope == db.shear_slope);
    REQUIRE(da.intensity_shift == db.intensity_shift);
    REQUIRE(std::abs(da.shear_slope) <= spec.max_shear);
    REQUIRE(std::abs(da.intensity_shift) <= spec.max_intensity_shift);
  }

  AugmentSpec bad;
  bad.max_shear = 1.0;
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("class pixel counting skips the void code and rejects strays") {
  LabelMap lab(4, 1);
  lab.lab = {0, 2, kUnlabeled, 2};
  std::vector<std::uint64_t> counts;
  count_class_pixels(lab, 3, counts);
  REQUIRE(counts == std::vector<std::uint64_t>{1, 0, 2});

  // accumulates across calls when the vector is already sized
  count_class_pixels(lab, 3, counts);
  REQUIRE(counts == std::vector<std::uint64_t>{2, 0, 4});

  LabelMap stray(1, 1, 7);
  std::vector<std::uint64_t> c2;
  REQUIRE_THROWS_AS(count_class_pixels(stray, 3, c2), DataError);
}

TEST_CASE("manifests round-trip and resolve relative paths") {
  auto dir = fs::temp_directory_path() / "munet_data_test";
  fs::create_directories(dir / "sub");
  auto manifest = (dir / "manifest.txt").string();
  {
    std::ofstream out(manifest);
    out << "# dataset listing\r\n";
    out << "\n";
    out << "sub/img_0.png\tsub/lab_0.png\n";
    out << "/abs/img_1.png\t/abs/lab_1.png\r\n";
  }
  auto entries = read_manifest(manifest);
  REQUIRE(entries.size() == 2);
  REQUIRE(entries[0].image == (dir / "sub/img_0.png").string());
  REQUIRE(entries[0].labels == (dir / "sub/lab_0.png").string());
  REQUIRE(entries[1].image == "/abs/img_1.png");

  auto copy = (dir / "copy.txt").string();
  write_manifest(copy, entries);
  auto again = read_manifest(copy);
  REQUIRE(again.size() == 2);
  REQUIRE(again[0].image == entries[0].image);
  REQUIRE(again[1].labels == entries[1].labels);

  auto bad = (dir / "bad.txt").string();
  {
    std::ofstream out(bad);
    out << "no-tab-here\n";
  }
  REQUIRE_THROWS_AS(read_manifest(bad), DataError);

  auto empty = (dir / "empty.txt").string();
  {
    std::ofstream out(empty);
    out << "# only a comment\n";
  }
  REQUIRE_THROWS_AS(read_manifest(empty), DataError);
  REQUIRE_THROWS_AS(read_manifest((dir / "missing.txt").string()), DataError);
}
