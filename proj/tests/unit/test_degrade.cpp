#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "funcnet/degrade.hpp"
#include "funcnet/errors.hpp"
#include "funcnet/image.hpp"

namespace funcnet {
namespace {

const std::filesystem::path kCorpus = std::filesystem::path(FUNCNET_DATA_DIR) / "corpus";

double psnr_oracle(const ImageBuffer& a, const ImageBuffer& b) {
  double se = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = static_cast<double>(a.values[i]) - static_cast<double>(b.values[i]);
    se += d * d;
  }
  return 10.0 * std::log10(1.0 / (se / static_cast<double>(a.values.size())));
}

ImageBuffer camera_gray() { return to_gray(read_pnm(kCorpus / "camera.ppm")); }

TEST(Awgn, ZeroSigmaIsBitwiseCopy) {
  Rng rng(1);
  ImageBuffer img(8, 8, 3, 0.3f);
  img.at(1, 2, 3) = 0.9f;
  EXPECT_EQ(add_awgn(img, 0.0, rng), img);
}

TEST(Awgn, SampleStatisticsAtSigma35) {
  Rng rng(7);
  ImageBuffer img(1000, 1000, 1, 0.5f);
  const ImageBuffer out = add_awgn(img, 35.0, rng);
  const std::size_t n = img.values.size();
  double sum = 0.0, sq = 0.0, cross = 0.0;
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = static_cast<double>(out.values[i]) - static_cast<double>(img.values[i]);
    sum += d[i];
    sq += d[i] * d[i];
  }
  const double mean = sum / static_cast<double>(n);
  const double std_dev = std::sqrt(sq / static_cast<double>(n) - mean * mean);
  EXPECT_NEAR(std_dev * 255.0, 35.0, 35.0 * 0.005);
  EXPECT_LT(std::abs(mean), 3.0 * std_dev / std::sqrt(static_cast<double>(n)));
  for (std::size_t i = 0; i + 1 < n; i += 1) cross += (d[i] - mean) * (d[i + 1] - mean);
  const double corr = cross / static_cast<double>(n - 1) / (std_dev * std_dev);
  EXPECT_LT(std::abs(corr), 0.01);
}

TEST(Awgn, NotClamped) {
  Rng rng(3);
  ImageBuffer img(64, 64, 1, 0.0f);
  const ImageBuffer out = add_awgn(img, 50.0, rng);
  EXPECT_LT(*std::min_element(out.values.begin(), out.values.end()), 0.0f);
}

TEST(Jpeg, QuantTableScaling) {
  EXPECT_EQ(scaled_quant_table(50.0), standard_luma_table());
  // S = 500 at q = 10 and S = 40 at q = 80.
  EXPECT_EQ(scaled_quant_table(10.0)[0], 80);
  EXPECT_EQ(scaled_quant_table(80.0)[0], 6);
  EXPECT_EQ(scaled_quant_table(10.0)[63], 255);  // floor((99*500+50)/100) = 495, clamped
  for (int v : scaled_quant_table(80.0)) EXPECT_GE(v, 1);
}

TEST(Jpeg, QualityOutsideRangeThrows) {
  ImageBuffer img(8, 8, 1);
  EXPECT_THROW(jpeg_degrade(img, 9.0), DomainError);
  EXPECT_THROW(jpeg_degrade(img, 81.0), DomainError);
  EXPECT_THROW(jpeg_degrade(ImageBuffer(8, 8, 3), 50.0), DataError);
}

TEST(Jpeg, ZeroImageStaysZero) {
  ImageBuffer img(16, 24, 1, 0.0f);
  const ImageBuffer out = jpeg_degrade(img, 30.0);
  for (float v : out.values) EXPECT_EQ(v, 0.0f);
}

TEST(Jpeg, ConstantBlockKeepsQuantizedDc) {
  // A flat block has only a DC coefficient, 8 * (255 v - 128) in the orthonormal DCT.
  const float v = 0.7f;
  ImageBuffer img(8, 8, 1, v);
  for (double q : {10.0, 50.0, 80.0}) {
    const double step = scaled_quant_table(q)[0];
    const double dc = 8.0 * (255.0 * static_cast<double>(v) - 128.0);
    const double expected = (std::round(dc / step) * step / 8.0 + 128.0) / 255.0;
    const ImageBuffer out = jpeg_degrade(img, q);
    for (float o : out.values) EXPECT_NEAR(o, expected, 1e-6) << "q=" << q;
  }
}

TEST(Jpeg, ErrorDecreasesWithQuality) {
  const ImageBuffer img = camera_gray();
  const double p10 = psnr_oracle(jpeg_degrade(img, 10.0), img);
  const double p40 = psnr_oracle(jpeg_degrade(img, 40.0), img);
  const double p80 = psnr_oracle(jpeg_degrade(img, 80.0), img);
  EXPECT_GT(p80, p40);
  EXPECT_GT(p40, p10);
}

TEST(Jpeg, HighQualityPerturbsLessOnEveryImage) {
  for (const auto& img : load_split(read_manifest(kCorpus / "manifest.csv"), "val", 1)) {
    EXPECT_GT(psnr_oracle(jpeg_degrade(img, 80.0), img), psnr_oracle(jpeg_degrade(img, 10.0), img));
  }
}

TEST(Jpeg, NearlyIdempotent) {
  const ImageBuffer img = camera_gray();
  for (double q : {10.0, 40.0, 80.0}) {
    const ImageBuffer once = jpeg_degrade(img, q);
    const ImageBuffer twice = jpeg_degrade(once, q);
    EXPECT_LT(std::abs(psnr_oracle(twice, img) - psnr_oracle(once, img)), 0.5) << "q=" << q;
  }
}

TEST(Jpeg, NonMultipleOfEightSizeIsCropped) {
  ImageBuffer img(13, 21, 1);
  for (std::size_t i = 0; i < img.values.size(); ++i) img.values[i] = static_cast<float>(i % 17) / 17.0f;
  const ImageBuffer out = jpeg_degrade(img, 60.0);
  EXPECT_TRUE(out.same_shape(img));
  for (float v : out.values) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(SampleParameter, DenoiseUniformOnHalfOpenRange) {
  Rng rng(11);
  const int n = 100000;
  double sum = 0.0, lo = 1e9, hi = -1e9;
  for (int i = 0; i < n; ++i) {
    const double s = sample_parameter(Task::Denoise, rng);
    sum += s;
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  EXPECT_NEAR(sum / n, 37.5, 0.375);
  EXPECT_GT(lo, 0.0);
  EXPECT_LE(hi, 75.0);
}

TEST(SampleParameter, DeblockOnStrideTwoGrid) {
  Rng rng(12);
  std::set<int> seen;
  for (int i = 0; i < 20000; ++i) {
    const double q = sample_parameter(Task::Deblock, rng);
    ASSERT_GE(q, 10.0);
    ASSERT_LE(q, 80.0);
    ASSERT_EQ(std::fmod(q, 2.0), 0.0);
    seen.insert(static_cast<int>(q));
  }
  EXPECT_EQ(seen.size(), 36u);
}

TEST(DegradationSpecTest, Validation) {
  EXPECT_NO_THROW((DegradationSpec{Task::Denoise, 75.0}.validate()));
  EXPECT_THROW((DegradationSpec{Task::Denoise, 0.0}.validate()), DomainError);
  EXPECT_THROW((DegradationSpec{Task::Denoise, 75.5}.validate()), DomainError);
  EXPECT_NO_THROW((DegradationSpec{Task::Deblock, 10.0}.validate()));
  EXPECT_THROW((DegradationSpec{Task::Deblock, 8.0}.validate()), DomainError);
  EXPECT_EQ(task_from_string("deblock"), Task::Deblock);
  EXPECT_THROW(static_cast<void>(task_from_string("sr")), ConfigError);
}

std::vector<ImageBuffer> synthetic_images() {
  std::vector<ImageBuffer> images;
  images.emplace_back(120, 100, 3, 0.2f);
  images.emplace_back(96, 200, 3, 0.8f);
  for (std::size_t i = 0; i < images[0].values.size(); ++i) images[0].values[i] = static_cast<float>(i % 251) / 251.0f;
  return images;
}

TEST(Patches, ShapeAndAlignment) {
  const auto images = synthetic_images();
  Rng rng(5);
  const PatchBatch b = sample_patches(images, 96, 32, true, rng);
  EXPECT_EQ(b.clean.shape(), (Shape{32, 3, 96, 96}));
  ASSERT_EQ(b.origins.size(), 32u);
  for (const auto& o : b.origins) {
    EXPECT_EQ(o.y % 8, 0u);
    EXPECT_EQ(o.x % 8, 0u);
    EXPECT_LE(o.y + 96, images[o.image].height);
    EXPECT_LE(o.x + 96, images[o.image].width);
  }
  // Content matches the source crop.
  const auto& o = b.origins[3];
  EXPECT_EQ(b.clean.at(3, 2, 5, 7), images[o.image].at(2, o.y + 5, o.x + 7));
}

TEST(Patches, DeterministicForSeed) {
  const auto images = synthetic_images();
  Rng r1(9), r2(9);
  EXPECT_EQ(sample_patches(images, 32, 8, false, r1).clean, sample_patches(images, 32, 8, false, r2).clean);
}

TEST(Patches, Errors) {
  const auto images = synthetic_images();
  Rng rng(1);
  EXPECT_THROW(sample_patches(images, 128, 4, false, rng), DataError);
  EXPECT_THROW(sample_origin(images, 30, true, rng), ConfigError);
  EXPECT_THROW(sample_patches({}, 32, 4, false, rng), DataError);
}

TensorF ramp(std::size_t h, std::size_t w) {
  TensorF t(Shape{1, 1, h, w});
  std::iota(t.data().begin(), t.data().end(), 0.0f);
  return t;
}

TEST(Augment, ExplicitSmallCases) {
  // [[0,1,2],[3,4,5]]
  const TensorF x = ramp(2, 3);
  EXPECT_EQ(dihedral(x, 1).data()[0], 2.0f);  // counter-clockwise: top-right moves to top-left
  EXPECT_EQ(dihedral(x, 1).shape(), (Shape{1, 1, 3, 2}));
  const std::vector<float> rot90 = {2, 5, 1, 4, 0, 3};
  EXPECT_TRUE(std::equal(rot90.begin(), rot90.end(), dihedral(x, 1).data().begin()));
  const std::vector<float> hflip = {2, 1, 0, 5, 4, 3};
  EXPECT_TRUE(std::equal(hflip.begin(), hflip.end(), dihedral(x, 4).data().begin()));
  const std::vector<float> vflip = {3, 4, 5, 0, 1, 2};
  EXPECT_TRUE(std::equal(vflip.begin(), vflip.end(), dihedral(x, 5).data().begin()));
  const std::vector<float> transpose = {0, 3, 1, 4, 2, 5};
  EXPECT_TRUE(std::equal(transpose.begin(), transpose.end(), dihedral(x, 6).data().begin()));
}

TEST(Augment, GroupLaws) {
  const TensorF x = ramp(5, 5);
  EXPECT_EQ(augment(x, 0), x);
  EXPECT_EQ(augment(augment(x, 4), 4), x);
  EXPECT_EQ(augment(augment(x, 5), 5), x);
  TensorF r = x;
  for (int i = 0; i < 4; ++i) r = augment(r, 1);
  EXPECT_EQ(r, x);
  std::set<std::vector<float>> distinct;
  for (int c = 0; c < 8; ++c) {
    const TensorF y = augment(x, c);
    EXPECT_EQ(augment(y, dihedral_inverse(c)), x) << "code " << c;
    distinct.insert(std::vector<float>(y.data().begin(), y.data().end()));
  }
  EXPECT_EQ(distinct.size(), 8u);
}

TEST(Augment, Errors) {
  EXPECT_THROW(augment(ramp(4, 6), 1), ShapeError);
  EXPECT_NO_THROW(augment(ramp(4, 6), 4));
  EXPECT_THROW(augment(ramp(4, 4), 8), ConfigError);
}

TEST(Augment, FlipCommutesWithNoiseStatistics) {
  // Flipping a noisy image and adding fresh noise to a flipped image give the same residual statistics.
  ImageBuffer img(256, 256, 1, 0.5f);
  Rng r1(21), r2(22);
  const TensorF a = augment(add_awgn(img, 25.0, r1).to_tensor(), 4);
  const TensorF b = add_awgn(ImageBuffer::from_tensor(augment(img.to_tensor(), 4)), 25.0, r2).to_tensor();
  auto residual_std = [&](const TensorF& t) {
    double sq = 0.0;
    for (float v : t.data()) sq += (v - 0.5) * (v - 0.5);
    return std::sqrt(sq / static_cast<double>(t.size())) * 255.0;
  };
  EXPECT_NEAR(residual_std(a), residual_std(b), 0.5);
}

TEST(Image, PnmRoundTripAndManifest) {
  const auto dir = std::filesystem::temp_directory_path() / "funcnet_test_image";
  std::filesystem::create_directories(dir);
  ImageBuffer img(5, 7, 3);
  for (std::size_t i = 0; i < img.values.size(); ++i) img.values[i] = static_cast<float>(i * 7 % 256) / 255.0f;
  write_pnm(dir / "a.ppm", img);
  const ImageBuffer back = read_pnm(dir / "a.ppm");
  ASSERT_TRUE(back.same_shape(img));
  for (std::size_t i = 0; i < img.values.size(); ++i) EXPECT_NEAR(back.values[i], img.values[i], 1e-6);

  const auto entries = read_manifest(kCorpus / "manifest.csv");
  EXPECT_EQ(entries.size(), 16u);
  const auto val = load_split(entries, "val", 1);
  EXPECT_EQ(val.size(), 4u);
  for (const auto& v : val) EXPECT_EQ(v.channels, 1u);
  EXPECT_THROW(read_pnm(dir / "missing.ppm"), DataError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace funcnet
