#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "sccalib/gsplat.hpp"

using namespace sccalib;

namespace {

Vec2 brightest(const RgbImage& img) {
  double best = -1.0;
  Vec2 at(-1, -1);
  for (int r = 0; r < img.rows(); ++r)
    for (int c = 0; c < img.cols(); ++c) {
      const double v = img(r, c)[0] + img(r, c)[1] + img(r, c)[2];
      if (v > best) {
        best = v;
        at = Vec2(c, r);
      }
    }
  return at;
}

Vec2 brightest_in(const RgbImage& img, int c0, int c1) {
  double best = -1.0;
  Vec2 at(-1, -1);
  for (int r = 0; r < img.rows(); ++r)
    for (int c = c0; c < c1; ++c) {
      const double v = img(r, c)[0];
      if (v > best) {
        best = v;
        at = Vec2(c, r);
      }
    }
  return at;
}

Gaussian3D blob(const Vec3& mu, double scale) {
  Gaussian3D g;
  g.mu = mu;
  g.scale = Vec3::Constant(scale);
  g.color = Vec3(1, 1, 1);
  return g;
}

}  // namespace

TEST(CovarianceFrom, ClosedForms) {
  EXPECT_TRUE(covariance_from(Vec3(1, 1, 1), identity_quat()).isApprox(Mat3::Identity(), 1e-15));
  EXPECT_LE((covariance_from(Vec3(2, 1, 1), identity_quat()) - Vec3(4, 1, 1).asDiagonal().toDenseMatrix()).norm(), 1e-12);
  const Quat qz = quat_from_axis_angle(Vec3::UnitZ(), std::numbers::pi / 2);
  EXPECT_LE((covariance_from(Vec3(2, 1, 1), qz) - Vec3(1, 4, 1).asDiagonal().toDenseMatrix()).norm(), 1e-12);
  EXPECT_THROW(covariance_from(Vec3(1, 0, 1), identity_quat()), InvalidParameter);
}

TEST(CovarianceFrom, SymmetricPositiveDefiniteAndSignInvariant) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.05, 3.0);
  for (int i = 0; i < 50; ++i) {
    const Quat q(g(rng), g(rng), g(rng), g(rng));
    const Vec3 s(u(rng), u(rng), u(rng));
    const Mat3 a = covariance_from(s, q);
    EXPECT_LE((a - covariance_from(s, -q)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((a - a.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Mat3>(a).eigenvalues().minCoeff(), 0.0);
  }
}

TEST(ProjectCovariance, OnAxisClosedForm) {
  const Intrinsics intr = Intrinsics::centered(500, 640, 360);
  const CameraParams cam;
  const Mat2 a = project_covariance(Mat3::Identity(), cam, intr, Vec3(0, 0, 2));
  EXPECT_LE((a - (500.0 * 500.0 / 4.0) * Mat2::Identity()).cwiseAbs().maxCoeff(), 1e-9);
  const Mat2 b = project_covariance(Mat3::Identity(), cam, intr, Vec3(0, 0, 4));
  EXPECT_LE((b - 0.25 * a).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_THROW(project_covariance(Mat3::Identity(), cam, intr, Vec3(0, 0, -1)), BehindCamera);
  EXPECT_THROW(project_covariance(Mat3::Identity(), cam, intr, Vec3(0, 0, 0)), BehindCamera);
}

TEST(ProjectCovariance, PositiveSemidefinite) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.01, 2.0);
  const Intrinsics intr = Intrinsics::centered(400, 320, 240);
  for (int i = 0; i < 100; ++i) {
    CameraParams cam;
    cam.quat = quat_from_axis_angle(Vec3(g(rng), g(rng), g(rng)).normalized(), 0.3 * g(rng));
    cam.trans = Vec3(0.2 * g(rng), 0.2 * g(rng), 3.0);
    const Mat3 sigma = covariance_from(Vec3(u(rng), u(rng), u(rng)), Quat(g(rng), g(rng), g(rng), g(rng)));
    const Mat2 p = project_covariance(sigma, cam, intr, Vec3(0.3 * g(rng), 0.3 * g(rng), 0.3 * g(rng)));
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Mat2>(p).eigenvalues().minCoeff(), -1e-9 * p.norm());
  }
}

TEST(GaussianWeight, Examples) {
  const Gaussian3D g = blob(Vec3(1, 2, 3), 0.7);
  EXPECT_EQ(gaussian_weight(g, g.mu), 1.0);
  Gaussian3D unit = blob(Vec3::Zero(), 1.0);
  EXPECT_NEAR(gaussian_weight(unit, Vec3(0, 1, 0)), std::exp(-0.5), 1e-15);
  const Eigen::Vector2d m(0, 0);
  Mat2 c;
  c << 4, 0, 0, 1;
  EXPECT_NEAR(gaussian_weight<2>(m, c, Eigen::Vector2d(2, 0)), std::exp(-0.5), 1e-15);
}

TEST(GaussianWeight, SingularCovarianceIsNumericalError) {
  Mat2 c;
  c << 1, 1, 1, 1;
  EXPECT_THROW(gaussian_weight<2>(Eigen::Vector2d::Zero(), c, Eigen::Vector2d(1, 0)), NumericalError);
  c << 1, 0, 0, 1e-13;
  EXPECT_THROW(gaussian_weight<2>(Eigen::Vector2d::Zero(), c, Eigen::Vector2d(1, 0)), NumericalError);
}

TEST(GaussianWeight, QuadratureMassIn2D) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int k = 0; k < 5; ++k) {
    Eigen::Matrix2d a;
    a << g(rng), g(rng), g(rng), g(rng);
    const Mat2 cov = a * a.transpose() + 0.3 * Mat2::Identity();
    const double extent = 6.0 * std::sqrt(cov.diagonal().maxCoeff());
    const double h = extent / 200.0;
    double mass = 0.0;
    for (double x = -extent; x <= extent; x += h)
      for (double y = -extent; y <= extent; y += h)
        mass += gaussian_weight<2>(Eigen::Vector2d::Zero(), cov, Eigen::Vector2d(x, y)) * h * h;
    const double expected = 2.0 * std::numbers::pi * std::sqrt(cov.determinant());
    EXPECT_NEAR(mass, expected, 0.02 * expected);
  }
}

TEST(AlphaBlend, Examples) {
  const SplatSample red{Vec3(1, 0, 0), 0.5}, blue{Vec3(0, 0, 1), 0.5};
  const std::vector<SplatSample> two{red, blue};
  EXPECT_LE((alpha_blend_pixel(two) - Vec3(0.5, 0, 0.25)).norm(), 1e-15);
  const std::vector<SplatSample> swapped{blue, red};
  EXPECT_NE(alpha_blend_pixel(two), alpha_blend_pixel(swapped));
  EXPECT_EQ(alpha_blend_pixel({}), Vec3::Zero());
  const std::vector<SplatSample> opaque{{Vec3(0.2, 0.4, 0.6), 1.0}};
  EXPECT_LE((alpha_blend_pixel(opaque) - Vec3(0.2, 0.4, 0.6)).norm(), 0.001);
}

TEST(AlphaBlend, StaysInUnitRange) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    std::vector<SplatSample> s(1 + i % 7);
    for (auto& x : s) x = {Vec3(u(rng), u(rng), u(rng)), 1.2 * u(rng)};
    const Vec3 c = alpha_blend_pixel(s);
    EXPECT_GE(c.minCoeff(), 0.0);
    EXPECT_LE(c.maxCoeff(), 1.0);
  }
}

TEST(RenderPreview, OnAxisPeakAtPrincipalPoint) {
  const Intrinsics intr = Intrinsics::centered(200, 64, 48);
  const RgbImage img = render_preview({blob(Vec3(0, 0, 3), 0.03)}, CameraParams{}, intr);
  EXPECT_EQ(brightest(img), Vec2(32, 24));
  EXPECT_THROW(render_preview({}, CameraParams{}, intr), InvalidParameter);
}

TEST(RenderPreview, TwoBlobsPeakAtProjectedCentres) {
  const Intrinsics intr = Intrinsics::centered(200, 96, 48);
  CameraParams cam;
  cam.quat = quat_from_axis_angle(Vec3::UnitY(), 0.05);
  cam.trans = Vec3(0.02, -0.03, 0.1);
  const GaussianCloud cloud{blob(Vec3(-0.5, 0.07, 3), 0.03), blob(Vec3(0.55, -0.1, 3.2), 0.03)};
  const RgbImage img = render_preview(cloud, cam, intr);
  const Vec2 pa = pinhole_pixel(cam.rotation() * cloud[0].mu + cam.trans, intr);
  const Vec2 pb = pinhole_pixel(cam.rotation() * cloud[1].mu + cam.trans, intr);
  EXPECT_LE((brightest_in(img, 0, 48) - pa).norm(), 1.0);
  EXPECT_LE((brightest_in(img, 48, 96) - pb).norm(), 1.0);
}

TEST(RenderPreview, TranslationEquivariant) {
  const Intrinsics intr = Intrinsics::centered(250, 80, 60);
  const Gaussian3D g = blob(Vec3(-0.1, 0.05, 2.5), 0.02);
  const Vec2 p0 = brightest(render_preview({g}, CameraParams{}, intr));
  for (const Vec3 shift : {Vec3(0.2, 0, 0), Vec3(0, -0.15, 0), Vec3(0.13, 0.09, 0)}) {
    Gaussian3D moved = g;
    moved.mu += shift;
    const Vec2 expected = p0 + 250.0 / 2.5 * shift.head<2>();
    EXPECT_LE((brightest(render_preview({moved}, CameraParams{}, intr)) - expected).norm(), 1.0);
  }
}

TEST(RenderPreview, Deterministic) {
  const Intrinsics intr = Intrinsics::centered(100, 40, 30);
  GaussianCloud cloud;
  for (int i = 0; i < 10; ++i) cloud.push_back(blob(Vec3(0.05 * i - 0.2, 0.02 * i - 0.1, 2 + 0.1 * i), 0.05));
  EXPECT_EQ(render_preview(cloud, CameraParams{}, intr), render_preview(cloud, CameraParams{}, intr));
}

TEST(PositionalEncoding, Examples) {
  const std::vector<double> zero{0.0};
  const auto e = positional_encoding(zero, 4);
  ASSERT_EQ(e.size(), 9u);
  EXPECT_EQ(e[0], 0.0);
  for (int l = 0; l < 4; ++l) {
    EXPECT_EQ(e[1 + 2 * l], 0.0);
    EXPECT_EQ(e[2 + 2 * l], 1.0);
  }
  const std::vector<double> three{0.1, 0.2, 0.3};
  EXPECT_EQ(positional_encoding(three, 10).size(), 63u);
  const std::vector<double> half{0.5};
  const auto h = positional_encoding(half, 1);
  EXPECT_NEAR(h[1], 1.0, 1e-15);
  EXPECT_NEAR(h[2], 0.0, 1e-15);
  EXPECT_THROW(positional_encoding(half, 0), InvalidParameter);
}
