/**
 * Copyright 2026 The tacsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>

#include <gtest/gtest.h>

#include "silhouette_oracle.hpp"
#include "tacsim/camera.hpp"
#include "tacsim/common.hpp"

namespace tacsim {
namespace {

TEST(Focal, FromGeometry) {
  EXPECT_DOUBLE_EQ(focal_from_geometry(30.0), 440.0);
  EXPECT_DOUBLE_EQ(focal_from_geometry(15.0), 220.0);
  EXPECT_THROW(focal_from_geometry(0.0), DomainError);
}

TEST(Frames, GelToPinhole) {
  PinholeCamera cam;
  cam.translation_gp = Vec3::Zero();
  EXPECT_EQ(cam.gel_to_pinhole(Vec3(1, 2, 3)), Vec3(1, 2, 3));
  cam.translation_gp = Vec3(0, 0, 15);
  EXPECT_EQ(cam.gel_to_pinhole(Vec3(1, 2, 0)), Vec3(1, 2, 15));
  cam.rotation_gp = Eigen::AngleAxisd(0.3, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  cam.translation_gp = Vec3(4, -5, 6);
  EXPECT_LT((cam.gel_disp_to_pinhole(Vec3(1, 0, 0)) - cam.rotation_gp.col(0)).norm(), 1e-15);
  const Vec3 p(3, 7, 1);
  EXPECT_LT((cam.pinhole_to_gel(cam.gel_to_pinhole(p)) - p).norm(), 1e-12);
}

TEST(Frames, BackProjectIsInverseOfProject) {
  const PinholeCamera cam;
  for (double u : {0.0, 17.25, 219.5, 439.0})
    for (double v : {3.0, 220.0, 401.75}) {
      const Vec2 px = cam.project(cam.back_project(Vec2(u, v), 15.0));
      EXPECT_NEAR(px.x(), u, 1e-9);
      EXPECT_NEAR(px.y(), v, 1e-9);
    }
}

TEST(Frames, InvalidCameraRejected) {
  PinholeCamera cam;
  cam.rotation_gp(0, 0) = 1.1;
  EXPECT_THROW(cam.validate(), DomainError);
  PinholeCamera c2;
  c2.translation_gp.z() = 0;
  EXPECT_THROW(c2.validate(), DomainError);
}

TEST(ProjectSphere, OnAxisCircle) {
  const PinholeCamera cam;
  const double r = 0.0825, z = 10.0;
  const Ellipse e = project_sphere(Vec3(0, 0, z), r, cam);
  const double expected = 2 * cam.f * r / std::sqrt(z * z - r * r);
  EXPECT_NEAR(expected, 3.63, 0.005);
  EXPECT_NEAR(e.major, expected, 1e-9);
  EXPECT_NEAR(e.minor, expected, 1e-9);
  EXPECT_NEAR(e.center.x(), cam.u0, 1e-12);
  EXPECT_NEAR(e.center.y(), cam.v0, 1e-12);
}

TEST(ProjectSphere, OrientationFollowsAzimuth) {
  const PinholeCamera cam;
  EXPECT_NEAR(project_sphere(Vec3(1, 1, 12), 0.08, cam).orientation, kPi / 4, 1e-12);
  EXPECT_NEAR(project_sphere(Vec3(-2, 0.0, 12), 0.08, cam).orientation, kPi, 1e-12);
}

TEST(ProjectSphere, RejectsSphereBehindCamera) {
  const PinholeCamera cam;
  EXPECT_THROW(project_sphere(Vec3(0, 0, 0.05), 0.08, cam), GeometryError);
  EXPECT_THROW(project_sphere(Vec3(0, 0, -3), 0.08, cam), GeometryError);
}

TEST(ProjectSphere, MatchesRayCastSilhouetteExample) {
  const PinholeCamera cam;
  const Vec3 c(4, -2, 12);
  const double r = 0.09;
  const Ellipse e = project_sphere(c, r, cam);
  const auto o = test::raycast_ellipse(c, r, cam);
  EXPECT_NEAR(e.major, o.major, 0.01 * o.major);
  EXPECT_NEAR(e.minor, o.minor, 0.01 * o.minor);
  EXPECT_NEAR((e.center - o.center).norm(), 0.0, 0.01);
}

TEST(ProjectSphere, MatchesRayCastSilhouetteRandomPoses) {
  const PinholeCamera cam;
  Rng rng(2024);
  for (int i = 0; i < 100; ++i) {
    const Vec3 c(rng.uniform(-15, 15), rng.uniform(-15, 15), rng.uniform(15, 19.5));
    const double r = rng.uniform(0.075, 0.09);
    const Ellipse e = project_sphere(c, r, cam);
    const auto o = test::raycast_ellipse(c, r, cam);
    EXPECT_NEAR(e.major, o.major, 0.01 * o.major) << i;
    EXPECT_NEAR(e.minor, o.minor, 0.01 * o.minor) << i;
    EXPECT_GE(e.major, e.minor);
    EXPECT_GT(e.minor, 0);
  }
}

TEST(ProjectSphere, ScalesWithFocalLength) {
  PinholeCamera a, b;
  b.f = 2 * a.f;
  const Vec3 c(3, -4, 11);
  const Ellipse ea = project_sphere(c, 0.08, a), eb = project_sphere(c, 0.08, b);
  EXPECT_NEAR(eb.major, 2 * ea.major, 1e-12);
  EXPECT_NEAR(eb.minor, 2 * ea.minor, 1e-12);
  EXPECT_NEAR(eb.center.x() - b.u0, 2 * (ea.center.x() - a.u0), 1e-9);
  EXPECT_NEAR(eb.center.y() - b.v0, 2 * (ea.center.y() - a.v0), 1e-9);
}

TEST(ProjectSphere, RotationalEquivariance) {
  const PinholeCamera cam;
  const Vec3 c(3, 1, 14);
  const Ellipse e0 = project_sphere(c, 0.085, cam);
  for (double phi : {0.4, 1.7, -2.2}) {
    const Vec3 rc(std::cos(phi) * c.x() - std::sin(phi) * c.y(), std::sin(phi) * c.x() + std::cos(phi) * c.y(), c.z());
    const Ellipse e = project_sphere(rc, 0.085, cam);
    EXPECT_NEAR(e.major, e0.major, 1e-9);
    EXPECT_NEAR(e.minor, e0.minor, 1e-9);
    EXPECT_NEAR(std::remainder(e.orientation - e0.orientation - phi, 2 * kPi), 0.0, 1e-9);
  }
}

TEST(ProjectSphere, MinorAxisConstantAtFixedDepth) {
  const PinholeCamera cam;
  const double m0 = project_sphere(Vec3(0, 0, 16), 0.08, cam).minor;
  for (auto [x, y] : {std::pair{5.0, 0.0}, {-7.0, 3.0}, {12.0, -12.0}}) {
    EXPECT_NEAR(project_sphere(Vec3(x, y, 16), 0.08, cam).minor, m0, 1e-9);
  }
}

TEST(ProjectSphere, EccentricityVanishesOnAxis) {
  const PinholeCamera cam;
  const Ellipse e = project_sphere(Vec3(1e-7, 1e-7, 15), 0.08, cam);
  EXPECT_NEAR(e.major, e.minor, 1e-9);
}

TEST(Fisheye, OnAxisHitsCenter) {
  FisheyeCamera fe;
  fe.center = Vec2(201.5, 230.25);
  const Vec2 p = fe.project(Vec3(0, 0, 5));
  EXPECT_EQ(p, fe.center);
}

TEST(Fisheye, EquidistantDegeneracy) {
  FisheyeCamera fe;
  fe.poly = {0, 180, 0, 0, 0};
  const Vec3 p(3, 4, 10);
  const double theta = std::atan2(5.0, 10.0);
  const Vec2 px = fe.project(p);
  EXPECT_NEAR(px.x() - fe.center.x(), 180 * theta * 0.6, 1e-9);
  EXPECT_NEAR(px.y() - fe.center.y(), 180 * theta * 0.8, 1e-9);
}

TEST(Fisheye, StretchApplied) {
  FisheyeCamera fe;
  fe.stretch << 1.0, 0.01, -0.02, 0.98;
  const Vec3 p(-2, 5, 9);
  const double r = std::hypot(p.x(), p.y());
  const double rho = fe.radius(std::atan2(r, p.z()));
  const Vec2 expected = fe.stretch * Vec2(rho * p.x() / r, rho * p.y() / r) + fe.center;
  EXPECT_LT((fe.project(p) - expected).norm(), 1e-12);
}

TEST(Fisheye, NonMonotoneRejected) {
  FisheyeCamera fe;
  fe.poly = {0, 220, 0, -200, 0};  // turns over near theta = 0.6
  EXPECT_FALSE(fe.is_monotone());
  EXPECT_THROW(fe.validate(), DomainError);
  fe.poly = {1, 220, 0, 0, 0};
  EXPECT_THROW(fe.validate(), DomainError);
}

TEST(Fisheye, OutOfFieldAndBehind) {
  FisheyeCamera fe;
  fe.theta_max = 0.5;
  EXPECT_THROW(fe.project(Vec3(10, 0, 1)), GeometryError);
  EXPECT_FALSE(fe.try_project(Vec3(10, 0, 1)).has_value());
  EXPECT_THROW(fe.project(Vec3(0, 0, -1)), GeometryError);
}

TEST(Fisheye, MatchingPinholeReproducesPinhole) {
  const PinholeCamera pin;
  const FisheyeCamera fe = fisheye_matching_pinhole(pin);
  for (const Vec3 g : {Vec3(0, 0, 0), Vec3(3, 27, 2), Vec3(29, 1, 4.5)}) {
    const Vec2 a = pin.project(pin.gel_to_pinhole(g));
    const Vec2 b = fe.project(fe.gel_to_camera(g));
    EXPECT_LT((a - b).norm(), 1e-9);
  }
}

}  // namespace
}  // namespace tacsim
