/*
 * Copyright 2026 The reid-bench Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "reidbench/grad_cam.hpp"
#include "reidbench/models.hpp"
#include "support.hpp"

using namespace reidbench;

namespace {

FeatureMaps<double> random_image(Index r, std::mt19937_64& rng, Index batch = 1) {
  std::normal_distribution<double> n(0, 1);
  auto x = FeatureMaps<double>::zeros({batch, 3, r, r});
  for (Index i = 0; i < x.data.size(); ++i) x.data.data()[i] = n(rng);
  return x;
}

double sigmoid(double v) { return 1 / (1 + std::exp(-v)); }

}  // namespace

TEST_CASE("verification score is symmetric, bounded and constant on self-pairs") {
  VerificationNet<double> net({registered_trunk("micro"), 16, 2});
  std::mt19937_64 rng(1);
  for (int draw = 0; draw < 20; ++draw) {
    net.initialize(100 + draw);
    std::normal_distribution<double> n(0, 0.5);
    net.parameters()[net.parameter_count() - 1] = n(rng);
    const double self = sigmoid(net.head_bias());
    for (int i = 0; i < 5; ++i) {
      const auto a = random_image(16, rng), b = random_image(16, rng);
      const double ab = net.forward(a, b), ba = net.forward(b, a);
      CHECK(ab == ba);
      CHECK(ab > 0);
      CHECK(ab < 1);
      CHECK(net.forward(a, a) == self);
    }
  }
}

TEST_CASE("1,000 random cases stay strictly inside (0,1)") {
  VerificationNet<float> net({registered_trunk("micro"), 8, 1});
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    if (i % 50 == 0) net.initialize(i);
    const auto a = random_image(8, rng).cast<float>(), b = random_image(8, rng).cast<float>();
    const float y = net.forward(a, b);
    REQUIRE(y > 0);
    REQUIRE(y < 1);
  }
}

TEST_CASE("batched scoring equals per-pair scoring") {
  VerificationNet<double> net({registered_trunk("micro"), 16, 2});
  net.initialize(3);
  std::mt19937_64 rng(3);
  const auto x1 = random_image(16, rng, 4), x2 = random_image(16, rng, 4);
  const auto batch = net.score(net.encode(x1), net.encode(x2));
  for (Index i = 0; i < 4; ++i)
    CHECK(batch(i) == doctest::Approx(net.forward(x1.slice(i, 1), x2.slice(i, 1))).epsilon(1e-12));
}

TEST_CASE("verification input checks name expected and actual shapes") {
  VerificationNet<double> net({registered_trunk("micro"), 16, 1});
  net.initialize(1);
  std::mt19937_64 rng(4);
  try {
    net.forward(random_image(12, rng), random_image(16, rng));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("16") != std::string::npos);
    CHECK(msg.find("1x3x12x12") != std::string::npos);
  }
  CHECK_THROWS_AS(net.encode(FeatureMaps<double>::zeros({1, 1, 16, 16})), ShapeError);
  CHECK_THROWS_AS(registered_trunk("resnet-9000"), ConfigError);
}

TEST_CASE("BCE gradient matches central differences") {
  VerificationNet<double> net({registered_trunk("micro"), 12, 2});
  std::mt19937_64 rng(5);
  net.initialize(5);
  net.parameters()[net.parameter_count() - 1] = 0.3;
  const auto x1 = random_image(12, rng, 3), x2 = random_image(12, rng, 3);
  const std::vector<int> labels{1, 0, 1};
  VectorX<double> grad = VectorX<double>::Zero(net.parameter_count());
  const double loss = net.bce_loss_and_gradient(x1, x2, labels, grad);
  CHECK(std::isfinite(loss));
  const VectorX<double> base = net.parameters();
  const double h = 1e-5;
  std::uniform_int_distribution<Index> pick(0, net.parameter_count() - 1);
  for (int k = 0; k < 40; ++k) {
    const Index i = k == 0 ? net.parameter_count() - 1 : pick(rng);
    VectorX<double> scratch;
    net.parameters() = base;
    net.parameters()[i] += h;
    const double up = net.bce_loss_and_gradient(x1, x2, labels, scratch = VectorX<double>::Zero(base.size()));
    net.parameters() = base;
    net.parameters()[i] -= h;
    const double down = net.bce_loss_and_gradient(x1, x2, labels, scratch = VectorX<double>::Zero(base.size()));
    const double fd = (up - down) / (2 * h);
    CHECK(std::abs(fd - grad[i]) <= 1e-5 * std::max(1e-3, std::abs(fd)) + 1e-9);
  }
  net.parameters() = base;
}

TEST_CASE("embeddings have length 128, are deterministic and accept several resolutions") {
  EmbeddingNet<float> net({registered_trunk("micro"), 1024, 5, 100, 256});
  net.initialize(1);
  std::mt19937_64 rng(6);
  for (Index r : {224, 1024, 8}) {
    const auto x = random_image(r, rng).cast<float>();
    const Embedding<float> e = net.embed(x);
    CHECK(e.size() == 128);
    CHECK(e.allFinite());
    CHECK((net.embed(x) - e).norm() == 0);
  }
  CHECK_THROWS_AS(net.embed(FeatureMaps<float>::zeros({1, 3, 16, 12})), ShapeError);
  CHECK_THROWS_AS(net.embed(FeatureMaps<float>::zeros({1, 1, 16, 16})), ShapeError);
}

TEST_CASE("embedding layout follows the pooled head design") {
  EmbeddingNet<double> net({registered_trunk("toy"), 64, 5, 100, 256});
  const auto& enc = net.encoder();
  const auto reduce = enc.find("reduce");
  REQUIRE(reduce.has_value());
  const auto& conv = dynamic_cast<const nn::Conv2d<double>&>(enc.layer(*reduce));
  CHECK(conv.in_channels() == 2 * 32);  // average and max pools concatenated
  CHECK(conv.out_channels() == 100);
  CHECK(conv.kernel() == 1);
  const auto& fc1 = dynamic_cast<const nn::Linear<double>&>(enc.layer(*enc.find("fc1")));
  CHECK(fc1.in_features() == 100 * 5 * 5);
  const auto& fc2 = dynamic_cast<const nn::Linear<double>&>(enc.layer(*enc.find("fc2")));
  CHECK(fc2.out_features() == 128);
}

TEST_CASE("embedding batch equals per-image embedding") {
  EmbeddingNet<double> net({registered_trunk("micro"), 16, 3, 10, 32});
  net.initialize(7);
  std::mt19937_64 rng(7);
  const auto x = random_image(16, rng, 3);
  const auto batch = net.embed_batch(x);
  for (Index i = 0; i < 3; ++i)
    CHECK((batch.col(i) - net.embed(x.slice(i, 1))).norm() <= 1e-12);
}

TEST_CASE("embedding backward matches central differences of the norm") {
  EmbeddingNet<double> net({registered_trunk("micro"), 12, 2, 6, 16});
  net.initialize(8);
  std::mt19937_64 rng(8);
  const auto x = random_image(12, rng, 2);
  nn::Tape<double> tape;
  const MatrixX<double> e = net.forward(x, tape);
  // loss = sum of squared embedding norms
  VectorX<double> grad = VectorX<double>::Zero(net.parameter_count());
  net.backward(tape, 2 * e, grad);
  const VectorX<double> base = net.parameters();
  const double h = 1e-5;
  std::uniform_int_distribution<Index> pick(0, net.parameter_count() - 1);
  for (int k = 0; k < 40; ++k) {
    const Index i = pick(rng);
    net.parameters() = base;
    net.parameters()[i] += h;
    const double up = net.embed_batch(x).squaredNorm();
    net.parameters()[i] -= 2 * h;
    const double down = net.embed_batch(x).squaredNorm();
    const double fd = (up - down) / (2 * h);
    CHECK(std::abs(fd - grad[i]) <= 1e-5 * std::max(1e-3, std::abs(fd)) + 1e-9);
  }
  net.parameters() = base;
}

// ---------------------------------------------------------------- Grad-CAM

TEST_CASE("Grad-CAM on a one-convolution network equals the analytic map") {
  // trunk: 1x1 conv 3->4, ReLU; global average pool; fc 4->128; head
  VerificationNet<double> net({registered_trunk("single"), 6, 1});
  net.initialize(9);
  net.parameters()[net.parameter_count() - 1] = 0.2;
  std::mt19937_64 rng(9);
  const auto x1 = random_image(6, rng), x2 = random_image(6, rng);
  const auto [m1, m2] = grad_cam(net, x1, x2, "conv1");

  const VectorX<double>& p = net.parameters();
  const Index cin = 3, cout = 4, S = 36;
  const Index fc = net.encoder().offset(*net.encoder().find("fc"));
  const Index head = net.parameter_count() - 129;
  const double y = net.forward(x1, x2);
  const MatrixX<double> z1 = net.encode(x1), z2 = net.encode(x2);

  auto oracle = [&](const FeatureMaps<double>& x, const MatrixX<double>& z,
                    const MatrixX<double>& other) {
    // pre-activation conv output A(c, s)
    MatrixX<double> A(cout, S);
    for (Index c = 0; c < cout; ++c)
      for (Index s = 0; s < S; ++s) {
        double v = p[cout * cin + c];
        for (Index k = 0; k < cin; ++k) v += p[c + cout * k] * x.data(k, s);
        A(c, s) = v;
      }
    // dy/dz
    VectorX<double> g(128);
    for (Index j = 0; j < 128; ++j) {
      const double s1 = sigmoid(z(j)), s2 = sigmoid(other(j));
      const double sign = s1 > s2 ? 1 : (s1 < s2 ? -1 : 0);
      g[j] = y * (1 - y) * p[head + j] * sign * s1 * (1 - s1);
    }
    Plane<double> cam(6, 6);
    VectorX<double> alpha(cout);
    for (Index c = 0; c < cout; ++c) {
      double through_fc = 0;
      for (Index j = 0; j < 128; ++j) through_fc += g[j] * p[fc + j + 128 * c];
      double mean_grad = 0;
      for (Index s = 0; s < S; ++s) mean_grad += A(c, s) > 0 ? through_fc / double(S) : 0;
      alpha[c] = mean_grad / double(S);
    }
    for (Index s = 0; s < S; ++s) {
      double v = 0;
      for (Index c = 0; c < cout; ++c) v += alpha[c] * A(c, s);
      cam(s / 6, s % 6) = std::max(0.0, v);
    }
    if (cam.maxCoeff() > 0) cam /= cam.maxCoeff();
    return cam;
  };

  const Plane<double> want1 = oracle(x1, z1, z2), want2 = oracle(x2, z2, z1);
  REQUIRE(m1.values.rows() == 6);
  REQUIRE(m1.values.cols() == 6);
  CHECK((m1.values - want1).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((m2.values - want2).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(m1.layer_id == "conv1");
}

TEST_CASE("Grad-CAM maps are non-negative, input-sized and normalized") {
  VerificationNet<double> net({registered_trunk("toy"), 32, 4});
  net.initialize(10);
  std::mt19937_64 rng(10);
  CHECK(grad_cam_layers(net) == std::vector<std::string>{"conv1", "conv2", "conv3"});
  for (const auto& layer : grad_cam_layers(net)) {
    const auto x1 = random_image(32, rng), x2 = random_image(32, rng);
    const auto [a, b] = grad_cam(net, x1, x2, layer);
    for (const auto* m : {&a, &b}) {
      CHECK(m->values.rows() == 32);
      CHECK(m->values.cols() == 32);
      CHECK(m->values.minCoeff() >= 0);
      const double mx = m->values.maxCoeff();
      CHECK((mx == 1.0 || mx == 0.0));
    }
  }
}

TEST_CASE("Grad-CAM rejects unknown layers with the valid list") {
  VerificationNet<double> net({registered_trunk("micro"), 16, 1});
  net.initialize(11);
  std::mt19937_64 rng(11);
  const auto x = random_image(16, rng);
  try {
    grad_cam(net, x, x, "fc");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("conv1") != std::string::npos);
    CHECK(msg.find("conv2") != std::string::npos);
  }
}

TEST_CASE("heat overlay keeps the base size and colors hot regions") {
  Raster base{4, 4, 1, std::vector<std::uint8_t>(16, 100)};
  AttentionMap map{Plane<double>::Zero(4, 4), "conv1"};
  map.values(0, 0) = 1.0;
  const Raster out = overlay_heatmap(base, map, 0.5);
  CHECK(out.height == 4);
  CHECK(out.width == 4);
  CHECK(out.channels == 3);
  CHECK(out.at(0, 0, 0) > out.at(3, 3, 0));
}
