// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "svcd/errors.hpp"
#include "svcd/oracle/oracle.hpp"
#include "svcd/sparse_attention.hpp"
#include "svcd/vats.hpp"

using namespace svcd;

namespace {

struct Instance {
  Vector q;
  std::vector<Vector> keys;
  Vector visual;  // P, a distribution
  double lambda;
  Vector relevance;
};

Instance random_instance(SplitMix64& rng, std::size_t n, std::size_t dim = 4) {
  Instance in;
  in.q = test::random_vector(rng, dim);
  for (std::size_t i = 0; i < n; ++i) in.keys.push_back(test::random_vector(rng, dim));
  in.visual = stable_softmax(test::random_vector(rng, n, -3.0, 3.0));
  in.lambda = rng.uniform(0.0, 1.0);
  for (const Vector& k : in.keys) {
    const double ip = dot(k, in.q);
    in.relevance.push_back(ip * ip);
  }
  return in;
}

std::vector<std::vector<double>> as_rows(const Matrix& m) {
  std::vector<std::vector<double>> rows;
  for (std::size_t r = 0; r < m.rows(); ++r) rows.emplace_back(m.row(r).begin(), m.row(r).end());
  return rows;
}

}  // namespace

TEST_SUITE("vats") {
  TEST_CASE("visual saliency") {
    const Vector u = vats::visual_saliency(Vector{0.3, 0.3, 0.3, 0.3});
    for (double p : u) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));
    const Vector s = vats::visual_saliency(Vector{20, 0, 0, 0});
    CHECK(s[0] > 1.0 - 1e-8);
    for (std::size_t i = 1; i < 4; ++i) CHECK(s[i] < 1e-8);
    const Vector p = vats::visual_saliency(Vector{1, 2, 3});
    const auto ref = test::softmax_ld({1, 2, 3});
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::fabs(p[i] - static_cast<double>(ref[i])) <= 1e-12);
  }

  TEST_CASE("visual saliency needs visual tokens") {
    LayerCache lc(1, 2);
    const std::vector<Vector> kv{Vector{1, 0}};
    lc.append(kv, kv, RowInfo{0, false, false, 0.0});
    CHECK_THROWS_WITH_AS(vats::visual_saliency(lc), doctest::Contains("no visual tokens"), InputError);
    lc.append(kv, kv, RowInfo{1, true, false, 0.0});
    CHECK(vats::visual_saliency(lc).size() == 2);
  }

  TEST_CASE("saliency scores combine relevance and visual saliency") {
    const vats::SaliencyScores s = vats::make_saliency(Vector{4, 1}, Vector{0.25, 0.75}, 0.1);
    CHECK(s.aggregate[0] == 4.0 + 0.1 * 0.25);
    CHECK(s.aggregate[1] == 1.0 + 0.1 * 0.75);
    for (double d : s.aggregate) CHECK(d >= 0.0);
  }

  TEST_CASE("select top S") {
    const vats::SparsifyMask all = vats::select_top_s(Vector{3, 1, 2}, 3, 0);
    CHECK(all.flags == std::vector<std::uint8_t>{1, 1, 1});
    const vats::SparsifyMask two = vats::select_top_s(Vector{3, 1, 2, 5}, 2, 0);
    CHECK(two.flags == std::vector<std::uint8_t>{1, 0, 0, 1});
    const vats::SparsifyMask tie = vats::select_top_s(Vector{1, 1, 1, 1}, 2, 0);
    CHECK(tie.flags == std::vector<std::uint8_t>{1, 1, 0, 0});
    const vats::SparsifyMask recent = vats::select_top_s(Vector{9, 8, 0, 0}, 3, 2);
    CHECK(recent.flags == std::vector<std::uint8_t>{1, 0, 1, 1});
    CHECK(recent.retained == 3);
  }

  TEST_CASE("select top S rejects impossible budgets") {
    CHECK_THROWS_AS(vats::select_top_s(Vector{1, 2}, 3, 0), ConfigError);
    CHECK_THROWS_AS(vats::select_top_s(Vector{1, 2}, 0, 0), ConfigError);
    CHECK_THROWS_AS(vats::select_top_s(Vector{1, 2, 3}, 1, 2), ConfigError);
  }

  TEST_CASE("default budget keeps 0.8 of the sequence") {
    SparsifyConfig c;
    CHECK(c.sparsity_rate == 0.8);
    CHECK(c.lambda == 0.1);
    CHECK(c.w_recent == 8);
    CHECK(c.rho_merge == 0.25);
    CHECK(c.knn_k == 5);
    CHECK(c.l_min == 16);
  }

  TEST_CASE("objective value") {
    const Vector g{4, 1, 2}, p{0.2, 0.3, 0.5};
    CHECK(vats::objective_value(std::vector<std::uint8_t>{1, 1, 1}, g, p, 0.1) ==
          doctest::Approx(-0.1).epsilon(1e-15));
    CHECK(vats::objective_value(std::vector<std::uint8_t>{0, 0, 0}, g, p, 0.1) == 7.0);
    SplitMix64 rng(21);
    for (int trial = 0; trial < 200; ++trial) {
      const Instance in = random_instance(rng, 9);
      std::vector<std::uint8_t> m(9);
      for (auto& f : m) f = rng.bernoulli(0.5);
      double constant = 0.0, kept = 0.0;
      for (std::size_t i = 0; i < 9; ++i) {
        constant += in.relevance[i];
        if (m[i]) kept += in.relevance[i] + in.lambda * in.visual[i];
      }
      CHECK(std::fabs(vats::objective_value(m, in.relevance, in.visual, in.lambda) - (constant - kept)) <=
            1e-12);
    }
  }

  TEST_CASE("top S matches exhaustive enumeration on L = 6, S = 3") {
    SplitMix64 rng(22);
    for (int trial = 0; trial < 100; ++trial) {
      const Instance in = random_instance(rng, 6);
      const vats::SaliencyScores s = vats::make_saliency(in.relevance, in.visual, in.lambda);
      const vats::SparsifyMask m = vats::select_top_s(s.aggregate, 3, 0);
      const oracle::BruteForceMask best = oracle::brute_force_mask(in.q, in.keys, in.visual, in.lambda, 3);
      CHECK(std::fabs(vats::objective_value(m.flags, in.relevance, in.visual, in.lambda) - best.objective) <=
            1e-12);
    }
  }

  TEST_CASE("selected mask is invariant to positive rescaling of delta") {
    SplitMix64 rng(23);
    for (int trial = 0; trial < 100; ++trial) {
      Vector d = test::random_vector(rng, 12, 0.0, 5.0);
      const std::size_t s = 1 + static_cast<std::size_t>(rng.below(12));
      const auto base = vats::select_top_s(d, s, 0).flags;
      const double c = std::pow(2.0, rng.uniform(-10.0, 10.0));
      for (double& v : d) v *= c;
      CHECK(vats::select_top_s(d, s, 0).flags == base);
    }
  }

  TEST_CASE("attention error of the selected mask is non-increasing in S when lambda = 0") {
    SplitMix64 rng(24);
    for (int trial = 0; trial < 50; ++trial) {
      const Instance in = random_instance(rng, 12);
      double previous = 1e300;
      for (std::size_t s = 1; s <= 12; ++s) {
        const auto m = vats::select_top_s(in.relevance, s, 0);
        double err = 0.0;
        for (std::size_t i = 0; i < 12; ++i) {
          if (!m.flags[i]) err += in.relevance[i];
        }
        CHECK(err <= previous);
        previous = err;
      }
    }
  }

  TEST_CASE("cluster count") {
    CHECK(vats::cluster_count(0.25, 1) == 1);
    CHECK(vats::cluster_count(0.25, 8) == 2);
    CHECK(vats::cluster_count(0.25, 9) == 3);
    CHECK(vats::cluster_count(1.0, 5) == 5);
    CHECK(vats::cluster_count(0.0, 5) == 1);
  }

  TEST_CASE("singleton clustering") {
    Matrix one(0, 3);
    one.append_row(Vector{1, 2, 3});
    const auto a = vats::cluster_pruned(one, Vector{0.7}, 5, 1);
    REQUIRE(a.clusters.size() == 1);
    CHECK(a.clusters[0].weights == Vector{1.0});
    CHECK(oracle::reference_clustering(as_rows(one), 5, 1).center_of == std::vector<std::size_t>{0});
  }

  TEST_CASE("two duplicate pairs form two clusters") {
    Matrix pts(0, 2);
    for (const Vector& v : {Vector{0, 0}, Vector{10, 10}, Vector{0, 0}, Vector{10, 10}}) pts.append_row(v);
    const auto a = vats::cluster_pruned(pts, Vector{1, 1, 1, 1}, 5, 2);
    CHECK(a.cluster_of[0] == a.cluster_of[2]);
    CHECK(a.cluster_of[1] == a.cluster_of[3]);
    CHECK(a.cluster_of[0] != a.cluster_of[1]);
    const auto ref = oracle::reference_clustering(as_rows(pts), 5, 2);
    CHECK(ref.center_of[0] == ref.center_of[2]);
    CHECK(ref.center_of[1] == ref.center_of[3]);
    CHECK(ref.center_of[0] != ref.center_of[1]);
  }

  TEST_CASE("four-point instance worked by hand") {
    // Points on a line at 0, 1, 10, 12 with k = 1: densities ~1, 1, 0.5, 0.5.
    // Points 0 and 1 have no strictly denser point and take the maximum
    // distance 12 as separation; gamma = [12, 12, 4.5, 5.5]. Point 2 joins the
    // nearest assigned point 1, then point 3 joins point 2.
    Matrix pts(0, 1);
    for (double x : {0.0, 1.0, 10.0, 12.0}) pts.append_row(Vector{x});
    const auto a = vats::cluster_pruned(pts, Vector{0, 0, 0, 0}, 1, 2);
    CHECK(a.density[0] == doctest::Approx(1.0));
    CHECK(a.density[2] == doctest::Approx(0.5));
    CHECK(a.separation[0] == doctest::Approx(12.0));
    CHECK(a.separation[2] == doctest::Approx(9.0));
    CHECK(a.clusters[0].center == 0);
    CHECK(a.clusters[1].center == 1);
    CHECK(a.cluster_of == std::vector<std::size_t>{0, 1, 1, 1});
    const auto ref = oracle::reference_clustering(as_rows(pts), 1, 2);
    CHECK(ref.center_of == std::vector<std::size_t>{0, 1, 1, 1});
  }

  TEST_CASE("planted two-blob instance matches the reference clustering") {
    SplitMix64 rng(25);
    for (int trial = 0; trial < 20; ++trial) {
      Matrix pts(0, 3);
      for (int i = 0; i < 8; ++i) {
        const double c = i < 4 ? -5.0 : 5.0;
        pts.append_row(Vector{c + 0.3 * rng.normal(), c + 0.3 * rng.normal(), 0.3 * rng.normal()});
      }
      const auto a = vats::cluster_pruned(pts, test::random_vector(rng, 8, 0.0, 2.0), 3, 2);
      const auto ref = oracle::reference_clustering(as_rows(pts), 3, 2);
      for (std::size_t i = 0; i < 8; ++i) CHECK(a.clusters[a.cluster_of[i]].center == ref.center_of[i]);
      CHECK(a.cluster_of[0] == a.cluster_of[3]);
      CHECK(a.cluster_of[4] == a.cluster_of[7]);
      CHECK(a.cluster_of[0] != a.cluster_of[4]);
    }
  }

  TEST_CASE("clustering is total and weights are distributions") {
    SplitMix64 rng(26);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 1 + static_cast<std::size_t>(rng.below(32));
      const Matrix pts = test::random_matrix(rng, n, 4);
      const std::size_t c = vats::cluster_count(rng.uniform(0.0, 1.0), n);
      const auto a = vats::cluster_pruned(pts, test::random_vector(rng, n, 0.0, 3.0), 5, c);
      CHECK(a.clusters.size() <= n);
      std::vector<int> seen(n, 0);
      for (const auto& cl : a.clusters) {
        CHECK(std::fabs(sum(cl.weights) - 1.0) <= 1e-9);
        for (std::size_t m : cl.members) ++seen[m];
      }
      for (int s : seen) CHECK(s == 1);
    }
  }

  TEST_CASE("merge clusters") {
    Matrix keys(0, 2), values(0, 2);
    keys.append_row(Vector{1, 0});
    keys.append_row(Vector{0, 1});
    keys.append_row(Vector{3, 3});
    values.append_row(Vector{2, 2});
    values.append_row(Vector{4, 4});
    values.append_row(Vector{5, 6});
    vats::ClusterAssignment a;
    a.cluster_of = {0, 0, 1};
    a.clusters = {vats::Cluster{0, {0, 1}, stable_softmax(Vector{0.4, 0.4})},
                  vats::Cluster{2, {2}, Vector{1.0}}};
    const std::vector<std::size_t> rows{0, 1, 2};
    const auto merged = vats::merge_clusters(a, rows, keys, values);
    CHECK(merged[0].key == Vector{0.5, 0.5});
    CHECK(merged[0].value == Vector{3, 3});
    CHECK(merged[1].key == Vector{3, 3});
    CHECK(merged[1].value == Vector{5, 6});

    Matrix same(0, 2);
    same.append_row(Vector{0.3, -0.7});
    same.append_row(Vector{0.3, -0.7});
    vats::ClusterAssignment b;
    b.cluster_of = {0, 0};
    b.clusters = {vats::Cluster{0, {0, 1}, stable_softmax(Vector{0.1, 2.0})}};
    const std::vector<std::size_t> two{0, 1};
    const auto m2 = vats::merge_clusters(b, two, same, same);
    CHECK(m2[0].key[0] == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(m2[0].key[1] == doctest::Approx(-0.7).epsilon(1e-15));
  }
}
