#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "mgopt/errors.hpp"
#include "mgopt/graphopt.hpp"
#include "oracles.hpp"

using namespace mgopt;

namespace {

DenseMatrix rand_n(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  return oracle::random_normal(rng, r, c);
}

// Symmetric with unit row sums, via exact least-squares projection.
DenseMatrix stochastic_symmetric(std::size_t n, std::uint64_t seed) {
  return oracle::kkt_doubly_stochastic_projection(rand_n(n, n, seed));
}

EmbeddingState random_state(std::size_t modalities, std::size_t n,
                            std::size_t d, std::uint64_t seed) {
  EmbeddingState state;
  for (std::size_t m = 0; m < modalities; ++m) {
    state.latents.push_back(rand_n(n, d, seed * 100 + m));
    state.anchors.push_back(rand_n(n, d, seed * 100 + 50 + m));
  }
  return state;
}

MultiplexStructure random_structure(std::size_t modalities, std::size_t n,
                                    std::uint64_t seed) {
  MultiplexStructure st;
  for (std::size_t m = 0; m < modalities; ++m)
    st.sample_affinity.push_back(stochastic_symmetric(n, seed * 37 + m));
  st.modality_coupling =
      oracle::kkt_doubly_stochastic_projection(rand_n(modalities, modalities,
                                                      seed * 37 + 99));
  return st;
}

// Direct triple-nested evaluation of the smoothness objective.
double objective_oracle(const EmbeddingState& state,
                        const MultiplexStructure& st) {
  const std::size_t m = state.latents.size();
  const std::size_t n = state.latents[0].rows();
  const std::size_t d = state.latents[0].cols();
  double intra = 0.0;
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        double dist = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          double diff = state.latents[k](i, c) - state.latents[k](j, c);
          dist += diff * diff;
        }
        // 1/2 per unordered pair; split across both triangles so mildly
        // asymmetric inputs are treated like the implementation treats them
        intra += 0.25 * st.sample_affinity[k](i, j) * dist;
        intra += 0.25 * st.sample_affinity[k](j, i) * dist;
      }
  double inter = 0.0;
  for (std::size_t e = 0; e < m; ++e)
    for (std::size_t k = 0; k < m; ++k) {
      double dist = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) {
          double diff = state.latents[e](i, c) - state.latents[k](i, c);
          dist += diff * diff;
        }
      inter += 0.25 * st.modality_coupling(e, k) * dist;
    }
  double reg = 0.0;
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) {
        double diff = state.latents[k](i, c) - state.anchors[k](i, c);
        reg += 0.5 * diff * diff;
      }
  return intra + inter + reg;
}

}  // namespace

TEST_CASE("classic_step: degenerate and generic forms") {
  DenseMatrix f = rand_n(5, 3, 1);
  DenseMatrix a = rand_n(5, 5, 2);
  SUBCASE("alpha 0 is the identity on features") {
    CHECK(max_abs_diff(classic_step(f, a, 0.0), f) == 0.0);
  }
  SUBCASE("alpha 1 is one full propagation") {
    CHECK(max_abs_diff(classic_step(f, a, 1.0), oracle::naive_matmul(a, f)) ==
          0.0);
  }
  SUBCASE("alpha 0.5 matches scalar evaluation") {
    DenseMatrix out = classic_step(f, a, 0.5);
    DenseMatrix af = oracle::naive_matmul(a, f);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        CHECK(out(i, j) ==
              doctest::Approx(0.5 * f(i, j) + 0.5 * af(i, j)).epsilon(1e-12));
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(classic_step(f, DenseMatrix(4, 4), 0.5), ShapeError);
    CHECK_THROWS_AS(classic_step(f, DenseMatrix(5, 4), 0.5), ShapeError);
  }
}

TEST_CASE("objective_value: closed-form cases and oracle") {
  SUBCASE("all terms vanish at the anchor with one sample") {
    EmbeddingState state;
    state.latents = {rand_n(1, 3, 3), rand_n(1, 3, 4)};
    state.anchors = state.latents;
    MultiplexStructure st;
    st.sample_affinity = {DenseMatrix::ones(1, 1), DenseMatrix::ones(1, 1)};
    st.modality_coupling = DenseMatrix::identity(2);
    // intra vanishes at N=1, inter since both modalities use coupling only
    // on the diagonal, regularizer since Z = anchor
    CHECK(objective_value(state, st) == 0.0);
  }
  SUBCASE("pure regularizer") {
    const std::size_t n = 4, d = 3;
    EmbeddingState state;
    state.anchors = {rand_n(n, d, 5)};
    state.latents = {add(state.anchors[0], DenseMatrix::ones(n, d))};
    MultiplexStructure st;
    st.sample_affinity = {DenseMatrix(n, n)};
    st.modality_coupling = DenseMatrix::ones(1, 1);
    CHECK(objective_value(state, st) ==
          doctest::Approx(double(n * d) / 2.0).epsilon(1e-12));
  }
  SUBCASE("random instances match the scalar-loop oracle") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      EmbeddingState state = random_state(3, 5, 4, seed);
      MultiplexStructure st = random_structure(3, 5, seed);
      CHECK(objective_value(state, st) ==
            doctest::Approx(objective_oracle(state, st)).epsilon(1e-10));
    }
  }
  SUBCASE("shape mismatch") {
    EmbeddingState state = random_state(2, 4, 3, 9);
    MultiplexStructure st = random_structure(3, 4, 9);
    CHECK_THROWS_AS(objective_value(state, st), ShapeError);
  }
}

TEST_CASE("objective_gradient: closed forms and finite differences") {
  SUBCASE("cancellation at the anchor with identity coupling") {
    const std::size_t n = 3, d = 2;
    EmbeddingState state;
    state.latents = {rand_n(n, d, 10), rand_n(n, d, 11)};
    state.anchors = state.latents;
    MultiplexStructure st;
    st.sample_affinity = {DenseMatrix(n, n), DenseMatrix(n, n)};
    st.modality_coupling = DenseMatrix::identity(2);
    for (std::size_t m = 0; m < 2; ++m) {
      DenseMatrix g = objective_gradient(state, st, m);
      CHECK(max_abs_diff(g, state.latents[m]) < 1e-14);
    }
  }
  SUBCASE("zero latents leave only the anchor pull") {
    const std::size_t n = 3, d = 2;
    EmbeddingState state;
    state.latents = {DenseMatrix(n, d)};
    state.anchors = {rand_n(n, d, 12)};
    MultiplexStructure st;
    st.sample_affinity = {stochastic_symmetric(n, 13)};
    st.modality_coupling = DenseMatrix::ones(1, 1);
    DenseMatrix g = objective_gradient(state, st, 0);
    CHECK(max_abs_diff(g, scaled(state.anchors[0], -1.0)) < 1e-14);
  }
  SUBCASE("matches central finite differences of the objective") {
    const double h = 1e-5;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      std::size_t m = 2 + seed % 3, n = 4 + seed % 5, d = 2 + seed % 4;
      EmbeddingState state = random_state(m, n, d, seed + 20);
      MultiplexStructure st = random_structure(m, n, seed + 20);
      for (std::size_t mod = 0; mod < m; ++mod) {
        DenseMatrix analytic = objective_gradient(state, st, mod);
        DenseMatrix numeric(n, d);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) {
            EmbeddingState bumped = state;
            bumped.latents[mod](i, j) += h;
            double hi = objective_value(bumped, st);
            bumped.latents[mod](i, j) -= 2.0 * h;
            double lo = objective_value(bumped, st);
            numeric(i, j) = (hi - lo) / (2.0 * h);
          }
        double denom = std::max(
            {frobenius_norm(analytic), frobenius_norm(numeric), 1e-12});
        CHECK(frobenius_norm(sub(analytic, numeric)) / denom < 1e-6);
      }
    }
  }
  SUBCASE("modality out of range") {
    EmbeddingState state = random_state(2, 3, 2, 30);
    MultiplexStructure st = random_structure(2, 3, 30);
    CHECK_THROWS_AS(objective_gradient(state, st, 2), ContractError);
  }
}

TEST_CASE("first_order_step: identities and gradient consistency") {
  EmbeddingState state = random_state(3, 5, 4, 40);
  MultiplexStructure st = random_structure(3, 5, 40);
  SUBCASE("zero step size changes nothing") {
    EmbeddingState next = first_order_step(state, st, 0.0);
    for (std::size_t m = 0; m < 3; ++m)
      CHECK(max_abs_diff(next.latents[m], state.latents[m]) == 0.0);
    CHECK(next.step_count == state.step_count + 1);
  }
  SUBCASE("one-third step with zero affinity and identity coupling") {
    EmbeddingState s2 = random_state(2, 4, 3, 41);
    MultiplexStructure st2;
    st2.sample_affinity = {DenseMatrix(4, 4), DenseMatrix(4, 4)};
    st2.modality_coupling = DenseMatrix::identity(2);
    EmbeddingState next = first_order_step(s2, st2, 1.0 / 3.0);
    for (std::size_t m = 0; m < 2; ++m) {
      DenseMatrix want = scaled(add(s2.latents[m], s2.anchors[m]), 1.0 / 3.0);
      CHECK(max_abs_diff(next.latents[m], want) < 1e-15);
    }
  }
  SUBCASE("equals an explicit gradient-descent step") {
    for (double alpha : {0.05, 0.21, 0.8}) {
      EmbeddingState next = first_order_step(state, st, alpha);
      for (std::size_t m = 0; m < 3; ++m) {
        DenseMatrix want = state.latents[m];
        axpy(want, -alpha, objective_gradient(state, st, m));
        CHECK(max_abs_diff(next.latents[m], want) < 1e-12);
      }
    }
  }
  SUBCASE("negative step size is rejected") {
    CHECK_THROWS_AS(first_order_step(state, st, -0.1), ContractError);
  }
}

TEST_CASE("max_stable_step: scalar cases and eigensolver oracle") {
  SUBCASE("single-sample closed forms") {
    MultiplexStructure st;
    st.sample_affinity = {DenseMatrix::ones(1, 1)};
    st.modality_coupling = DenseMatrix(1, 1);
    CHECK(max_stable_step(st) == doctest::Approx(1.0).epsilon(1e-12));
    st.sample_affinity = {DenseMatrix(1, 1)};
    st.modality_coupling = DenseMatrix::ones(1, 1);
    CHECK(max_stable_step(st) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("random structures match a dense SVD oracle") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      MultiplexStructure st = random_structure(3, 6, seed + 50);
      double want = 0.0;
      for (std::size_t m = 0; m < 3; ++m) {
        DenseMatrix b(6, 6);
        for (std::size_t i = 0; i < 6; ++i)
          for (std::size_t j = 0; j < 6; ++j)
            b(i, j) = (i == j ? 3.0 : 0.0) - st.sample_affinity[m](i, j) -
                      st.modality_coupling(m, m);
        double step = 2.0 / oracle::svd_spectral_norm(b);
        if (m == 0 || step < want) want = step;
      }
      CHECK(max_stable_step(st) == doctest::Approx(want).epsilon(1e-8));
    }
  }
}

TEST_CASE("newton_step_exact: fixed points, residuals, singularities") {
  SUBCASE("zero gradient is a fixed point") {
    EmbeddingState state;
    state.latents = {rand_n(2, 3, 60)};
    state.anchors = {scaled(state.latents[0], 2.0)};
    MultiplexStructure st;
    st.sample_affinity = {DenseMatrix(2, 2)};
    st.modality_coupling = DenseMatrix::ones(1, 1);
    // gradient = 3Z - Z - 2Z = 0
    CHECK(max_abs_diff(objective_gradient(state, st, 0), DenseMatrix(2, 3)) <
          1e-14);
    CHECK(max_abs_diff(newton_step_exact(state, st, 0), state.latents[0]) <
          1e-12);
  }
  SUBCASE("scalar curvature reduces to Z - g/3") {
    EmbeddingState state = random_state(2, 4, 3, 61);
    MultiplexStructure st;
    st.sample_affinity = {DenseMatrix(4, 4), DenseMatrix(4, 4)};
    st.modality_coupling = DenseMatrix(2, 2);
    st.modality_coupling(0, 1) = 1.0;
    st.modality_coupling(1, 0) = 1.0;
    for (std::size_t m = 0; m < 2; ++m) {
      DenseMatrix want = state.latents[m];
      axpy(want, -1.0 / 3.0, objective_gradient(state, st, m));
      CHECK(max_abs_diff(newton_step_exact(state, st, m), want) < 1e-12);
    }
  }
  SUBCASE("solved system has a tiny residual") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      EmbeddingState state = random_state(2, 5, 3, seed + 70);
      MultiplexStructure st = random_structure(2, 5, seed + 70);
      for (std::size_t m = 0; m < 2; ++m) {
        DenseMatrix b(5, 5);
        for (std::size_t i = 0; i < 5; ++i)
          for (std::size_t j = 0; j < 5; ++j)
            b(i, j) = (i == j ? 3.0 : 0.0) - st.sample_affinity[m](i, j) -
                      st.modality_coupling(m, m);
        DenseMatrix out = newton_step_exact(state, st, m);
        DenseMatrix x = sub(state.latents[m], out);
        DenseMatrix residual =
            sub(matmul(b, x), objective_gradient(state, st, m));
        CHECK(max_abs(residual) < 1e-10);
      }
    }
  }
  SUBCASE("structurally singular curvature is rejected") {
    // 3I - ones(3,3) has a zero eigenvalue
    EmbeddingState state = random_state(1, 3, 2, 80);
    MultiplexStructure st;
    st.sample_affinity = {DenseMatrix(3, 3)};
    st.modality_coupling = DenseMatrix::ones(1, 1);
    CHECK_THROWS_AS(newton_step_exact(state, st, 0), SingularSystemError);
  }
}

TEST_CASE("neumann_approx_inverse: closed forms and remainder bound") {
  SUBCASE("zero affinity gives the exact inverse") {
    DenseMatrix inv = neumann_approx_inverse(DenseMatrix(4, 4));
    CHECK(max_abs_diff(inv, scaled(DenseMatrix::identity(4), 1.0 / 3.0)) ==
          0.0);
  }
  SUBCASE("identity affinity has entrywise error 1/18") {
    DenseMatrix inv = neumann_approx_inverse(DenseMatrix::identity(3));
    CHECK(max_abs_diff(inv, scaled(DenseMatrix::identity(3), 4.0 / 9.0)) <
          1e-15);
    // exact inverse of 3I - I is I/2
    CHECK(max_abs_diff(inv, scaled(DenseMatrix::identity(3), 0.5)) ==
          doctest::Approx(1.0 / 18.0).epsilon(1e-12));
  }
  SUBCASE("spectral error respects the series remainder bound") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      DenseMatrix raw = rand_n(6, 6, seed + 90);
      DenseMatrix s = scaled(add(raw, transposed(raw)), 0.5);
      double norm = oracle::svd_spectral_norm(s);
      s = scaled(s, 0.9 * 3.0 / norm);  // rho = 0.9
      double rho = oracle::svd_spectral_norm(s) / 3.0;
      REQUIRE(rho < 1.0);
      DenseMatrix curvature =
          add_scaled_identity(scaled(s, -1.0), 3.0);
      DenseMatrix exact = solve_linear(curvature, DenseMatrix::identity(6));
      DenseMatrix diff = sub(neumann_approx_inverse(s), exact);
      CHECK(oracle::svd_spectral_norm(diff) <=
            (1.0 / 3.0) * rho * rho / (1.0 - rho) + 1e-10);
    }
  }
  SUBCASE("non-square input") {
    CHECK_THROWS_AS(neumann_approx_inverse(DenseMatrix(3, 4)), ShapeError);
  }
}

TEST_CASE("second_order_step: closed form, composition, descent") {
  SUBCASE("zero affinity averages pull and anchor") {
    EmbeddingState state = random_state(2, 4, 3, 100);
    MultiplexStructure st;
    st.sample_affinity = {DenseMatrix(4, 4), DenseMatrix(4, 4)};
    st.modality_coupling =
        oracle::kkt_doubly_stochastic_projection(rand_n(2, 2, 101));
    EmbeddingState next = second_order_step(state, st);
    for (std::size_t m = 0; m < 2; ++m) {
      DenseMatrix pull = state.anchors[m];
      for (std::size_t e = 0; e < 2; ++e)
        axpy(pull, st.modality_coupling(e, m), state.latents[e]);
      CHECK(max_abs_diff(next.latents[m], scaled(pull, 1.0 / 3.0)) < 1e-14);
    }
  }
  SUBCASE("matches the truncated-inverse composition") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      EmbeddingState state = random_state(3, 5, 4, seed + 110);
      MultiplexStructure st = random_structure(3, 5, seed + 110);
      EmbeddingState next = second_order_step(state, st);
      for (std::size_t m = 0; m < 3; ++m) {
        DenseMatrix want = state.latents[m];
        DenseMatrix corr =
            matmul(neumann_approx_inverse(st.sample_affinity[m]),
                   objective_gradient(state, st, m));
        axpy(want, -1.0, corr);
        CHECK(max_abs_diff(next.latents[m], want) < 1e-10);
      }
    }
  }
  SUBCASE("ten steps never increase the objective on a clean structure") {
    // hand-built nonnegative symmetric affinities with unit row sums and a
    // positive-definite coupling
    MultiplexStructure st;
    DenseMatrix s(3, 3);
    s(0, 0) = 0.5; s(0, 1) = 0.3; s(0, 2) = 0.2;
    s(1, 0) = 0.3; s(1, 1) = 0.4; s(1, 2) = 0.3;
    s(2, 0) = 0.2; s(2, 1) = 0.3; s(2, 2) = 0.5;
    st.sample_affinity = {s, DenseMatrix::identity(3)};
    DenseMatrix p(2, 2);
    p(0, 0) = 0.6; p(0, 1) = 0.4;
    p(1, 0) = 0.4; p(1, 1) = 0.6;
    st.modality_coupling = p;

    EmbeddingState state = random_state(2, 3, 4, 120);
    double prev = objective_value(state, st);
    for (int step = 0; step < 10; ++step) {
      StepDiagnostics diag;
      EmbeddingState next = second_order_step(state, st, &diag);
      CHECK(diag.objective_before == doctest::Approx(prev).epsilon(1e-14));
      CHECK(diag.objective_after <= prev * (1.0 + 1e-8) + 1e-12);
      CHECK(diag.step_size_used == 1.0);
      CHECK(diag.bound > 0.0);
      CHECK(diag.spectral_radius_S_over_3 ==
            doctest::Approx(1.0 / 3.0).epsilon(1e-9));
      prev = diag.objective_after;
      state = std::move(next);
    }
    CHECK(state.step_count == 10);
  }
  SUBCASE("relabeling samples commutes with the step") {
    EmbeddingState state = random_state(2, 5, 3, 130);
    MultiplexStructure st = random_structure(2, 5, 130);
    std::vector<std::size_t> perm = {3, 0, 4, 1, 2};

    auto permute_rows = [&](const DenseMatrix& z) {
      DenseMatrix out(z.rows(), z.cols());
      for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t j = 0; j < z.cols(); ++j)
          out(i, j) = z(perm[i], j);
      return out;
    };
    auto conjugate = [&](const DenseMatrix& s) {
      DenseMatrix out(s.rows(), s.cols());
      for (std::size_t i = 0; i < s.rows(); ++i)
        for (std::size_t j = 0; j < s.cols(); ++j)
          out(i, j) = s(perm[i], perm[j]);
      return out;
    };

    EmbeddingState pstate;
    MultiplexStructure pst;
    for (std::size_t m = 0; m < 2; ++m) {
      pstate.latents.push_back(permute_rows(state.latents[m]));
      pstate.anchors.push_back(permute_rows(state.anchors[m]));
      pst.sample_affinity.push_back(conjugate(st.sample_affinity[m]));
    }
    pst.modality_coupling = st.modality_coupling;

    EmbeddingState next = second_order_step(state, st);
    EmbeddingState pnext = second_order_step(pstate, pst);
    for (std::size_t m = 0; m < 2; ++m)
      CHECK(max_abs_diff(pnext.latents[m], permute_rows(next.latents[m])) <
            1e-12);
  }
}
