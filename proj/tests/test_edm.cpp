#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "popgame/edm.hpp"
#include "popgame/numeric.hpp"

using namespace popgame;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) out(i++) = d;
  return out;
}

const PopulationStructure kPair({2}, {1.0});

// True when every payoff difference within a population is at least gap away from 0.
bool away_from_kinks(const PopulationStructure& s, const Vector& p, double gap) {
  for (int r = 0; r < s.populations(); ++r)
    for (int i = s.offset(r); i < s.offset(r) + s.count(r); ++i)
      for (int j = s.offset(r); j < i; ++j)
        if (std::abs(p(i) - p(j)) < gap) return false;
  return true;
}

}  // namespace

TEST(SwitchRate, SignAndAntiderivative) {
  for (const SwitchRate& phi : {SwitchRate::smith(), SwitchRate::power(2.0), SwitchRate::power(0.5)}) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> unif(-5.0, 5.0);
    for (int k = 0; k < 200; ++k) {
      const double s = unif(rng);
      if (s <= 0) {
        EXPECT_EQ(phi.rate(s), 0.0);
      } else {
        EXPECT_GT(phi.rate(s), 0.0);
      }
      if (std::abs(s) < 1e-3) continue;
      const double h = 1e-6;
      const double d = (phi.integral(s + h) - phi.integral(s - h)) / (2 * h);
      EXPECT_NEAR(d, phi.rate(s), 1e-6) << phi.name() << " at " << s;
    }
  }
}

TEST(SwitchRate, QuadratureMatchesClosedForm) {
  const SwitchRate cubic("cubic", [](double s) { return s > 0 ? s * s * s : 0.0; });
  EXPECT_FALSE(cubic.has_closed_form());
  EXPECT_NEAR(cubic.integral(2.0), 4.0, 1e-9);
  EXPECT_EQ(cubic.integral(-1.0), 0.0);
  EXPECT_THROW(SwitchRate::power(0.0), std::invalid_argument);
}

TEST(IpcVelocity, SmithHandValues) {
  const IpcProtocol smith = IpcProtocol::smith(kPair);
  EXPECT_LE((smith.velocity(vec({1, 0}), vec({0, 1})) - vec({-1, 1})).norm(), 1e-15);
  EXPECT_LE((smith.velocity(vec({0.5, 0.5}), vec({0, 1})) - vec({-0.5, 0.5})).norm(), 1e-15);
}

TEST(IpcVelocity, ConstantPayoffIsRest) {
  const PopulationStructure s({3, 2}, {1.0, 2.0});
  const IpcProtocol edm(s, SwitchRate::power(2.0));
  const Vector v = edm.velocity(vec({0.2, 0.3, 0.5, 1.5, 0.5}), vec({4, 4, 4, -1, -1}));
  EXPECT_EQ(v.norm(), 0.0);
}

TEST(IpcVelocity, DimensionMismatchThrows) {
  const IpcProtocol smith = IpcProtocol::smith(kPair);
  EXPECT_THROW(smith.velocity(vec({1, 0, 0}), vec({0, 1})), std::invalid_argument);
  EXPECT_THROW(smith.velocity(vec({1, 0}), vec({0})), std::invalid_argument);
}

TEST(IpcVelocity, TangentAndForwardInvariant) {
  const PopulationStructure s({3, 2, 4}, {1.0, 0.5, 2.0});
  std::mt19937_64 rng(4);
  for (const IpcProtocol& edm : {IpcProtocol::smith(s), IpcProtocol(s, SwitchRate::power(2.0))}) {
    for (int k = 0; k < 500; ++k) {
      Vector x = sample_social_state(s, rng);
      if (k % 3 == 0) {
        // push mass off one strategy per population
        for (int r = 0; r < s.populations(); ++r) {
          const int i = s.offset(r);
          x(i + 1) += x(i);
          x(i) = 0.0;
        }
      }
      const Vector p = detail::normal_vector(s.strategies(), 3.0, rng);
      const Vector nu = edm.velocity(x, p);
      EXPECT_TRUE(is_tangent(s, nu, 1e-12));
      for (int i = 0; i < nu.size(); ++i) {
        if (x(i) == 0.0) {
          EXPECT_GE(nu(i), -1e-12);
        }
      }
    }
  }
}

TEST(IpcStorage, SmithHandValues) {
  const IpcProtocol smith = IpcProtocol::smith(kPair);
  EXPECT_DOUBLE_EQ(smith.storage(vec({1, 0}), vec({0, 1})), 0.5);
  EXPECT_DOUBLE_EQ(smith.storage(vec({0.5, 0.5}), vec({0, 1})), 0.25);
  EXPECT_EQ(smith.storage(vec({0.3, 0.7}), vec({2, 2})), 0.0);
}

TEST(IpcSigma, SmithHandValues) {
  const IpcProtocol smith = IpcProtocol::smith(kPair);
  EXPECT_DOUBLE_EQ(smith.sigma(vec({1, 0}), vec({0, 1})), 0.5);
  EXPECT_DOUBLE_EQ(smith.sigma(vec({0.5, 0.5}), vec({0, 1})), 0.25);
  EXPECT_EQ(smith.sigma(vec({0.3, 0.7}), vec({2, 2})), 0.0);
}

TEST(StorageGradients, HandValues) {
  const IpcProtocol smith = IpcProtocol::smith(kPair);
  const StorageGradients g = smith.storage_gradients(vec({1, 0}), vec({0, 1}));
  EXPECT_LE((g.dx - vec({0.5, 0})).norm(), 1e-15);
  const StorageGradients flat = smith.storage_gradients(vec({0.4, 0.6}), vec({3, 3}));
  EXPECT_EQ(flat.dp.norm(), 0.0);
}

TEST(StorageGradients, MatchFiniteDifferences) {
  const PopulationStructure s({3, 2}, {1.0, 1.5});
  const Vector w = vec({2.0, 3.0});
  std::mt19937_64 rng(8);
  for (const IpcProtocol& edm : {IpcProtocol::smith(s), IpcProtocol(s, SwitchRate::power(2.0))}) {
    int checked = 0;
    while (checked < 100) {
      const Vector x = sample_social_state(s, rng);
      const Vector p = detail::normal_vector(s.strategies(), 3.0, rng);
      if (!away_from_kinks(s, p, 1e-4)) continue;
      ++checked;
      const StorageGradients g = edm.storage_gradients(x, p, w);
      const Vector fx = numeric::fd_gradient([&](const Vector& y) { return edm.storage(y, p, w); }, x);
      const Vector fp = numeric::fd_gradient([&](const Vector& q) { return edm.storage(x, q, w); }, p);
      EXPECT_LE((fx - g.dx).norm(), 1e-5 * std::max(1.0, g.dx.norm()));
      EXPECT_LE((fp - g.dp).norm(), 1e-5 * std::max(1.0, g.dp.norm()));
    }
  }
}

TEST(DeltaDissipativity, SmithUnitWeights) {
  const PopulationStructure s({2, 3}, {1.0, 1.0});
  const IpcProtocol smith = IpcProtocol::smith(s);
  const DissipativityReport r = verify_delta_dissipativity(smith, SupplyRate::delta_passive(s));
  EXPECT_EQ(r.samples, 1000);
  EXPECT_TRUE(r.passed()) << "worst slack " << r.worst_slack;
  EXPECT_GE(r.worst_slack, -1e-8);
}

TEST(DeltaDissipativity, WeightedPowerProtocol) {
  const PopulationStructure s({2, 2}, {1.0, 1.0});
  const IpcProtocol edm(s, SwitchRate::power(2.0));
  const Vector w = vec({2.0, 3.0});
  DissipativityOptions o;
  o.weights = w;
  const DissipativityReport r = verify_delta_dissipativity(edm, SupplyRate::delta_passive(s, w), o);
  EXPECT_TRUE(r.passed()) << "worst slack " << r.worst_slack;
}

TEST(DeltaDissipativity, ZeroInputConstantPayoffIsTight) {
  const PopulationStructure s({3}, {1.0});
  const IpcProtocol smith = IpcProtocol::smith(s);
  const Vector x = vec({0.2, 0.5, 0.3}), p = vec({1, 1, 1}), u = Vector::Zero(3);
  const Vector nu = smith.velocity(x, p);
  const StorageGradients g = smith.storage_gradients(x, p);
  EXPECT_EQ(g.dx.dot(nu) + g.dp.dot(u), 0.0);
  EXPECT_EQ(-smith.sigma(x, p) + SupplyRate::delta_passive(s).evaluate(u, nu), 0.0);
}

TEST(DeltaDissipativity, EquivalencesOverManySamples) {
  const PopulationStructure s({3, 2}, {1.0, 2.0});
  DissipativityOptions o;
  o.samples = 10000;
  o.seed = 21;
  const DissipativityReport r = verify_delta_dissipativity(IpcProtocol::smith(s), SupplyRate::delta_passive(s), o);
  EXPECT_EQ(r.equivalence_violations, 0);
  EXPECT_EQ(r.negativity_violations, 0);
  EXPECT_EQ(r.inequality_violations, 0);
}

TEST(DeltaDissipativity, SignFlipIsCaught) {
  const PopulationStructure s({2, 2}, {1.0, 1.0});
  const IpcProtocol smith = IpcProtocol::smith(s);
  const DissipativityReport r = verify_delta_dissipativity(SigmaSignFlip(smith), SupplyRate::delta_passive(s));
  EXPECT_FALSE(r.passed());
  EXPECT_GT(r.negativity_violations, 0);
}

TEST(DeltaDissipativity, DimensionMismatchThrows) {
  const IpcProtocol smith = IpcProtocol::smith(kPair);
  EXPECT_THROW(verify_delta_dissipativity(smith, SupplyRate::delta_passive(PopulationStructure({3}, {1.0}))),
               std::invalid_argument);
}

TEST(NashGap, HandValues) {
  EXPECT_EQ(nash_gap(kPair, vec({1, 0}), vec({0, 1})), 1.0);
  EXPECT_EQ(nash_gap(kPair, vec({0, 1}), vec({0, 1})), 0.0);
  const PopulationStructure s({2, 2}, {1.0, 3.0});
  EXPECT_EQ(nash_gap(s, vec({0.5, 0.5, 1, 2}), vec({2, 2, -1, -1})), 0.0);
}

TEST(NashGap, StationarityMatchesIpcRest) {
  const PopulationStructure s({3, 2}, {1.0, 1.0});
  const IpcProtocol smith = IpcProtocol::smith(s);
  const IpcProtocol power(s, SwitchRate::power(2.0));
  std::mt19937_64 rng(13);
  for (int k = 0; k < 2000; ++k) {
    const Vector p = detail::normal_vector(s.strategies(), 3.0, rng);
    const Vector x = k % 2 ? detail::best_response_state(s, p) : sample_social_state(s, rng);
    const bool nash = nash_gap(s, x, p) < 1e-8;
    EXPECT_EQ(smith.velocity(x, p).norm() < 1e-10, nash);
    EXPECT_EQ(power.velocity(x, p).norm() < 1e-10, nash);
  }
}
