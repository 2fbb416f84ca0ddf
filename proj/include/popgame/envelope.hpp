#pragma once

#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "popgame/population.hpp"

namespace popgame {

/// J(x) in conv{A_1..A_k}.
struct ConvHullEnvelope {
  std::vector<Matrix> vertices;
};

/// J(x) in cone{B_1..B_s}.
struct ConeEnvelope {
  std::vector<Matrix> generators;
};

/// Rank-factored box term G_i = C_i D_i^T with C_i, D_i of size n x rank.
struct BoxTerm {
  Matrix C;
  Matrix D;
  int rank() const { return static_cast<int>(C.cols()); }
  Matrix product() const { return C * D.transpose(); }
};

/// J(x) in {G_0 + sum_i gamma_i G_i : gamma_i in [0, 1]}.
struct BoxEnvelope {
  Matrix g0;
  std::vector<BoxTerm> terms;

  int d() const { return static_cast<int>(terms.size()); }
  int total_rank() const {
    int k = 0;
    for (const auto& t : terms) k += t.rank();
    return k;
  }

  /// C = [C_1 ... C_d]
  Matrix stacked_c() const { return stack(true); }
  /// D = [D_1 ... D_d]
  Matrix stacked_d() const { return stack(false); }

  Matrix at(const Vector& gamma) const {
    if (gamma.size() != d()) throw std::invalid_argument("BoxEnvelope::at: gamma has wrong length");
    Matrix j = g0;
    for (int i = 0; i < d(); ++i) j += gamma(i) * terms[i].product();
    return j;
  }

  /// All 2^d vertices gamma in {0,1}^d, bit i of the index selecting term i.
  std::vector<Matrix> corners() const {
    if (d() > 20) throw std::invalid_argument("BoxEnvelope::corners: too many terms to enumerate");
    std::vector<Matrix> out;
    out.reserve(std::size_t{1} << d());
    for (unsigned mask = 0; mask < (1u << d()); ++mask) {
      Vector gamma(d());
      for (int i = 0; i < d(); ++i) gamma(i) = (mask >> i) & 1u ? 1.0 : 0.0;
      out.push_back(at(gamma));
    }
    return out;
  }

 private:
  Matrix stack(bool c) const {
    Matrix out(g0.rows(), total_rank());
    int col = 0;
    for (const auto& t : terms) {
      out.middleCols(col, t.rank()) = c ? t.C : t.D;
      col += t.rank();
    }
    return out;
  }
};

/// J(x) in conv{A_i} + cone{B_i}.
struct SumEnvelope {
  ConvHullEnvelope hull;
  ConeEnvelope cone;
};

using JacobianEnvelope = std::variant<ConvHullEnvelope, ConeEnvelope, BoxEnvelope, SumEnvelope>;

inline const char* envelope_name(const JacobianEnvelope& e) {
  switch (e.index()) {
    case 0: return "convhull";
    case 1: return "cone";
    case 2: return "box";
    default: return "sum";
  }
}

/// Throws std::invalid_argument unless every matrix is n x n and every box
/// factor pair has matching n x rank shapes.
inline void validate_envelope(const JacobianEnvelope& env, int n) {
  auto square = [n](const Matrix& m, const std::string& what) {
    if (m.rows() != n || m.cols() != n) {
      throw std::invalid_argument("envelope: " + what + " must be " + std::to_string(n) + "x" +
                                  std::to_string(n));
    }
  };
  std::visit(
      [&](const auto& e) {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, ConvHullEnvelope>) {
          if (e.vertices.empty()) throw std::invalid_argument("envelope: empty convex hull");
          for (const auto& a : e.vertices) square(a, "vertex");
        } else if constexpr (std::is_same_v<T, ConeEnvelope>) {
          for (const auto& b : e.generators) square(b, "generator");
        } else if constexpr (std::is_same_v<T, BoxEnvelope>) {
          square(e.g0, "G0");
          for (const auto& t : e.terms) {
            if (t.C.rows() != n || t.D.rows() != n || t.C.cols() != t.D.cols() || t.C.cols() < 1) {
              throw std::invalid_argument("envelope: box factors C_i, D_i must both be n x rank");
            }
          }
        } else {
          if (e.hull.vertices.empty()) throw std::invalid_argument("envelope: empty convex hull");
          for (const auto& a : e.hull.vertices) square(a, "vertex");
          for (const auto& b : e.cone.generators) square(b, "generator");
        }
      },
      env);
}

}  // namespace popgame
