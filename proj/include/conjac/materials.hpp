#pragma once

#include <cmath>
#include <memory>
#include <string>

#include "common.hpp"

namespace conjac {

struct MaterialParams {
  double young = 1e4;     // Pa
  double poisson = 0.4;
  double fiber_stiffness = 0.0;  // Pa, anisotropic reinforcement, 0 disables
  Vec3 fiber_dir = Vec3::UnitX();

  double mu_lame() const { return young / (2.0 * (1.0 + poisson)); }
  double lambda_lame() const {
    return young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
  }

  void validate() const {
    if (young <= 0.0) throw ConfigError("Young's modulus must be positive");
    if (poisson < 0.0 || poisson >= 0.5) throw ConfigError("Poisson's ratio must be in [0, 0.5)");
    if (fiber_stiffness < 0.0) throw ConfigError("fiber stiffness must be non-negative");
    if (fiber_stiffness > 0.0 && fiber_dir.norm() < 1e-12)
      throw ConfigError("fiber direction must be a nonzero vector");
  }
};

// First Piola-Kirchhoff constitutive interface. pk1_gradient returns dP/dF as
// a symmetric 9x9 acting on vec(dF) (column-major).
class MaterialModel {
 public:
  virtual ~MaterialModel() = default;
  virtual double energy_density(const Mat3& F) const = 0;
  virtual Mat3 pk1_stress(const Mat3& F) const = 0;
  virtual Mat9 pk1_gradient(const Mat3& F) const = 0;
};

// d(cof F)/dF as a 9x9. Writing f0,f1,f2 for the columns of F, the blocks are
// cross-product matrices of the columns; the result is symmetric.
inline Mat9 cofactor_gradient(const Mat3& F) {
  const Mat3 h0 = hat(F.col(0)), h1 = hat(F.col(1)), h2 = hat(F.col(2));
  Mat9 g = Mat9::Zero();
  g.block<3, 3>(0, 3) = -h2;
  g.block<3, 3>(0, 6) = h1;
  g.block<3, 3>(3, 0) = h2;
  g.block<3, 3>(3, 6) = -h0;
  g.block<3, 3>(6, 0) = -h1;
  g.block<3, 3>(6, 3) = h0;
  return g;
}

inline Mat3 cofactor(const Mat3& F) {
  Mat3 c;
  c.col(0) = F.col(1).cross(F.col(2));
  c.col(1) = F.col(2).cross(F.col(0));
  c.col(2) = F.col(0).cross(F.col(1));
  return c;
}

// Neo-Hookean variant that stays finite for det F <= 0: the log barrier acts
// on I_C = tr(F^T F) instead of J, and the volume term is a plain quadratic.
//   Psi = mu/2 (I_C - 3) - mu/2 log(I_C + 1) + lambda/2 (J - alpha)^2
// The constants are reparameterized from the Lame pair so that the rest state
// carries zero stress and the rest Hessian reproduces linear elasticity for
// the given (Y, nu): mu = 4/3 mu_L, lambda = lambda_L + 5/6 mu_L,
// alpha = 1 + mu_L / lambda.
class StableNeoHookean : public MaterialModel {
 public:
  explicit StableNeoHookean(const MaterialParams& p) {
    p.validate();
    const double mu_l = p.mu_lame();
    mu_ = 4.0 / 3.0 * mu_l;
    lambda_ = p.lambda_lame() + 5.0 / 6.0 * mu_l;
    alpha_ = 1.0 + mu_l / lambda_;
  }

  double energy_density(const Mat3& F) const override {
    const double ic = F.squaredNorm();
    const double j = F.determinant();
    return 0.5 * mu_ * (ic - 3.0) - 0.5 * mu_ * std::log(ic + 1.0) +
           0.5 * lambda_ * (j - alpha_) * (j - alpha_);
  }

  Mat3 pk1_stress(const Mat3& F) const override {
    const double ic = F.squaredNorm();
    const double j = F.determinant();
    return mu_ * (1.0 - 1.0 / (ic + 1.0)) * F + lambda_ * (j - alpha_) * cofactor(F);
  }

  Mat9 pk1_gradient(const Mat3& F) const override {
    const double ic = F.squaredNorm();
    const double j = F.determinant();
    const Vec9 f = vec(F);
    const Vec9 g = vec(cofactor(F));
    Mat9 h = mu_ * (1.0 - 1.0 / (ic + 1.0)) * Mat9::Identity();
    h += (2.0 * mu_ / ((ic + 1.0) * (ic + 1.0))) * f * f.transpose();
    h += lambda_ * g * g.transpose();
    h += lambda_ * (j - alpha_) * cofactor_gradient(F);
    return h;
  }

 private:
  double mu_, lambda_, alpha_;
};

// Small-strain elasticity on the symmetric part of F - I. Constant Hessian,
// used as the oracle for the stabilization and drift checks.
class LinearElastic : public MaterialModel {
 public:
  explicit LinearElastic(const MaterialParams& p) : mu_(p.mu_lame()), lambda_(p.lambda_lame()) {
    p.validate();
  }

  double energy_density(const Mat3& F) const override {
    const Mat3 eps = 0.5 * (F + F.transpose()) - Mat3::Identity();
    return mu_ * eps.squaredNorm() + 0.5 * lambda_ * eps.trace() * eps.trace();
  }

  Mat3 pk1_stress(const Mat3& F) const override {
    const Mat3 eps = 0.5 * (F + F.transpose()) - Mat3::Identity();
    return 2.0 * mu_ * eps + lambda_ * eps.trace() * Mat3::Identity();
  }

  Mat9 pk1_gradient(const Mat3& F) const override {
    (void)F;
    Mat9 h = mu_ * Mat9::Identity();
    // Transpose permutation: dP picks up mu * dF^T.
    for (int c = 0; c < 3; ++c)
      for (int r = 0; r < 3; ++r) h(r + 3 * c, c + 3 * r) += mu_;
    const Vec9 id = vec(Mat3::Identity());
    h += lambda_ * id * id.transpose();
    return h;
  }

 private:
  double mu_, lambda_;
};

// St.Venant-Kirchhoff style fiber reinforcement along a unit direction a:
//   Psi_f = k/2 (|Fa|^2 - 1)^2
// added on top of an isotropic base model.
class FiberReinforced : public MaterialModel {
 public:
  FiberReinforced(std::shared_ptr<const MaterialModel> base, const MaterialParams& p)
      : base_(std::move(base)), k_(p.fiber_stiffness), a_(p.fiber_dir.normalized()) {
    if (k_ <= 0.0) throw ConfigError("fiber reinforcement needs a positive stiffness");
  }

  double energy_density(const Mat3& F) const override {
    const double ia = (F * a_).squaredNorm();
    return base_->energy_density(F) + 0.5 * k_ * (ia - 1.0) * (ia - 1.0);
  }

  Mat3 pk1_stress(const Mat3& F) const override {
    const double ia = (F * a_).squaredNorm();
    return base_->pk1_stress(F) + 2.0 * k_ * (ia - 1.0) * F * a_ * a_.transpose();
  }

  Mat9 pk1_gradient(const Mat3& F) const override {
    const double ia = (F * a_).squaredNorm();
    const Mat3 faa = F * a_ * a_.transpose();
    const Vec9 u = vec(faa);
    Mat9 h = base_->pk1_gradient(F) + 4.0 * k_ * u * u.transpose();
    // vec(dF a a^T) = (a a^T kron I3) vec(dF)
    const Mat3 aat = a_ * a_.transpose();
    const double s = 2.0 * k_ * (ia - 1.0);
    for (int c = 0; c < 3; ++c)
      for (int r = 0; r < 3; ++r)
        h.block<3, 3>(3 * r, 3 * c) += s * aat(c, r) * Mat3::Identity();
    return h;
  }

 private:
  std::shared_ptr<const MaterialModel> base_;
  double k_;
  Vec3 a_;
};

// name: "snh", "linear" or "snh+fiber"
inline std::shared_ptr<const MaterialModel> make_material(const std::string& name,
                                                          const MaterialParams& params) {
  params.validate();
  if (name == "snh") return std::make_shared<StableNeoHookean>(params);
  if (name == "linear") return std::make_shared<LinearElastic>(params);
  if (name == "snh+fiber")
    return std::make_shared<FiberReinforced>(std::make_shared<StableNeoHookean>(params), params);
  throw ConfigError("unknown material: " + name);
}

}  // namespace conjac
