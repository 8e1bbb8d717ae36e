#pragma once

#include <array>
#include <string>
#include <vector>

#include "microforge/image.hpp"
#include "microforge/metrology.hpp"

namespace microforge::homog {

struct Material2D {
  double e_solid = 1.0;
  double nu_solid = 0.3;
  /// Void stiffness relative to the solid; the void phase shares nu_solid.
  double contrast = 1e-6;
  bool plane_strain = false;

  void validate() const;
};

/// 3x3 constitutive matrix (engineering shear strain), row-major.
using Matrix3 = std::array<double, 9>;

Matrix3 constitutive(double e, double nu, bool plane_strain);

struct EffectiveElasticity {
  Matrix3 c_eff{};
  double e = 0.0;
  double nu = 0.0;
  /// C11 / C22.
  double anisotropy = 0.0;
  /// Largest final relative residual over the three cell problems.
  double residual = 0.0;
  int iterations = 0;
};

/// Jacobi needs tens of thousands of CG iterations on high-contrast masks
/// near percolation; a sparse Cholesky factor of the stiffness converges in
/// one or two.
enum class Preconditioner { Cholesky, Jacobi };
std::string to_string(Preconditioner p);
Preconditioner parse_preconditioner(const std::string& s);

struct SolverOptions {
  double tol = 1e-8;
  /// 0 picks a size-dependent default.
  int max_iterations = 0;
  Preconditioner preconditioner = Preconditioner::Cholesky;
};

/// Periodic cell problems under unit macroscopic strains xx, yy, xy on one
/// bilinear element per pixel; E and nu come from the compliance S = C^-1.
EffectiveElasticity homogenize(const BinaryMask& mask, const Material2D& mat, const SolverOptions& opt = {});

/// Mixture bounds on E for solid fraction f under the same constitutive law.
double voigt_modulus(double solid_fraction, const Material2D& mat);
double reuss_modulus(double solid_fraction, const Material2D& mat);

/// Metrics "E" and "nu" over the set.
metrology::SampleStats evaluate_set(const std::vector<BinaryMask>& masks, const Material2D& mat,
                                    const SolverOptions& opt = {});

}  // namespace microforge::homog
