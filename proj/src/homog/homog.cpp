#include "microforge/homog.hpp"

#include <cmath>
#include <functional>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "microforge/parallel.hpp"

namespace microforge::homog {

namespace {

using Mat8 = Eigen::Matrix<double, 8, 8>;
using Mat38 = Eigen::Matrix<double, 3, 8>;
using Mat3 = Eigen::Matrix3d;

Mat3 to_eigen(const Matrix3& m) {
  Mat3 out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out(i, j) = m[i * 3 + j];
  return out;
}

// Strain-displacement matrix of the unit bilinear square at (x, y); local
// nodes (0,0), (1,0), (1,1), (0,1).
Mat38 strain_matrix(double x, double y) {
  const double dx[4] = {-(1 - y), (1 - y), y, -y};
  const double dy[4] = {-(1 - x), -x, x, (1 - x)};
  Mat38 b = Mat38::Zero();
  for (int a = 0; a < 4; ++a) {
    b(0, 2 * a) = dx[a];
    b(1, 2 * a + 1) = dy[a];
    b(2, 2 * a) = dy[a];
    b(2, 2 * a + 1) = dx[a];
  }
  return b;
}

struct ElementOps {
  Mat8 k;        // stiffness at unit modulus
  Mat38 b_mean;  // integral of B over the element
};

ElementOps element_ops(const Mat3& d_unit) {
  ElementOps ops;
  ops.k.setZero();
  const double g = 0.5 / std::sqrt(3.0);
  for (double x : {0.5 - g, 0.5 + g})
    for (double y : {0.5 - g, 0.5 + g}) {
      const Mat38 b = strain_matrix(x, y);
      ops.k += 0.25 * b.transpose() * d_unit * b;
    }
  ops.b_mean = strain_matrix(0.5, 0.5);
  return ops;
}

struct Pcg {
  int iterations = 0;
  double residual = 0.0;
};

using SparseMat = Eigen::SparseMatrix<double, Eigen::ColMajor>;
using ApplyPreconditioner = std::function<void(const Eigen::VectorXd& r, Eigen::VectorXd& z)>;

// Preconditioned CG; convergence is measured against `scale`, the norm of the
// uncancelled element loads, so cells whose load vanishes by symmetry still
// terminate.
Pcg solve_pcg(const SparseMat& a, const ApplyPreconditioner& precond, const Eigen::VectorXd& b, Eigen::VectorXd& x,
              double scale, double tol, int max_it) {
  x.setZero(b.size());
  Eigen::VectorXd r = b;
  Pcg out;
  const double ref = std::max(scale, 1e-300);
  out.residual = r.norm() / ref;
  if (out.residual <= tol) return out;
  Eigen::VectorXd z(b.size());
  precond(r, z);
  Eigen::VectorXd p = z;
  double rz = r.dot(z);
  Eigen::VectorXd ap(b.size());
  for (int it = 1; it <= max_it; ++it) {
    ap.noalias() = a * p;
    const double pap = p.dot(ap);
    if (!(pap > 0.0) || !std::isfinite(pap)) fail(Errc::SingularSystem, "CG lost positive definiteness");
    const double alpha = rz / pap;
    x.noalias() += alpha * p;
    r.noalias() -= alpha * ap;
    out.iterations = it;
    out.residual = r.norm() / ref;
    if (out.residual <= tol) return out;
    precond(r, z);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  fail(Errc::NotConverged, "CG stopped after " + std::to_string(max_it) + " iterations at relative residual " +
                               std::to_string(out.residual));
}

}  // namespace

std::string to_string(Preconditioner p) { return p == Preconditioner::Cholesky ? "cholesky" : "jacobi"; }

Preconditioner parse_preconditioner(const std::string& s) {
  if (s == "cholesky") return Preconditioner::Cholesky;
  if (s == "jacobi") return Preconditioner::Jacobi;
  fail(Errc::ConfigInvalid, "unknown preconditioner '" + s + "' (cholesky | jacobi)");
}

void Material2D::validate() const {
  if (!(e_solid > 0.0)) fail(Errc::ConfigInvalid, "e_solid must be positive");
  if (!(nu_solid >= 0.0 && nu_solid < 0.5)) fail(Errc::ConfigInvalid, "nu_solid must lie in [0, 0.5)");
  if (!(contrast > 0.0 && contrast <= 1.0)) fail(Errc::ConfigInvalid, "contrast must lie in (0, 1]");
}

Matrix3 constitutive(double e, double nu, bool plane_strain) {
  if (plane_strain) {
    const double f = e / ((1 + nu) * (1 - 2 * nu));
    return {f * (1 - nu), f * nu, 0, f * nu, f * (1 - nu), 0, 0, 0, f * (1 - 2 * nu) / 2};
  }
  const double f = e / (1 - nu * nu);
  return {f, f * nu, 0, f * nu, f, 0, 0, 0, f * (1 - nu) / 2};
}

EffectiveElasticity homogenize(const BinaryMask& mask, const Material2D& mat, const SolverOptions& opt) {
  mat.validate();
  const int w = mask.width(), h = mask.height();
  if (w < 1 || h < 1) fail(Errc::ConfigInvalid, "empty mask");
  if (!(opt.tol > 0.0 && opt.tol <= 1e-3)) fail(Errc::ConfigInvalid, "tol must lie in (0, 1e-3]");

  const Mat3 d_unit = to_eigen(constitutive(1.0, mat.nu_solid, mat.plane_strain));
  const ElementOps ops = element_ops(d_unit);
  const int nodes = w * h;
  const int ndof = 2 * nodes;
  auto node = [&](int r, int c) { return ((r % h) * w + (c % w)); };
  auto modulus = [&](int r, int c) { return mask.at(r, c) ? mat.e_solid : mat.e_solid * mat.contrast; };
  auto element_dofs = [&](int r, int c) {
    const int n[4] = {node(r, c), node(r, c + 1), node(r + 1, c + 1), node(r + 1, c)};
    std::array<int, 8> d{};
    for (int a = 0; a < 4; ++a) {
      d[2 * a] = 2 * n[a];
      d[2 * a + 1] = 2 * n[a] + 1;
    }
    return d;
  };
  // Node 0 is pinned to remove rigid translations.
  auto pinned = [](int dof) { return dof < 2; };

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(w) * h * 64 + 2);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const auto d = element_dofs(r, c);
      const double e = modulus(r, c);
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
          if (!pinned(d[i]) && !pinned(d[j])) trip.emplace_back(d[i], d[j], e * ops.k(i, j));
    }
  trip.emplace_back(0, 0, 1.0);
  trip.emplace_back(1, 1, 1.0);
  SparseMat k(ndof, ndof);
  k.setFromTriplets(trip.begin(), trip.end());

  Eigen::SimplicialLLT<SparseMat> llt;
  Eigen::VectorXd inv_diag;
  ApplyPreconditioner precond;
  if (opt.preconditioner == Preconditioner::Cholesky) {
    llt.compute(k);
    if (llt.info() != Eigen::Success) fail(Errc::SingularSystem, "stiffness factorisation failed");
    precond = [&](const Eigen::VectorXd& r, Eigen::VectorXd& z) { z = llt.solve(r); };
  } else {
    inv_diag = k.diagonal().cwiseInverse();
    precond = [&](const Eigen::VectorXd& r, Eigen::VectorXd& z) { z = inv_diag.cwiseProduct(r); };
  }

  const int max_it = opt.max_iterations > 0 ? opt.max_iterations : std::max(2000, 40 * (w + h) * 10);
  const double area = static_cast<double>(w) * h;
  EffectiveElasticity out;
  std::array<Eigen::VectorXd, 3> u;
  for (int load = 0; load < 3; ++load) {
    Eigen::Vector3d strain = Eigen::Vector3d::Zero();
    strain(load) = 1.0;
    Eigen::VectorXd f = Eigen::VectorXd::Zero(ndof);
    const Eigen::Matrix<double, 8, 1> fe_unit = -ops.b_mean.transpose() * d_unit * strain;
    double scale_sq = 0.0;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const auto d = element_dofs(r, c);
        const double e = modulus(r, c);
        for (int i = 0; i < 8; ++i)
          if (!pinned(d[i])) f(d[i]) += e * fe_unit(i);
        scale_sq += e * e * fe_unit.squaredNorm();
      }
    const Pcg sol = solve_pcg(k, precond, f, u[load], std::sqrt(scale_sq), opt.tol, max_it);
    out.iterations = std::max(out.iterations, sol.iterations);
    out.residual = std::max(out.residual, sol.residual);
  }

  // Energy form: C_ij = <(e_i + B u_i)^T D (e_j + B u_j)>. Symmetric by
  // construction and equal to the averaged stress at the exact solution.
  Mat3 c_eff = Mat3::Zero();
  std::array<Eigen::Matrix<double, 8, 1>, 3> ue;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const auto d = element_dofs(r, c);
      for (int l = 0; l < 3; ++l)
        for (int i = 0; i < 8; ++i) ue[l](i) = u[l](d[i]);
      Mat3 local;
      for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j)
          local(i, j) = d_unit(i, j) + d_unit.row(i).dot(ops.b_mean * ue[j]) +
                        (ops.b_mean * ue[i]).dot(d_unit.col(j)) + ue[i].dot(ops.k * ue[j]);
      const double e = modulus(r, c);
      for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) c_eff(i, j) += e * local(i, j);
    }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < i; ++j) c_eff(i, j) = c_eff(j, i);
  c_eff /= area;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out.c_eff[i * 3 + j] = c_eff(i, j);
  const Mat3 s = c_eff.inverse();
  if (!s.allFinite() || !(s(0, 0) > 0.0)) fail(Errc::SingularSystem, "effective stiffness is not invertible");
  out.e = 1.0 / s(0, 0);
  out.nu = -s(1, 0) / s(0, 0);
  out.anisotropy = c_eff(0, 0) / c_eff(1, 1);
  return out;
}

double voigt_modulus(double f, const Material2D& mat) {
  return f * mat.e_solid + (1.0 - f) * mat.e_solid * mat.contrast;
}

double reuss_modulus(double f, const Material2D& mat) {
  return 1.0 / (f / mat.e_solid + (1.0 - f) / (mat.e_solid * mat.contrast));
}

metrology::SampleStats evaluate_set(const std::vector<BinaryMask>& masks, const Material2D& mat,
                                    const SolverOptions& opt) {
  if (masks.empty()) fail(Errc::EmptySet, "no masks to evaluate");
  std::vector<EffectiveElasticity> res(masks.size());
  parallel_for(masks.size(), [&](std::size_t i) { res[i] = homogenize(masks[i], mat, opt); });
  std::map<std::string, std::vector<double>> v;
  for (const auto& r : res) {
    v["E"].push_back(r.e);
    v["nu"].push_back(r.nu);
  }
  return metrology::aggregate(v);
}

}  // namespace microforge::homog
