#pragma once

// Gauge-equivariant convolution: kernels constrained to the commutant
// {K : K rho_in(g) = rho_out(g) K}, neighborhood aggregation through the
// edge potentials, and equivariant nonlinearities.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "torsor/errors.hpp"
#include "torsor/groups.hpp"
#include "torsor/potential_graph.hpp"
#include "torsor/rng.hpp"
#include "torsor/sheaf.hpp"

namespace torsor {

struct IntertwinerBasis {
  Representation rep_in;
  Representation rep_out;
  std::vector<Eigen::MatrixXd> basis;  // orthonormal under the Frobenius inner product
};

namespace detail {

inline std::vector<GroupElement> commutant_samples(const GroupKind& kind, int attempt) {
  std::vector<GroupElement> out;
  switch (kind.tag()) {
    case GroupTag::Cyclic:
      // The group is finite: sampling it whole makes the constraint exact.
      for (int k = 0; k < kind.order(); ++k) out.push_back(GroupElement::cyclic(kind, k));
      return out;
    case GroupTag::SO2: {
      // Any single irrational-free generator of order 37 already pins the
      // commutant for reps built from trivial/standard blocks; extra random
      // angles on retries are defensive.
      const int base = 37;
      for (int k = 0; k < base; ++k)
        out.push_back(GroupElement::angle(2.0 * kPi * k / base));
      Rng rng(0x50201234u);
      for (int k = 0; k < 64 * attempt; ++k) out.push_back(random_element(kind, rng));
      return out;
    }
    case GroupTag::SO3: {
      Rng rng(0x503e1e3eu);
      for (int k = 0; k < 64 * (1 << attempt); ++k) out.push_back(random_element(kind, rng));
      return out;
    }
  }
  throw Unsupported("unknown group kind");
}

inline double intertwine_residual(const Eigen::MatrixXd& k, const Representation& rep_in,
                                  const Representation& rep_out,
                                  const std::vector<GroupElement>& elems) {
  double worst = 0.0;
  for (const auto& g : elems)
    worst = std::max(worst,
                     (k * rep_in.matrix(g) - rep_out.matrix(g) * k).cwiseAbs().maxCoeff());
  return worst;
}

}  // namespace detail

// Orthonormal basis of {K : K rho_in(g) = rho_out(g) K for all g}, computed
// as the null space of the stacked constraints
// (rho_in(g)^T kron I - I kron rho_out(g)) vec(K) = 0 over a sampling set,
// then verified against 256 fresh group elements.
inline IntertwinerBasis commutant_basis(const Representation& rep_in,
                                        const Representation& rep_out) {
  if (!(rep_in.group() == rep_out.group()))
    throw GroupKindMismatch("commutant needs reps over one group, got " + rep_in.group().str() +
                            " and " + rep_out.group().str());
  const int din = rep_in.dim();
  const int dout = rep_out.dim();
  const int n = dout * din;

  std::vector<GroupElement> fresh;
  {
    Rng rng(0xf4e5a001u);
    const GroupKind kind = rep_in.group();
    const int count = kind.tag() == GroupTag::Cyclic ? kind.order() : 256;
    for (int k = 0; k < count; ++k)
      fresh.push_back(kind.tag() == GroupTag::Cyclic ? GroupElement::cyclic(kind, k)
                                                     : random_element(kind, rng));
  }

  IntertwinerBasis result{rep_in, rep_out, {}};
  std::vector<Eigen::MatrixXd> last_basis;
  for (int attempt = 0; attempt < 3; ++attempt) {
    const std::vector<GroupElement> samples = detail::commutant_samples(rep_in.group(), attempt);
    Eigen::MatrixXd stacked(static_cast<int>(samples.size()) * n, n);
    const Eigen::MatrixXd eye_out = Eigen::MatrixXd::Identity(dout, dout);
    for (std::size_t s = 0; s < samples.size(); ++s) {
      const Eigen::MatrixXd rin_t = rep_in.matrix(samples[s]).transpose();
      const Eigen::MatrixXd rout = rep_out.matrix(samples[s]);
      // kron(rin^T, I_dout) - kron(I_din, rout), assembled blockwise.
      for (int bi = 0; bi < din; ++bi)
        for (int bj = 0; bj < din; ++bj) {
          Eigen::MatrixXd block = rin_t(bi, bj) * eye_out;
          if (bi == bj) block -= rout;
          stacked.block(static_cast<int>(s) * n + bi * dout, bj * dout, dout, dout) = block;
        }
    }

    Eigen::BDCSVD<Eigen::MatrixXd> svd(stacked, Eigen::ComputeThinV);
    const Eigen::VectorXd sigma = svd.singularValues();
    const double cutoff = 1e-10 * (sigma.size() > 0 ? sigma(0) : 0.0);
    std::vector<Eigen::MatrixXd> basis;
    for (int i = 0; i < sigma.size(); ++i) {
      if (sigma(i) > cutoff) continue;
      Eigen::VectorXd vec = svd.matrixV().col(i);
      for (int j = 0; j < vec.size(); ++j) {
        if (std::abs(vec(j)) > 1e-12) {
          if (vec(j) < 0) vec = -vec;
          break;
        }
      }
      basis.push_back(Eigen::Map<const Eigen::MatrixXd>(vec.data(), dout, din));
    }

    bool all_good = true;
    for (const auto& k : basis)
      if (detail::intertwine_residual(k, rep_in, rep_out, fresh) > 1e-8) {
        all_good = false;
        break;
      }
    last_basis = std::move(basis);
    if (all_good) {
      result.basis = std::move(last_basis);
      return result;
    }
  }
  // Retries exhausted: keep only vectors that verify. The sampling sets above
  // make this unreachable for the supported rep families; defensive.
  std::erase_if(last_basis, [&](const Eigen::MatrixXd& k) {
    return detail::intertwine_residual(k, rep_in, rep_out, fresh) > 1e-8;
  });
  result.basis = std::move(last_basis);
  return result;
}

enum class Nonlinearity { None, PointwiseRelu, NormRelu };

// relu(||v|| - bias) * v / ||v||: scales the radius, keeps the direction, so
// it commutes with every orthogonal rep action.
inline Eigen::VectorXd norm_nonlinearity(const Eigen::VectorXd& v, double bias) {
  const double n = v.norm();
  if (n <= bias || n == 0.0) return Eigen::VectorXd::Zero(v.size());
  return ((n - bias) / n) * v;
}

struct TorsorConvLayer {
  IntertwinerBasis basis;
  std::vector<double> coefficients;
  Nonlinearity nonlinearity = Nonlinearity::None;
  double norm_bias = 0.0;

  Eigen::MatrixXd kernel() const {
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(basis.rep_out.dim(), basis.rep_in.dim());
    for (std::size_t i = 0; i < basis.basis.size(); ++i) k += coefficients[i] * basis.basis[i];
    return k;
  }
};

inline TorsorConvLayer make_layer(IntertwinerBasis basis, std::vector<double> coefficients,
                                  Nonlinearity nonlinearity = Nonlinearity::None,
                                  double norm_bias = 0.0) {
  if (coefficients.size() != basis.basis.size())
    throw DimensionMismatch("got " + std::to_string(coefficients.size()) + " coefficients for " +
                            std::to_string(basis.basis.size()) + " basis elements");
  if (nonlinearity == Nonlinearity::PointwiseRelu &&
      (!basis.rep_in.permutation_like() || !basis.rep_out.permutation_like()))
    throw Unsupported("pointwise relu is equivariant only for permutation-like reps");
  return TorsorConvLayer{std::move(basis), std::move(coefficients), nonlinearity, norm_bias};
}

// Uniform [-s, s] with s = 1/sqrt(basis_dim * d_in).
inline std::vector<double> init_coefficients(const IntertwinerBasis& basis, std::uint64_t seed) {
  std::vector<double> c(basis.basis.size(), 0.0);
  if (c.empty()) return c;
  const double s =
      1.0 / std::sqrt(static_cast<double>(c.size()) * static_cast<double>(basis.rep_in.dim()));
  Rng rng(seed);
  for (auto& x : c) x = rng.uniform(-s, s);
  return c;
}

// f_out(v) = sigma( K * (1/c_v) sum_{u ~ v} w_uv rho_in(psi_uv)^{-1} f_in(u) )
// with c_v the weighted degree; isolated vertices pass through: sigma(K f_in(v)).
inline FeatureAssignment forward(const TorsorConvLayer& layer, const PotentialGraph& g,
                                 const FeatureAssignment& f_in) {
  if (!(f_in.rep == layer.basis.rep_in))
    throw DimensionMismatch("input features do not carry the layer's input rep");
  require_features_match(g, f_in);

  Eigen::MatrixXd agg = Eigen::MatrixXd::Zero(g.num_vertices(), f_in.rep.dim());
  for (const auto& e : g.edges()) {
    const Eigen::MatrixXd rho = f_in.rep.matrix(e.psi);  // rho_in(psi_uv), u < v
    agg.row(e.u) += e.weight * (rho * f_in.values.row(e.v).transpose()).transpose();
    agg.row(e.v) += e.weight * (rho.transpose() * f_in.values.row(e.u).transpose()).transpose();
  }

  const Eigen::MatrixXd k = layer.kernel();
  FeatureAssignment out{layer.basis.rep_out,
                        Eigen::MatrixXd::Zero(g.num_vertices(), layer.basis.rep_out.dim())};
  for (int v = 0; v < g.num_vertices(); ++v) {
    const double c = g.weighted_degree(v);
    const Eigen::VectorXd pre =
        c > 0.0 ? (k * (agg.row(v) / c).transpose()).eval()
                : (k * f_in.values.row(v).transpose()).eval();
    switch (layer.nonlinearity) {
      case Nonlinearity::None:
        out.values.row(v) = pre.transpose();
        break;
      case Nonlinearity::PointwiseRelu:
        out.values.row(v) = pre.cwiseMax(0.0).transpose();
        break;
      case Nonlinearity::NormRelu:
        out.values.row(v) = norm_nonlinearity(pre, layer.norm_bias).transpose();
        break;
    }
  }
  return out;
}

// Max over vertices of || forward(gauged inputs)_v - rho_out(gamma_v)^{-1} forward(inputs)_v ||.
inline double check_gauge_equivariance(const TorsorConvLayer& layer, const PotentialGraph& g,
                                       const FeatureAssignment& f_in, const Gauge& gamma) {
  const FeatureAssignment base = forward(layer, g, f_in);
  const FeatureAssignment gauged =
      forward(layer, apply_gauge(g, gamma), apply_gauge_features(f_in, gamma));
  double worst = 0.0;
  for (int v = 0; v < g.num_vertices(); ++v) {
    const Eigen::VectorXd expect =
        layer.basis.rep_out.matrix(inverse(gamma.at[v])) * base.values.row(v).transpose();
    worst = std::max(worst, (gauged.values.row(v).transpose() - expect).norm());
  }
  return worst;
}

// sigmoid(gate_v) * f_v rowwise; the gate must be a 1-dim trivial channel so
// it is gauge-invariant and the product transforms like f.
inline FeatureAssignment gated_nonlinearity(const FeatureAssignment& gate,
                                            const FeatureAssignment& f) {
  if (gate.rep.kind() != Representation::Kind::Trivial || gate.rep.dim() != 1)
    throw Unsupported("gate must be a trivial rep of dim 1");
  if (!(gate.rep.group() == f.rep.group()))
    throw GroupKindMismatch("gate and features live over different groups");
  if (gate.values.rows() != f.values.rows())
    throw DimensionMismatch("gate rows " + std::to_string(gate.values.rows()) +
                            " != feature rows " + std::to_string(f.values.rows()));
  FeatureAssignment out{f.rep, f.values};
  for (int v = 0; v < f.values.rows(); ++v)
    out.values.row(v) *= 1.0 / (1.0 + std::exp(-gate.values(v, 0)));
  return out;
}

}  // namespace torsor
