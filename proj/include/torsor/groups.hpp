#pragma once

// Structure groups for edge potentials: cyclic(n), SO(2), SO(3).
// Elements are value types; every constructor canonicalizes its payload so
// that equality of payloads is equality of group elements.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "torsor/errors.hpp"
#include "torsor/rng.hpp"

namespace torsor {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

enum class GroupTag { Cyclic, SO2, SO3 };

class GroupKind {
 public:
  static GroupKind cyclic(int n) {
    if (n < 1) throw InvalidElement("cyclic order must be >= 1, got " + std::to_string(n));
    return GroupKind(GroupTag::Cyclic, n);
  }
  static GroupKind so2() { return GroupKind(GroupTag::SO2, 0); }
  static GroupKind so3() { return GroupKind(GroupTag::SO3, 0); }

  GroupTag tag() const { return tag_; }

  // Cyclic only.
  int order() const {
    if (tag_ != GroupTag::Cyclic) throw Unsupported("order() is defined only for cyclic groups");
    return order_;
  }

  bool operator==(const GroupKind&) const = default;

  std::string str() const {
    switch (tag_) {
      case GroupTag::Cyclic: return "cyclic " + std::to_string(order_);
      case GroupTag::SO2: return "so2";
      case GroupTag::SO3: return "so3";
    }
    return {};
  }

 private:
  GroupKind(GroupTag tag, int order) : tag_(tag), order_(order) {}
  GroupTag tag_;
  int order_;
};

// Wraps into (-pi, pi]; the -pi boundary maps to +pi.
inline double canonical_angle(double theta) {
  double a = std::fmod(theta, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  else if (a > kPi) a -= 2.0 * kPi;
  return a;
}

// Modified Gram-Schmidt on rows; keeps det = +1 for near-rotations.
inline Eigen::Matrix3d orthonormalized_rows(const Eigen::Matrix3d& m) {
  Eigen::Vector3d r0 = m.row(0), r1 = m.row(1), r2 = m.row(2);
  r0.normalize();
  r1 -= r1.dot(r0) * r0;
  r1.normalize();
  r2 -= r2.dot(r0) * r0;
  r2 -= r2.dot(r1) * r1;
  r2.normalize();
  Eigen::Matrix3d out;
  out.row(0) = r0;
  out.row(1) = r1;
  out.row(2) = r2;
  return out;
}

inline double rotation_drift(const Eigen::Matrix3d& m) {
  return (m * m.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
}

class GroupElement {
 public:
  // Residue class k mod n.
  static GroupElement cyclic(int n, long long k) {
    GroupKind kind = GroupKind::cyclic(n);
    long long r = k % n;
    if (r < 0) r += n;
    return GroupElement(kind, static_cast<int>(r));
  }
  static GroupElement cyclic(GroupKind kind, long long k) {
    if (kind.tag() != GroupTag::Cyclic) throw GroupKindMismatch("cyclic payload for " + kind.str());
    return cyclic(kind.order(), k);
  }

  static GroupElement angle(double theta) {
    if (!std::isfinite(theta)) throw InvalidElement("so2 angle must be finite");
    return GroupElement(GroupKind::so2(), canonical_angle(theta));
  }

  // Validates orthogonality and det within 1e-9; re-orthonormalizes drift
  // beyond 1e-12 so long products stay on the manifold.
  static GroupElement rotation3(const Eigen::Matrix3d& m) {
    if (!m.allFinite()) throw InvalidElement("so3 payload must be finite");
    const double drift = rotation_drift(m);
    const double det_err = std::abs(m.determinant() - 1.0);
    if (drift > 1e-9 || det_err > 1e-9)
      throw InvalidElement("so3 payload is not a rotation (orthogonality error " +
                           std::to_string(drift) + ", det error " + std::to_string(det_err) + ")");
    if (drift > 1e-12) return GroupElement(GroupKind::so3(), orthonormalized_rows(m));
    return GroupElement(GroupKind::so3(), m);
  }

  static GroupElement identity(GroupKind kind) {
    switch (kind.tag()) {
      case GroupTag::Cyclic: return GroupElement(kind, 0);
      case GroupTag::SO2: return GroupElement(kind, 0.0);
      case GroupTag::SO3: return GroupElement(kind, Eigen::Matrix3d::Identity().eval());
    }
    throw Unsupported("unknown group kind");
  }

  const GroupKind& kind() const { return kind_; }

  int residue() const { return std::get<int>(payload_); }
  double theta() const { return std::get<double>(payload_); }
  const Eigen::Matrix3d& matrix() const { return std::get<Eigen::Matrix3d>(payload_); }

 private:
  GroupElement(GroupKind kind, int residue) : kind_(kind), payload_(residue) {}
  GroupElement(GroupKind kind, double theta) : kind_(kind), payload_(theta) {}
  GroupElement(GroupKind kind, const Eigen::Matrix3d& m) : kind_(kind), payload_(m) {}

  GroupKind kind_;
  std::variant<int, double, Eigen::Matrix3d> payload_;
};

inline void require_same_kind(const GroupElement& a, const GroupElement& b, const char* op) {
  if (!(a.kind() == b.kind()))
    throw GroupKindMismatch(std::string(op) + ": " + a.kind().str() + " vs " + b.kind().str());
}

inline GroupElement compose(const GroupElement& a, const GroupElement& b) {
  require_same_kind(a, b, "compose");
  switch (a.kind().tag()) {
    case GroupTag::Cyclic:
      return GroupElement::cyclic(a.kind(), static_cast<long long>(a.residue()) + b.residue());
    case GroupTag::SO2:
      return GroupElement::angle(a.theta() + b.theta());
    case GroupTag::SO3: {
      Eigen::Matrix3d p = a.matrix() * b.matrix();
      if (rotation_drift(p) > 1e-12) p = orthonormalized_rows(p);
      return GroupElement::rotation3(p);
    }
  }
  throw Unsupported("unknown group kind");
}

inline GroupElement inverse(const GroupElement& a) {
  switch (a.kind().tag()) {
    case GroupTag::Cyclic:
      return GroupElement::cyclic(a.kind(), -static_cast<long long>(a.residue()));
    case GroupTag::SO2:
      return GroupElement::angle(-a.theta());
    case GroupTag::SO3:
      return GroupElement::rotation3(a.matrix().transpose());
  }
  throw Unsupported("unknown group kind");
}

inline GroupElement identity(GroupKind kind) { return GroupElement::identity(kind); }

// Bi-invariant metric: discrete 0/1, wrapped angle gap, geodesic angle.
inline double distance(const GroupElement& a, const GroupElement& b) {
  require_same_kind(a, b, "distance");
  switch (a.kind().tag()) {
    case GroupTag::Cyclic:
      return a.residue() == b.residue() ? 0.0 : 1.0;
    case GroupTag::SO2:
      return std::abs(canonical_angle(a.theta() - b.theta()));
    case GroupTag::SO3: {
      const double c = ((a.matrix().transpose() * b.matrix()).trace() - 1.0) / 2.0;
      return std::acos(std::clamp(c, -1.0, 1.0));
    }
  }
  throw Unsupported("unknown group kind");
}

// Residual metric with linear conditioning everywhere: the so3 branch of
// distance() goes through acos, which turns 1e-16 roundoff into ~3e-8 near
// angle 0 and pi, so tight residual tolerances compare against this instead.
// Metrically equivalent to distance() (Frobenius chord vs geodesic arc).
inline double chordal_distance(const GroupElement& a, const GroupElement& b) {
  require_same_kind(a, b, "chordal_distance");
  switch (a.kind().tag()) {
    case GroupTag::Cyclic:
      return a.residue() == b.residue() ? 0.0 : 1.0;
    case GroupTag::SO2:
      return std::abs(canonical_angle(a.theta() - b.theta()));
    case GroupTag::SO3:
      return (a.matrix() - b.matrix()).norm();
  }
  throw Unsupported("unknown group kind");
}

// Haar-uniform draw: uniform residue, uniform angle, quaternion method.
inline GroupElement random_element(GroupKind kind, Rng& rng) {
  switch (kind.tag()) {
    case GroupTag::Cyclic:
      return GroupElement::cyclic(kind, static_cast<long long>(rng.uniform_int(kind.order())));
    case GroupTag::SO2:
      return GroupElement::angle(kPi - 2.0 * kPi * rng.uniform());
    case GroupTag::SO3: {
      double w, x, y, z, n2;
      do {
        w = rng.gaussian();
        x = rng.gaussian();
        y = rng.gaussian();
        z = rng.gaussian();
        n2 = w * w + x * x + y * y + z * z;
      } while (n2 < 1e-12);
      const double s = 1.0 / std::sqrt(n2);
      w *= s; x *= s; y *= s; z *= s;
      Eigen::Matrix3d m;
      m << 1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
           2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
           2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y);
      return GroupElement::rotation3(m);
    }
  }
  throw Unsupported("unknown group kind");
}

// Rodrigues formula; axis is normalized here.
inline Eigen::Matrix3d rotation_about(const Eigen::Vector3d& axis, double theta) {
  const double n = axis.norm();
  if (n < 1e-300) throw InvalidElement("rotation axis must be nonzero");
  const Eigen::Vector3d u = axis / n;
  Eigen::Matrix3d k;
  k << 0, -u.z(), u.y(),
       u.z(), 0, -u.x(),
       -u.y(), u.x(), 0;
  return Eigen::Matrix3d::Identity() + std::sin(theta) * k + (1.0 - std::cos(theta)) * (k * k);
}

// Rotation angle in [0, pi] and a unit axis; stable near theta = 0 and pi.
// Near 0 the axis is conventionally +z.
inline std::pair<double, Eigen::Vector3d> angle_axis(const Eigen::Matrix3d& r) {
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  const double theta = std::acos(c);
  if (theta < 1e-7) return {theta, Eigen::Vector3d(0, 0, 1)};
  if (kPi - theta > 1e-6) {
    Eigen::Vector3d axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    return {theta, axis.normalized()};
  }
  // theta near pi: (r + I)/2 = u u^T up to O(pi - theta); read off the
  // column with the largest diagonal for numerical safety.
  const Eigen::Matrix3d b = (r + Eigen::Matrix3d::Identity()) / 2.0;
  int i = 0;
  b.diagonal().maxCoeff(&i);
  Eigen::Vector3d axis = b.col(i) / std::sqrt(std::max(b(i, i), 1e-300));
  return {theta, axis.normalized()};
}

class Representation {
 public:
  enum class Kind { Trivial, Standard, Regular, DirectSum };

  // g acts as the identity on R^dim.
  static Representation trivial(GroupKind group, int dim) {
    if (dim < 1) throw Unsupported("trivial rep dim must be >= 1");
    return Representation(Kind::Trivial, group, dim);
  }

  // Defining action: rotation of the plane (so2 and cyclic(n) at 2*pi*k/n)
  // or of 3-space (so3).
  static Representation standard(GroupKind group) {
    const int d = group.tag() == GroupTag::SO3 ? 3 : 2;
    return Representation(Kind::Standard, group, d);
  }

  // Permutation action of cyclic(n) on R^n; undefined for continuous groups.
  static Representation regular(GroupKind group) {
    if (group.tag() != GroupTag::Cyclic)
      throw Unsupported("regular rep is defined only for cyclic groups");
    return Representation(Kind::Regular, group, group.order());
  }

  static Representation direct_sum(std::vector<Representation> parts) {
    if (parts.empty()) throw Unsupported("direct_sum needs at least one part");
    int dim = 0;
    for (const auto& p : parts) {
      if (!(p.group() == parts.front().group()))
        throw GroupKindMismatch("direct_sum parts must share one group");
      dim += p.dim();
    }
    Representation rep(Kind::DirectSum, parts.front().group(), dim);
    rep.parts_ = std::move(parts);
    return rep;
  }

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  const GroupKind& group() const { return group_; }
  const std::vector<Representation>& parts() const { return parts_; }

  // True when every matrix of the rep is a permutation matrix, i.e. when a
  // pointwise ReLU commutes with the action.
  bool permutation_like() const {
    switch (kind_) {
      case Kind::Trivial:
      case Kind::Regular:
        return true;
      case Kind::Standard:
        return false;
      case Kind::DirectSum:
        for (const auto& p : parts_)
          if (!p.permutation_like()) return false;
        return true;
    }
    return false;
  }

  bool operator==(const Representation& o) const {
    return kind_ == o.kind_ && group_ == o.group_ && dim_ == o.dim_ && parts_ == o.parts_;
  }

  Eigen::MatrixXd matrix(const GroupElement& g) const {
    if (!(g.kind() == group_))
      throw GroupKindMismatch("rep_matrix: rep over " + group_.str() + " applied to " +
                              g.kind().str());
    switch (kind_) {
      case Kind::Trivial:
        return Eigen::MatrixXd::Identity(dim_, dim_);
      case Kind::Standard: {
        if (group_.tag() == GroupTag::SO3) return g.matrix();
        const double theta = group_.tag() == GroupTag::SO2
                                 ? g.theta()
                                 : 2.0 * kPi * g.residue() / group_.order();
        Eigen::MatrixXd m(2, 2);
        m << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
        return m;
      }
      case Kind::Regular: {
        const int n = group_.order();
        const int k = g.residue();
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
        for (int h = 0; h < n; ++h) m((h + k) % n, h) = 1.0;
        return m;
      }
      case Kind::DirectSum: {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim_, dim_);
        int off = 0;
        for (const auto& p : parts_) {
          m.block(off, off, p.dim(), p.dim()) = p.matrix(g);
          off += p.dim();
        }
        return m;
      }
    }
    throw Unsupported("unknown representation kind");
  }

 private:
  Representation(Kind kind, GroupKind group, int dim) : kind_(kind), group_(group), dim_(dim) {}

  Kind kind_;
  GroupKind group_;
  int dim_;
  std::vector<Representation> parts_;
};

inline Eigen::MatrixXd rep_matrix(const Representation& rep, const GroupElement& g) {
  return rep.matrix(g);
}

}  // namespace torsor
