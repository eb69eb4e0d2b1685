#pragma once

// Affine control systems, piecewise-constant controls and trajectories.

#include "affsys/groups.hpp"

#include <optional>
#include <string>
#include <vector>

namespace affsys {

/// Same bounds for every control channel.
struct ControlBox {
  double lo = -1.0;
  double hi = 1.0;

  bool operator==(const ControlBox&) const = default;

  bool contains(const Vector& u) const {
    for (Eigen::Index j = 0; j < u.size(); ++j)
      if (!(u(j) >= lo && u(j) <= hi)) return false;
    return true;
  }
};

/// One controlled channel: a linear field plus a right-invariant generator.
struct ControlPair {
  LinearField linear;
  Matrix invariant;

  bool operator==(const ControlPair& o) const { return linear == o.linear && invariant == o.invariant; }
};

/// dg/dt = (X + Y)(g) + sum_j u_j (X_j + Y_j)(g).
class AffineSystem {
 public:
  AffineSystem(GroupRef group, LinearField drift_linear, Matrix drift_invariant,
               std::vector<ControlPair> controlled = {},
               std::optional<ControlBox> control_set = std::nullopt)
      : group_(std::move(group)),
        drift_linear_(std::move(drift_linear)),
        drift_invariant_(std::move(drift_invariant)),
        controlled_(std::move(controlled)),
        control_set_(control_set) {
    if (!group_) throw InvalidInput("system needs a group");
    check_pair(drift_linear_, drift_invariant_, "drift");
    for (std::size_t j = 0; j < controlled_.size(); ++j)
      check_pair(controlled_[j].linear, controlled_[j].invariant,
                 ("control " + std::to_string(j + 1)).c_str());
    if (control_set_ && !(control_set_->lo <= control_set_->hi))
      throw InvalidInput("control box is empty");
  }

  const GroupRef& group() const { return group_; }
  const LinearField& drift_linear() const { return drift_linear_; }
  const Matrix& drift_invariant() const { return drift_invariant_; }
  const std::vector<ControlPair>& controlled() const { return controlled_; }
  const std::optional<ControlBox>& control_set() const { return control_set_; }
  std::size_t m() const { return controlled_.size(); }

  /// X, X_1, ..., X_m in channel order.
  std::vector<LinearField> linear_fields() const {
    std::vector<LinearField> out{drift_linear_};
    for (const auto& c : controlled_) out.push_back(c.linear);
    return out;
  }

  /// (1, u_1, ..., u_m): the drift channel is pinned to 1.
  Vector augmented(const Vector& u) const {
    require_control(u);
    Vector out(static_cast<Eigen::Index>(m() + 1));
    out(0) = 1.0;
    out.tail(static_cast<Eigen::Index>(m())) = u;
    return out;
  }

  /// W = Y + sum_j u_j Y_j.
  Matrix invariant_part(const Vector& u) const {
    require_control(u);
    Matrix w = drift_invariant_;
    for (std::size_t j = 0; j < m(); ++j) w += u(static_cast<Eigen::Index>(j)) * controlled_[j].invariant;
    return w;
  }

  /// X + sum_j u_j X_j (generators of the linear fields).
  Matrix linear_generator(const Vector& u) const {
    require_control(u);
    Matrix x = drift_linear_.generator();
    for (std::size_t j = 0; j < m(); ++j) x += u(static_cast<Eigen::Index>(j)) * controlled_[j].linear.generator();
    return x;
  }

  void require_control(const Vector& u) const {
    if (u.size() != static_cast<Eigen::Index>(m()))
      throw InvalidInput("control vector has length " + std::to_string(u.size()) + ", system has m = " +
                         std::to_string(m()));
    if (!u.allFinite()) throw InvalidInput("control vector is not finite");
    if (control_set_ && !control_set_->contains(u)) throw InvalidInput("control value outside the control box");
  }

  bool all_linear_zero() const {
    if (!drift_linear_.is_zero()) return false;
    for (const auto& c : controlled_)
      if (!c.linear.is_zero()) return false;
    return true;
  }

  bool all_invariant_zero() const {
    if (drift_invariant_.norm() != 0.0) return false;
    for (const auto& c : controlled_)
      if (c.invariant.norm() != 0.0) return false;
    return true;
  }

  bool operator==(const AffineSystem& other) const {
    return same_group(group_, other.group_) && drift_linear_ == other.drift_linear_ &&
           drift_invariant_ == other.drift_invariant_ && controlled_ == other.controlled_ &&
           control_set_ == other.control_set_;
  }

 private:
  void check_pair(const LinearField& linear, const Matrix& invariant, const char* what) const {
    if (!same_group(linear.group(), group_))
      throw ValidationError(std::string(what) + ": linear field lives on another group");
    if (!group_->in_algebra(invariant))
      throw ValidationError(std::string(what) + ": invariant generator is not in the algebra of " + group_->name());
  }

  GroupRef group_;
  LinearField drift_linear_;
  Matrix drift_invariant_;
  std::vector<ControlPair> controlled_;
  std::optional<ControlBox> control_set_;
};

struct Segment {
  double duration;
  Vector u;
};

class ControlSignal {
 public:
  ControlSignal() = default;
  explicit ControlSignal(std::vector<Segment> segments) : segments_(std::move(segments)) {
    for (const auto& s : segments_)
      if (!(s.duration > 0.0) || !std::isfinite(s.duration))
        throw InvalidInput("segment durations must be positive and finite");
  }

  /// A single constant segment.
  static ControlSignal constant(const Vector& u, double duration) { return ControlSignal({{duration, u}}); }

  const std::vector<Segment>& segments() const { return segments_; }
  bool empty() const { return segments_.empty(); }

  double total_duration() const {
    double t = 0.0;
    for (const auto& s : segments_) t += s.duration;
    return t;
  }

  /// Throws unless every segment is admissible for the system.
  void check_against(const AffineSystem& system) const {
    for (const auto& s : segments_) system.require_control(s.u);
  }

  ControlSignal concatenate(const ControlSignal& next) const {
    std::vector<Segment> all = segments_;
    all.insert(all.end(), next.segments_.begin(), next.segments_.end());
    return ControlSignal(std::move(all));
  }

 private:
  std::vector<Segment> segments_;
};

enum class Method { product_formula, closed_inner, rk4, special_case, automatic };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::product_formula: return "product_formula";
    case Method::closed_inner: return "closed_inner";
    case Method::rk4: return "rk4";
    case Method::special_case: return "special_case";
    case Method::automatic: return "auto";
  }
  return "?";
}

struct Trajectory {
  std::vector<double> times;
  std::vector<Matrix> points;
  Method method = Method::automatic;
  ControlSignal signal;
  /// Set when the product formula ran on a system violating commutation.
  bool forced = false;

  const Matrix& endpoint() const { return points.back(); }
};

struct ValidationReport {
  bool commuting = true;
  bool inner = true;
  std::vector<std::pair<std::size_t, std::size_t>> offending;
  std::vector<std::string> messages;
};

inline ValidationReport validate(const AffineSystem& system, double tol = 1e-10) {
  ValidationReport report;
  const auto fields = system.linear_fields();
  const auto comm = check_commutation(fields, tol);
  report.commuting = comm.pass;
  report.offending = comm.offending;
  auto label = [](std::size_t i) { return i == 0 ? std::string("drift") : "control " + std::to_string(i); };
  for (const auto& [i, j] : comm.offending)
    report.messages.push_back("linear fields of " + label(i) + " and " + label(j) + " do not commute");
  if (!system.group()->abelian_rn()) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (fields[i].kind() != LinearField::Kind::Inner) {
        report.inner = false;
        report.messages.push_back("linear field of " + label(i) + " is not inner");
      }
    }
  }
  return report;
}

/// (X + Y)(g) + sum_j u_j (X_j + Y_j)(g) as a tangent matrix at g.
inline Matrix vector_field_eval(const AffineSystem& system, const Matrix& g, const Vector& u) {
  const GroupSpec& group = *system.group();
  group.require_shape(g, "vector_field_eval");
  if (u.size() != static_cast<Eigen::Index>(system.m())) throw InvalidInput("vector_field_eval: control length");
  Matrix v = system.drift_linear().value(g) + group.right_invariant(system.drift_invariant(), g);
  for (std::size_t j = 0; j < system.m(); ++j) {
    const auto& c = system.controlled()[j];
    v += u(static_cast<Eigen::Index>(j)) * (c.linear.value(g) + group.right_invariant(c.invariant, g));
  }
  return v;
}

}  // namespace affsys
