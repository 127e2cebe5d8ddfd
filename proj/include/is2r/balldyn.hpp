#pragma once

// Ball flight: semi-implicit integration with quadratic drag, table bounce,
// and impulsive paddle contact. Everything here is a pure function on values.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "is2r/common.hpp"

namespace is2r {

struct BallState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  double time = 0.0;

  bool valid() const { return position.allFinite() && velocity.allFinite() && std::isfinite(time) && time >= 0.0; }
};

struct PhysicsConstants {
  double gravity_z = -9.81;
  double drag_coefficient = 0.47;
  double air_density = 1.29;
  double ball_mass = 0.0027;
  double cross_section = 1.256e-3;
  double table_restitution = 0.87;
  double table_friction = 0.10;
  double paddle_restitution = 0.85;
  double paddle_radius = 0.085;
  double ball_diameter = 0.040;

  // K_d = Cd * rho * A / (2 m), units 1/m.
  double drag_factor() const { return drag_coefficient * air_density * cross_section / (2.0 * ball_mass); }
  double ball_radius() const { return 0.5 * ball_diameter; }
  Vec3 gravity() const { return {0.0, 0.0, gravity_z}; }

  void validate() const {
    if (!(ball_mass > 0.0)) throw ValidationError("ball_mass must be positive");
    if (!(drag_factor() >= 0.0) || !std::isfinite(drag_factor())) throw ValidationError("drag factor must be >= 0");
    if (!(table_restitution > 0.0 && table_restitution <= 1.0)) throw ValidationError("table_restitution must be in (0,1]");
    if (!(paddle_restitution > 0.0 && paddle_restitution <= 1.0)) throw ValidationError("paddle_restitution must be in (0,1]");
    if (!(table_friction >= 0.0 && table_friction <= 1.0)) throw ValidationError("table_friction must be in [0,1]");
    if (!(paddle_radius > 0.0) || !(ball_diameter > 0.0)) throw ValidationError("paddle_radius and ball_diameter must be positive");
    if (!std::isfinite(gravity_z)) throw ValidationError("gravity_z must be finite");
  }
};

// Table surface is the plane z = 0, net along y = 0. The robot plays from
// y < 0, the human from y > 0; x is lateral.
struct TableGeometry {
  double half_length = 1.37;
  double half_width = 0.7625;
  double net_height = 0.1525;
  double net_overhang = 0.1525;  // net posts stick out past the side lines
  double floor_z = -0.76;

  bool on_table(double x, double y) const { return std::abs(x) <= half_width && std::abs(y) <= half_length; }
  bool on_robot_side(double x, double y) const { return on_table(x, y) && y < 0.0; }
  bool on_human_side(double x, double y) const { return on_table(x, y) && y > 0.0; }

  void validate() const {
    if (!(half_length > 0.0 && half_width > 0.0 && net_height > 0.0 && net_overhang >= 0.0))
      throw ValidationError("table dimensions must be positive");
    if (!(floor_z < 0.0)) throw ValidationError("floor must lie below the table surface");
  }
};

struct Trajectory {
  std::vector<BallState> samples;
  double sample_period = kPerceptionDt;

  std::size_t size() const { return samples.size(); }

  void validate() const {
    if (samples.size() < 2) throw ValidationError("trajectory needs at least 2 samples");
    for (std::size_t i = 1; i < samples.size(); ++i)
      if (!(samples[i].time > samples[i - 1].time)) throw ValidationError("trajectory timestamps must be strictly increasing");
  }
};

enum class FlightEventKind { kTableBounce, kNetCrossing, kNetHit, kOutOfBounds };

struct FlightEvent {
  FlightEventKind kind;
  double time = 0.0;
  Vec3 position = Vec3::Zero();
  Vec3 velocity_before = Vec3::Zero();
  Vec3 velocity_after = Vec3::Zero();
};

struct FlightResult {
  Trajectory trajectory;
  std::vector<FlightEvent> events;

  std::optional<FlightEvent> first(FlightEventKind kind) const {
    for (const auto& e : events)
      if (e.kind == kind) return e;
    return std::nullopt;
  }
  bool terminated() const {
    return !events.empty() && (events.back().kind == FlightEventKind::kNetHit || events.back().kind == FlightEventKind::kOutOfBounds);
  }
};

inline BallState step_ball(const BallState& state, const PhysicsConstants& constants, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("step_ball: dt must be positive");
  if (!state.position.allFinite() || !state.velocity.allFinite() || !std::isfinite(state.time))
    throw ValidationError("step_ball: non-finite ball state");
  const Vec3 accel = constants.gravity() - constants.drag_factor() * state.velocity.norm() * state.velocity;
  BallState next;
  next.position = state.position + dt * (state.velocity + dt * accel / 2.0);
  next.velocity = state.velocity + dt * accel;
  next.time = state.time + dt;
  return next;
}

inline BallState bounce_table(const BallState& incoming, const PhysicsConstants& constants) {
  if (!(incoming.velocity.z() < 0.0)) throw ValidationError("bounce_table: ball must be moving down");
  const double tangential = std::clamp(1.0 - constants.table_friction, 0.0, 1.0);
  BallState out = incoming;
  out.velocity.x() *= tangential;
  out.velocity.y() *= tangential;
  out.velocity.z() = -constants.table_restitution * incoming.velocity.z();
  return out;
}

struct PaddlePose {
  Vec3 position = Vec3::Zero();
  Vec3 normal = Vec3::UnitY();
};

// Contact is applied only when the ball touches the disk (within one ball
// radius of the plane and inside the rim) and approaches it.
inline BallState paddle_contact(const BallState& ball, const PaddlePose& paddle, const Vec3& paddle_velocity,
                                const PhysicsConstants& constants) {
  if (std::abs(paddle.normal.norm() - 1.0) > 1e-9) throw ValidationError("paddle_contact: normal must be unit length");
  const Vec3 offset = ball.position - paddle.position;
  const double normal_dist = offset.dot(paddle.normal);
  const double lateral = (offset - normal_dist * paddle.normal).norm();
  const double tol = constants.ball_radius() + 1e-9;
  if (std::abs(normal_dist) > tol || lateral > constants.paddle_radius + constants.ball_radius()) return ball;

  const Vec3 v_rel = ball.velocity - paddle_velocity;
  const double vn = v_rel.dot(paddle.normal);
  if (vn >= 0.0) return ball;
  BallState out = ball;
  out.velocity = paddle_velocity + v_rel - (1.0 + constants.paddle_restitution) * vn * paddle.normal;
  return out;
}

namespace detail {

inline BallState lerp(const BallState& a, const BallState& b, double s) {
  BallState r;
  r.position = a.position + s * (b.position - a.position);
  r.velocity = a.velocity + s * (b.velocity - a.velocity);
  r.time = a.time + s * (b.time - a.time);
  return r;
}

inline bool outside_world(const Vec3& p, const TableGeometry& table) {
  return p.z() < table.floor_z || std::abs(p.x()) > 4.0 || std::abs(p.y()) > 6.0;
}

}  // namespace detail

// Advances one integration step and resolves any table bounce, net contact,
// or exit inside it. Returns the end-of-step state; events are appended.
// `stop` is set when the flight can no longer continue.
inline BallState advance_with_events(const BallState& s0, const PhysicsConstants& constants, const TableGeometry& table,
                                     double dt, std::vector<FlightEvent>& events, bool& stop,
                                     bool allow_bounce = true) {
  const double r = constants.ball_radius();
  BallState s1 = step_ball(s0, constants, dt);

  // Table contact: centre reaches one radius above the surface while over the table.
  std::optional<BallState> contact;
  if (allow_bounce && s0.position.z() >= r && s1.position.z() < r && s1.velocity.z() < 0.0) {
    BallState at = detail::lerp(s0, s1, (s0.position.z() - r) / (s0.position.z() - s1.position.z()));
    if (table.on_table(at.position.x(), at.position.y())) contact = at;
  }

  // Net plane crossing, unless the bounce comes first; the rest of the step
  // after a bounce is advanced on its own (at most one bounce per step).
  if ((s0.position.y() > 0.0) != (s1.position.y() > 0.0) && s0.position.y() != s1.position.y()) {
    const double f = s0.position.y() / (s0.position.y() - s1.position.y());
    const BallState at = detail::lerp(s0, s1, f);
    if (!contact || at.time <= contact->time) {
      const bool within_posts = std::abs(at.position.x()) <= table.half_width + table.net_overhang;
      if (within_posts && at.position.z() >= 0.0 && at.position.z() < table.net_height + r) {
        events.push_back({FlightEventKind::kNetHit, at.time, at.position, at.velocity, at.velocity});
        stop = true;
        return at;
      }
      events.push_back({FlightEventKind::kNetCrossing, at.time, at.position, at.velocity, at.velocity});
    }
  }

  if (contact) {
    BallState at = *contact;
    at.position.z() = r;
    if (at.velocity.z() >= 0.0) at.velocity.z() = s1.velocity.z();
    const BallState bounced = bounce_table(at, constants);
    events.push_back({FlightEventKind::kTableBounce, at.time, at.position, at.velocity, bounced.velocity});
    const double rest = s0.time + dt - at.time;
    if (rest > 1e-12) return advance_with_events(bounced, constants, table, rest, events, stop, false);
    return bounced;
  }

  const bool under_table = s1.position.z() < 0.0 && table.on_table(s1.position.x(), s1.position.y());
  if (under_table || detail::outside_world(s1.position, table)) {
    events.push_back({FlightEventKind::kOutOfBounds, s1.time, s1.position, s1.velocity, s1.velocity});
    stop = true;
  }
  return s1;
}

inline FlightResult simulate_flight(const BallState& init, const PhysicsConstants& constants, double dt, double horizon,
                                    const TableGeometry& table) {
  if (!(horizon > dt)) throw ValidationError("simulate_flight: horizon must exceed dt");
  if (!init.position.allFinite() || !init.velocity.allFinite() || !std::isfinite(init.time))
    throw ValidationError("simulate_flight: non-finite initial state");
  FlightResult result;
  result.trajectory.sample_period = dt;
  result.trajectory.samples.push_back(init);

  bool stop = false;
  const bool start_outside = detail::outside_world(init.position, table) ||
                             (init.position.z() < 0.0 && table.on_table(init.position.x(), init.position.y()));
  if (start_outside) {
    result.events.push_back({FlightEventKind::kOutOfBounds, init.time, init.position, init.velocity, init.velocity});
    return result;
  }
  const auto steps = static_cast<std::size_t>(std::floor(horizon / dt + 1e-9));
  BallState s = init;
  for (std::size_t k = 0; k < steps && !stop; ++k) {
    s = advance_with_events(s, constants, table, dt, result.events, stop);
    s.time = init.time + static_cast<double>(k + 1) * dt;
    if (!stop) result.trajectory.samples.push_back(s);
  }
  return result;
}

// Free flight without any table or net, used by the trajectory fitter.
inline void integrate_free_flight(const BallState& init, const PhysicsConstants& constants, double dt, std::size_t steps,
                                  std::vector<Vec3>& positions) {
  positions.resize(steps + 1);
  positions[0] = init.position;
  const Vec3 g = constants.gravity();
  const double kd = constants.drag_factor();
  Vec3 p = init.position;
  Vec3 v = init.velocity;
  for (std::size_t k = 1; k <= steps; ++k) {
    const Vec3 a = g - kd * v.norm() * v;
    p += dt * (v + dt * a / 2.0);
    v += dt * a;
    positions[k] = p;
  }
}

}  // namespace is2r
