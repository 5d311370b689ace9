#pragma once

#include "mplane/geometry.hpp"
#include "mplane/phantom.hpp"

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <random>
#include <vector>

namespace mplane {

inline constexpr int kAgents = 3;
inline constexpr int kActions = 8;
inline constexpr int kHistory = 3;

/// One of {+a_zeta, -a_zeta, +a_beta, -a_beta, +a_phi, -a_phi, +a_d, -a_d}.
class ActionId {
 public:
  constexpr ActionId() = default;
  explicit ActionId(int value);
  constexpr int value() const { return value_; }
  constexpr int parameter() const { return value_ / 2; }
  constexpr double sign() const { return value_ % 2 == 0 ? 1.0 : -1.0; }
  constexpr ActionId inverse() const { return ActionId(value_ ^ 1, 0); }
  friend constexpr bool operator==(ActionId, ActionId) = default;

 private:
  constexpr ActionId(int value, int) : value_(value) {}
  int value_ = 0;
};

using JointAction = std::array<ActionId, kAgents>;
using Rewards = Eigen::Vector3d;

struct StepSizes {
  double angle = 0.5;     ///< degrees, shared by zeta, beta, phi
  double distance = 0.1;  ///< voxels

  Eigen::Vector4d delta(ActionId a) const;
};

struct InitRange {
  double angle = 20.0;
  double distance = 4.0;
};

/// Raw plane parameters (zeta, beta, phi, d) as manipulated by an agent.
using PlaneParams = Eigen::Vector4d;

PlaneParams params_of(const Plane& p);

struct AgentState {
  std::array<PlaneParams, kHistory> params;  ///< most recent first
  std::array<Plane, kHistory> planes;
  /// kHistory channels of obs_size x obs_size, channel-major, row-major pixels.
  std::vector<float> observation;
};

struct MultiAgentState {
  std::array<AgentState, kAgents> agents;
  int step = 0;
  const PhantomCase* scene = nullptr;
};

/// Plane histories only; enough to re-render the observation of a state.
struct StateSnapshot {
  std::array<std::array<Plane, kHistory>, kAgents> planes;
};

struct Transition {
  int case_index = -1;
  StateSnapshot obs;
  JointAction actions;
  Rewards rewards = Rewards::Zero();
  StateSnapshot next_obs;
  double priority = 1.0;
};

struct StepResult {
  MultiAgentState state;
  Rewards rewards = Rewards::Zero();
  bool done = false;
};

class Environment {
 public:
  Environment(int obs_size, int horizon, StepSizes steps = {});

  int obs_size() const { return obs_size_; }
  int horizon() const { return horizon_; }
  const StepSizes& step_sizes() const { return steps_; }

  MultiAgentState reset(const PhantomCase& scene, const InitRange& range, std::mt19937_64& rng) const;
  StepResult step(const MultiAgentState& s, const JointAction& a) const;

  /// Parameter-space distance of agent k's current plane to its target.
  double distance(const MultiAgentState& s, int k) const;
  ParamDistance metric(const PhantomCase& scene) const;

  /// Renders kHistory slices per plane list into `out` (kHistory * S * S floats).
  void render(const Volume& v, const std::array<Plane, kHistory>& planes, float* out) const;

  static StateSnapshot snapshot(const MultiAgentState& s);

 private:
  int obs_size_;
  int horizon_;
  StepSizes steps_;
};

/// Sign of a double, 0 for exact zero.
double sgn(double x);

using Policy = std::function<JointAction(const MultiAgentState&, std::mt19937_64&)>;

struct StepRecord {
  int step = 0;
  JointAction actions;
  Rewards rewards = Rewards::Zero();
  Eigen::Vector3d distances = Eigen::Vector3d::Zero();  ///< D_k after the step
  Eigen::Vector3d sad = Eigen::Vector3d::Zero();        ///< Ang + Dis per agent after the step
};

struct Trajectory {
  std::vector<StepRecord> steps;
  std::array<Plane, kAgents> initial;
  std::array<Plane, kAgents> final_planes;
  double total_reward() const;
};

/// Exactly `horizon` steps (the environment horizon is ignored).
Trajectory rollout(const Environment& env, const Policy& policy, const PhantomCase& scene,
                   const InitRange& range, int horizon, std::mt19937_64& rng,
                   const std::function<void(const MultiAgentState&, const JointAction&,
                                            const StepResult&)>& on_step = {});

/// Uniform random joint action.
JointAction random_action(std::mt19937_64& rng);

/// Per-step text records: step agent action reward D SAD.
void write_trajectory(const Trajectory& t, std::ostream& os);

}  // namespace mplane
