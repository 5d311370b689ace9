#include "mplane/env.hpp"

#include "mplane/error.hpp"

#include <ostream>

namespace mplane {

ActionId::ActionId(int value) : value_(value) {
  if (value < 0 || value >= kActions) throw InvalidConfigError("action id out of range");
}

Eigen::Vector4d StepSizes::delta(ActionId a) const {
  Eigen::Vector4d out = Eigen::Vector4d::Zero();
  out[a.parameter()] = a.sign() * (a.parameter() == 3 ? distance : angle);
  return out;
}

PlaneParams params_of(const Plane& p) {
  return PlaneParams(p.angles.x(), p.angles.y(), p.angles.z(), p.d);
}

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

Environment::Environment(int obs_size, int horizon, StepSizes steps)
    : obs_size_(obs_size), horizon_(horizon), steps_(steps) {
  if (obs_size < 8) throw InvalidConfigError("observation size must be >= 8");
  if (horizon < 1) throw InvalidConfigError("horizon must be >= 1");
  if (!(steps.angle > 0.0 && steps.distance > 0.0)) throw InvalidConfigError("step sizes must be positive");
}

ParamDistance Environment::metric(const PhantomCase& scene) const {
  return ParamDistance::for_shape(scene.volume.shape());
}

void Environment::render(const Volume& v, const std::array<Plane, kHistory>& planes, float* out) const {
  const std::size_t plane_px = static_cast<std::size_t>(obs_size_) * obs_size_;
  for (int h = 0; h < kHistory; ++h) slice_into(v, planes[h], obs_size_, out + h * plane_px);
}

MultiAgentState Environment::reset(const PhantomCase& scene, const InitRange& range,
                                   std::mt19937_64& rng) const {
  if (!(range.angle >= 0.0 && range.distance >= 0.0)) throw InvalidConfigError("init range must be >= 0");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MultiAgentState s;
  s.scene = &scene;
  const std::size_t px = static_cast<std::size_t>(kHistory) * obs_size_ * obs_size_;
  for (int k = 0; k < kAgents; ++k) {
    PlaneParams p = params_of(scene.gt_planes[k]);
    for (int i = 0; i < 3; ++i) p[i] += (2.0 * unit(rng) - 1.0) * range.angle;
    p[3] += (2.0 * unit(rng) - 1.0) * range.distance;
    auto& a = s.agents[k];
    a.params.fill(p);
    a.planes.fill(plane_from_params(p));
    a.observation.resize(px);
    render(scene.volume, a.planes, a.observation.data());
  }
  return s;
}

double Environment::distance(const MultiAgentState& s, int k) const {
  return metric(*s.scene)(s.agents[k].planes[0], s.scene->gt_planes[k]);
}

StepResult Environment::step(const MultiAgentState& s, const JointAction& a) const {
  if (s.step >= horizon_) throw InvalidConfigError("step called past the horizon");
  const ParamDistance dist = metric(*s.scene);
  StepResult out;
  out.state.scene = s.scene;
  out.state.step = s.step + 1;
  const std::size_t plane_px = static_cast<std::size_t>(obs_size_) * obs_size_;
  for (int k = 0; k < kAgents; ++k) {
    const AgentState& prev = s.agents[k];
    AgentState& next = out.state.agents[k];
    const PlaneParams p = prev.params[0] + steps_.delta(a[k]);
    next.params[0] = p;
    next.planes[0] = plane_from_params(p);
    for (int h = 1; h < kHistory; ++h) {
      next.params[h] = prev.params[h - 1];
      next.planes[h] = prev.planes[h - 1];
    }
    next.observation.resize(prev.observation.size());
    slice_into(s.scene->volume, next.planes[0], obs_size_, next.observation.data());
    std::copy(prev.observation.begin(), prev.observation.end() - plane_px,
              next.observation.begin() + plane_px);
    const Plane& gt = s.scene->gt_planes[k];
    out.rewards[k] = sgn(dist(prev.planes[0], gt) - dist(next.planes[0], gt));
  }
  out.done = out.state.step == horizon_;
  return out;
}

StateSnapshot Environment::snapshot(const MultiAgentState& s) {
  StateSnapshot snap;
  for (int k = 0; k < kAgents; ++k) snap.planes[k] = s.agents[k].planes;
  return snap;
}

double Trajectory::total_reward() const {
  double sum = 0.0;
  for (const auto& s : steps) sum += s.rewards.sum();
  return sum;
}

JointAction random_action(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, kActions - 1);
  JointAction a;
  for (auto& x : a) x = ActionId(pick(rng));
  return a;
}

Trajectory rollout(const Environment& env, const Policy& policy, const PhantomCase& scene,
                   const InitRange& range, int horizon, std::mt19937_64& rng,
                   const std::function<void(const MultiAgentState&, const JointAction&,
                                            const StepResult&)>& on_step) {
  if (horizon < 1) throw InvalidConfigError("rollout horizon must be >= 1");
  const Environment bounded(env.obs_size(), horizon, env.step_sizes());
  const ParamDistance dist = env.metric(scene);
  Trajectory t;
  MultiAgentState s = bounded.reset(scene, range, rng);
  for (int k = 0; k < kAgents; ++k) t.initial[k] = s.agents[k].planes[0];
  for (int i = 0; i < horizon; ++i) {
    const JointAction a = policy(s, rng);
    StepResult r = bounded.step(s, a);
    if (on_step) on_step(s, a, r);
    StepRecord rec;
    rec.step = i;
    rec.actions = a;
    rec.rewards = r.rewards;
    for (int k = 0; k < kAgents; ++k) {
      const Plane& p = r.state.agents[k].planes[0];
      const Plane& g = scene.gt_planes[k];
      rec.distances[k] = dist(p, g);
      rec.sad[k] = dihedral_angle(p, g) + origin_distance_diff(p, g);
    }
    t.steps.push_back(rec);
    s = std::move(r.state);
  }
  for (int k = 0; k < kAgents; ++k) t.final_planes[k] = s.agents[k].planes[0];
  return t;
}

void write_trajectory(const Trajectory& t, std::ostream& os) {
  os << "step agent action reward D SAD\n";
  for (const auto& s : t.steps)
    for (int k = 0; k < kAgents; ++k)
      os << s.step << ' ' << k << ' ' << s.actions[k].value() << ' ' << s.rewards[k] << ' '
         << s.distances[k] << ' ' << s.sad[k] << '\n';
}

}  // namespace mplane
