#include "mplane/qlearn.hpp"

#include "mplane/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace mplane {

void TrainerConfig::validate() const {
  const auto require = [](bool ok, const char* what) {
    if (!ok) throw InvalidConfigError(what);
  };
  require(lr_weights > 0 && lr_arch > 0, "learning rates must be positive");
  require(gamma >= 0 && gamma <= 1, "gamma must lie in [0, 1]");
  require(batch >= 1, "batch must be positive");
  require(buffer_capacity >= static_cast<std::size_t>(batch), "buffer capacity must hold a batch");
  require(target_sync_every >= 1, "target_sync_every must be positive");
  require(epsilon_start >= 0 && epsilon_start <= 1 && epsilon_end >= 0 && epsilon_end <= 1,
          "epsilon endpoints must lie in [0, 1]");
  require(epsilon_fraction > 0 && epsilon_fraction <= 1, "epsilon_fraction must lie in (0, 1]");
  require(horizon_train >= 1 && horizon_test >= 1, "horizons must be positive");
  require(epochs >= 1 && search_epochs >= 1 && episodes_per_epoch >= 1, "epoch counts must be positive");
  require(train_every >= 1, "train_every must be positive");
  require(tau_start > 0 && tau_end > 0, "temperatures must be positive");
  require(is_beta_start >= 0 && is_beta_end >= 0, "importance exponents must be non-negative");
  require(priority_exponent >= 0 && priority_offset > 0, "priority exponent >= 0 and offset > 0 required");
  require(step_sizes.angle > 0 && step_sizes.distance > 0, "step sizes must be positive");
  require(init_range.angle >= 0 && init_range.distance >= 0, "init range must be non-negative");
  net.validate();
}

Variant Variant::from_name(const std::string& name) {
  using nas::RnnMode;
  using nas::SamplerKind;
  if (name == "MARL") return {false, RnnMode::None, SamplerKind::Gdas};
  if (name == "MARL-R") return {false, RnnMode::Lstm, SamplerKind::Gdas};
  if (name == "G-MARL") return {true, RnnMode::None, SamplerKind::Gdas};
  if (name == "G-MARL-R") return {true, RnnMode::Lstm, SamplerKind::Gdas};
  if (name == "Ours") return {true, RnnMode::Searched, SamplerKind::Gdas};
  if (name == "D-MARL") return {true, RnnMode::None, SamplerKind::Darts};
  if (name == "D-MARL-R") return {true, RnnMode::Lstm, SamplerKind::Darts};
  if (name == "D-Ours") return {true, RnnMode::Searched, SamplerKind::Darts};
  throw InvalidConfigError("unknown variant: " + name);
}

std::string Variant::name() const {
  using nas::RnnMode;
  if (!searched_backbone) {
    if (rnn == RnnMode::None) return "MARL";
    if (rnn == RnnMode::Lstm) return "MARL-R";
    return "MARL-S";
  }
  const std::string prefix = sampler == nas::SamplerKind::Darts ? "D-" : "G-";
  if (rnn == RnnMode::Searched) return sampler == nas::SamplerKind::Darts ? "D-Ours" : "Ours";
  return prefix + (rnn == RnnMode::Lstm ? "MARL-R" : "MARL");
}

// ---- network

template <typename Scalar>
QNetwork<Scalar>::QNetwork(const nas::SupernetConfig& cfg, nas::RnnMode rnn, std::mt19937_64& rng)
    : agents_(cfg, rng), rnn_(rnn, rng) {}

template <typename Scalar>
QNetwork<Scalar>::QNetwork(const nas::SupernetConfig& cfg, const nas::Genotype& genotype, nas::RnnMode rnn,
                           std::mt19937_64& rng)
    : agents_(cfg, genotype, rng),
      rnn_(rnn == nas::RnnMode::Searched ? nas::Calibrator<Scalar>(genotype.rnn, rng)
                                         : nas::Calibrator<Scalar>(rnn, rng)) {}

template <typename Scalar>
typename QNetwork<Scalar>::Mat QNetwork<Scalar>::forward(const Tensor& obs, const nas::ArchitectureSample* sample) {
  raw_ = agents_.forward(obs, sample);
  return rnn_.forward(raw_, sample);
}

template <typename Scalar>
void QNetwork<Scalar>::backward(const Mat& gq, nas::ArchitectureSample* sample) {
  agents_.backward(rnn_.backward(gq, sample), sample);
}

template <typename Scalar>
nn::ParamList<Scalar> QNetwork<Scalar>::params() {
  nn::ParamList<Scalar> out = agents_.params();
  for (auto* p : rnn_.params()) out.push_back(p);
  return out;
}

template class QNetwork<float>;
template class QNetwork<double>;

// ---- learning rules

namespace {

int row_argmax(const Eigen::MatrixXd& m, Eigen::Index row) {
  int best = 0;
  for (int a = 1; a < m.cols(); ++a)
    if (m(row, a) > m(row, best)) best = a;
  return best;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

JointAction select_actions(const Eigen::MatrixXd& qprime, double epsilon, std::mt19937_64& rng) {
  if (qprime.rows() != kAgents || qprime.cols() != kActions) throw ShapeMismatchError("Q' must be 3 x 8");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw InvalidConfigError("epsilon must lie in [0, 1]");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, kActions - 1);
  JointAction a;
  for (int k = 0; k < kAgents; ++k)
    a[k] = ActionId(u(rng) < epsilon ? pick(rng) : row_argmax(qprime, k));
  return a;
}

Eigen::MatrixXd ddqn_targets(const Eigen::MatrixXd& rewards, const Eigen::MatrixXd& online_next,
                             const Eigen::MatrixXd& target_next, double gamma) {
  const Eigen::Index b = rewards.rows();
  if (rewards.cols() != kAgents || online_next.rows() != b * kAgents || target_next.rows() != b * kAgents ||
      online_next.cols() != kActions || target_next.cols() != kActions)
    throw ShapeMismatchError("ddqn_targets: inconsistent batch shapes");
  Eigen::MatrixXd q(b, kAgents);
  for (Eigen::Index i = 0; i < b; ++i)
    for (int k = 0; k < kAgents; ++k) {
      const Eigen::Index row = i * kAgents + k;
      q(i, k) = rewards(i, k) + gamma * target_next(row, row_argmax(online_next, row));
    }
  return q;
}

TdLoss td_loss(const Eigen::MatrixXd& q, const std::vector<JointAction>& actions, const Eigen::MatrixXd& targets,
               const std::vector<double>& weights) {
  const auto b = static_cast<Eigen::Index>(actions.size());
  if (b == 0 || targets.rows() != b || targets.cols() != kAgents || q.rows() != b * kAgents ||
      q.cols() != kActions || weights.size() != actions.size())
    throw ShapeMismatchError("td_loss: inconsistent batch shapes");
  TdLoss out;
  out.grad = Eigen::MatrixXd::Zero(q.rows(), q.cols());
  out.td.resize(b, kAgents);
  for (Eigen::Index i = 0; i < b; ++i)
    for (int k = 0; k < kAgents; ++k) {
      const Eigen::Index row = i * kAgents + k;
      const int a = actions[static_cast<std::size_t>(i)][k].value();
      const double td = targets(i, k) - q(row, a);
      const double w = weights[static_cast<std::size_t>(i)];
      out.td(i, k) = td;
      out.loss += w * td * td;
      out.grad(row, a) = -2.0 * w * td / static_cast<double>(b);
    }
  out.loss /= static_cast<double>(b);
  return out;
}

template <typename Scalar>
bool sync_target(QNetwork<Scalar>& online, QNetwork<Scalar>& target, long step, long every) {
  if (every <= 0 || step % every != 0) return false;
  nn::copy_values(online.params(), target.params());
  return true;
}

template bool sync_target(QNetwork<float>&, QNetwork<float>&, long, long);
template bool sync_target(QNetwork<double>&, QNetwork<double>&, long, long);

double linear_schedule(double start, double end, double progress) {
  const double p = std::clamp(progress, 0.0, 1.0);
  return start + (end - start) * p;
}

void write_curves(const std::vector<EpochRecord>& curves, std::ostream& os) {
  os << "epoch,accumulated_reward,mean_SAD,loss,epsilon,tau\n" << std::setprecision(10);
  for (const auto& r : curves)
    os << r.epoch << ',' << r.accumulated_reward << ',' << r.mean_sad << ',' << r.loss << ',' << r.epsilon << ','
       << r.tau << '\n';
}

std::vector<EpochRecord> read_curves(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("empty curves file");
  std::vector<EpochRecord> out;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    EpochRecord r;
    if (!(ss >> r.epoch >> r.accumulated_reward >> r.mean_sad >> r.loss >> r.epsilon >> r.tau))
      throw IoError("malformed curves row " + std::to_string(lineno));
    out.push_back(r);
  }
  return out;
}

std::uint64_t init_seed(std::uint64_t base, std::size_t index) {
  return splitmix64(base ^ splitmix64(static_cast<std::uint64_t>(index) + 1));
}

std::uint64_t validation_seed(std::uint64_t run_seed) { return splitmix64(run_seed ^ 0x6a09e667f3bcc909ULL); }

std::uint64_t evaluation_seed(std::uint64_t run_seed) { return splitmix64(run_seed ^ 0xbb67ae8584caa73bULL); }

namespace {

nn::Tensor<float> observation_tensor(const MultiAgentState& s, int size) {
  nn::Tensor<float> t(kAgents, kHistory, size, size);
  for (int k = 0; k < kAgents; ++k) {
    const auto& obs = s.agents[k].observation;
    std::copy(obs.begin(), obs.end(), t.sample(k));
  }
  return t;
}

Eigen::MatrixXd to_double(const nn::Mat<float>& m) { return m.cast<double>(); }

}  // namespace

std::vector<Trajectory> greedy_rollouts(QNetwork<float>& net, const nas::ArchitectureSample* sample,
                                        const std::vector<PhantomCase>& cases, const Environment& env,
                                        const InitRange& range, int horizon, std::uint64_t seed) {
  const Policy greedy = [&](const MultiAgentState& s, std::mt19937_64& rng) {
    const Eigen::MatrixXd q = to_double(net.forward(observation_tensor(s, env.obs_size()), sample));
    return select_actions(q, 0.0, rng);
  };
  std::vector<Trajectory> out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    std::mt19937_64 rng(init_seed(seed, i));
    out.push_back(rollout(env, greedy, cases[i], range, horizon, rng));
  }
  return out;
}

std::vector<Trajectory> random_rollouts(const std::vector<PhantomCase>& cases, const Environment& env,
                                        const InitRange& range, int horizon, std::uint64_t seed) {
  const Policy uniform = [](const MultiAgentState&, std::mt19937_64& rng) { return random_action(rng); };
  std::vector<Trajectory> out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    std::mt19937_64 rng(init_seed(seed, i));
    out.push_back(rollout(env, uniform, cases[i], range, horizon, rng));
  }
  return out;
}

Validation summarize(const std::vector<Trajectory>& runs, const std::vector<PhantomCase>& cases) {
  if (runs.empty() || runs.size() != cases.size()) throw InsufficientDataError("no rollouts to summarize");
  Validation v;
  for (const auto& t : runs) {
    v.accumulated_reward += t.total_reward();
    v.mean_sad += t.steps.back().sad.mean();
  }
  v.accumulated_reward /= static_cast<double>(runs.size());
  v.mean_sad /= static_cast<double>(runs.size());
  return v;
}

std::vector<CaseRecord> case_records(const std::vector<Trajectory>& runs, const std::vector<PhantomCase>& cases,
                                     int slice_size) {
  if (runs.size() != cases.size()) throw ShapeMismatchError("rollouts and cases differ in count");
  std::vector<CaseRecord> out;
  for (std::size_t i = 0; i < runs.size(); ++i)
    out.push_back({cases[i].name, evaluate_case(runs[i].final_planes, cases[i], slice_size)});
  return out;
}

// ---- trainer

Trainer::Trainer(const TrainerConfig& cfg, const Variant& variant, const std::vector<PhantomCase>& train,
                 const std::vector<PhantomCase>& val, std::uint64_t seed, const nas::Genotype* genotype)
    : cfg_(cfg),
      variant_(variant),
      train_(train),
      val_(val),
      searching_(genotype == nullptr),
      rng_(seed),
      val_seed_(mplane::validation_seed(seed)),
      env_(cfg.net.obs_size, cfg.horizon_train, cfg.step_sizes),
      buffer_(cfg.buffer_capacity, cfg.priority_exponent, cfg.priority_offset) {
  cfg_.validate();
  if (train_.empty()) throw InsufficientDataError("training set is empty");
  if (val_.empty()) throw InsufficientDataError("validation set is empty");
  if (searching_) {
    if (!variant_.needs_search()) throw InvalidConfigError(variant_.name() + " has nothing to search");
    online_ = std::make_unique<QNetwork<float>>(cfg_.net, variant_.rnn, rng_);
    target_ = std::make_unique<QNetwork<float>>(cfg_.net, variant_.rnn, rng_);
  } else {
    online_ = std::make_unique<QNetwork<float>>(cfg_.net, *genotype, variant_.rnn, rng_);
    target_ = std::make_unique<QNetwork<float>>(cfg_.net, *genotype, variant_.rnn, rng_);
  }
  nn::copy_values(online_->params(), target_->params());
  alpha_ = nas::ArchitectureParams::random(rng_);
  alpha_.tau = cfg_.tau_start;
  opt_weights_ = std::make_unique<nn::Adam<float>>(online_->params(), cfg_.lr_weights);
  if (searching_) opt_arch_ = std::make_unique<nn::Adam<double>>(alpha_.params(), cfg_.lr_arch);
  total_env_steps_ = static_cast<long>(searching_ ? cfg_.search_epochs : cfg_.epochs) * cfg_.episodes_per_epoch *
                     cfg_.horizon_train;
}

double Trainer::epsilon() const {
  const double span = cfg_.epsilon_fraction * static_cast<double>(total_env_steps_);
  return linear_schedule(cfg_.epsilon_start, cfg_.epsilon_end, static_cast<double>(env_steps_) / span);
}

std::optional<nas::ArchitectureSample> Trainer::draw_sample() {
  if (!searching_) return std::nullopt;
  return nas::sample_architecture(alpha_, variant_.sampler, rng_);
}

const nas::ArchitectureSample* Trainer::eval_sample() {
  if (!searching_) return nullptr;
  std::mt19937_64 unused(0);
  eval_sample_ = nas::sample_architecture(alpha_, nas::SamplerKind::Argmax, unused);
  return &*eval_sample_;
}

nn::Tensor<float> Trainer::render(const MultiAgentState& s) const { return observation_tensor(s, env_.obs_size()); }

nn::Tensor<float> Trainer::render(const std::vector<const Transition*>& batch, bool next) const {
  const int size = env_.obs_size();
  nn::Tensor<float> t(static_cast<int>(batch.size()) * kAgents, kHistory, size, size);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Transition& tr = *batch[b];
    const StateSnapshot& snap = next ? tr.next_obs : tr.obs;
    const Volume& volume = train_.at(static_cast<std::size_t>(tr.case_index)).volume;
    for (int k = 0; k < kAgents; ++k)
      env_.render(volume, snap.planes[k], t.sample(static_cast<int>(b) * kAgents + k));
  }
  return t;
}

double Trainer::train_step(TrainMode mode) {
  if (mode == TrainMode::Arch && !searching_) throw InvalidConfigError("architecture steps need a search network");
  const auto n = static_cast<std::size_t>(cfg_.batch);
  const ReplaySample batch =
      buffer_.sample(n, mode == TrainMode::Weights ? SampleMode::Prioritized : SampleMode::Uniform, rng_);
  std::optional<nas::ArchitectureSample> arch = draw_sample();
  nas::ArchitectureSample* ap = arch ? &*arch : nullptr;

  const nn::Tensor<float> next = render(batch.transitions, true);
  const Eigen::MatrixXd online_next = to_double(online_->forward(next, ap));
  const Eigen::MatrixXd target_next = to_double(target_->forward(next, ap));
  Eigen::MatrixXd rewards(static_cast<Eigen::Index>(n), kAgents);
  std::vector<JointAction> actions;
  for (std::size_t b = 0; b < n; ++b) {
    rewards.row(static_cast<Eigen::Index>(b)) = batch.transitions[b]->rewards.transpose();
    actions.push_back(batch.transitions[b]->actions);
  }
  const Eigen::MatrixXd targets = ddqn_targets(rewards, online_next, target_next, cfg_.gamma);

  const Eigen::MatrixXd q = to_double(online_->forward(render(batch.transitions, false), ap));
  const std::vector<double> weights =
      mode == TrainMode::Weights ? batch.is_weights : std::vector<double>(n, 1.0);
  const TdLoss tl = td_loss(q, actions, targets, weights);
  if (ap) ap->zero_grad();
  online_->backward(tl.grad.cast<float>(), ap);

  if (mode == TrainMode::Weights) {
    opt_weights_->step();
    std::vector<double> errors(n);
    for (std::size_t b = 0; b < n; ++b) errors[b] = tl.td.row(static_cast<Eigen::Index>(b)).cwiseAbs().mean();
    buffer_.update_priorities(batch.indices, errors);
    ++weight_steps_;
    sync_target(*online_, *target_, weight_steps_, cfg_.target_sync_every);
  } else {
    nas::accumulate_arch_gradient(*ap, alpha_);
    opt_arch_->step();
    alpha_.zero_grad();
  }
  opt_weights_->zero_grad();
  return tl.loss;
}

void Trainer::run_episode() {
  std::uniform_int_distribution<std::size_t> pick(0, train_.size() - 1);
  const std::size_t idx = pick(rng_);
  MultiAgentState state = env_.reset(train_[idx], cfg_.init_range, rng_);
  const std::size_t ready = std::max(cfg_.learn_start, static_cast<std::size_t>(cfg_.batch));
  for (int t = 0; t < cfg_.horizon_train; ++t) {
    std::optional<nas::ArchitectureSample> arch = draw_sample();
    const Eigen::MatrixXd q = to_double(online_->forward(render(state), arch ? &*arch : nullptr));
    const JointAction a = select_actions(q, epsilon(), rng_);
    StepResult res = env_.step(state, a);
    Transition tr;
    tr.case_index = static_cast<int>(idx);
    tr.obs = Environment::snapshot(state);
    tr.actions = a;
    tr.rewards = res.rewards;
    tr.next_obs = Environment::snapshot(res.state);
    buffer_.push(std::move(tr));
    state = std::move(res.state);
    ++env_steps_;
    if (buffer_.size() >= ready && env_steps_ % cfg_.train_every == 0) {
      buffer_.set_is_beta(linear_schedule(cfg_.is_beta_start, cfg_.is_beta_end,
                                          static_cast<double>(env_steps_) / static_cast<double>(total_env_steps_)));
      epoch_losses_.push_back(train_step(TrainMode::Weights));
      if (searching_) train_step(TrainMode::Arch);
    }
  }
}

Validation Trainer::validate() {
  const nas::ArchitectureSample* sample = eval_sample();
  return summarize(greedy_rollouts(*online_, sample, val_, env_, cfg_.init_range, cfg_.horizon_test, val_seed_), val_);
}

EpochRecord Trainer::run_epoch(int epoch) {
  if (searching_) {
    const int span = std::max(1, cfg_.search_epochs - 1);
    alpha_.tau = linear_schedule(cfg_.tau_start, cfg_.tau_end, static_cast<double>(epoch) / span);
  }
  epoch_losses_.clear();
  for (int e = 0; e < cfg_.episodes_per_epoch; ++e) run_episode();
  const Validation v = validate();
  EpochRecord r;
  r.epoch = epoch + 1;
  r.accumulated_reward = v.accumulated_reward;
  r.mean_sad = v.mean_sad;
  if (!epoch_losses_.empty())
    r.loss = std::accumulate(epoch_losses_.begin(), epoch_losses_.end(), 0.0) / static_cast<double>(epoch_losses_.size());
  r.epsilon = epsilon();
  r.tau = searching_ ? alpha_.tau : 0.0;
  return r;
}

SearchResult run_search(const std::vector<PhantomCase>& train, const std::vector<PhantomCase>& val,
                        const TrainerConfig& cfg, const Variant& variant, std::uint64_t seed,
                        const Progress& progress) {
  Trainer trainer(cfg, variant, train, val, seed);
  std::vector<double> history;
  std::vector<nas::ArchitectureParams> snapshots;
  SearchResult out;
  for (int e = 0; e < cfg.search_epochs; ++e) {
    const EpochRecord r = trainer.run_epoch(e);
    history.push_back(r.accumulated_reward);
    snapshots.push_back(trainer.alpha());
    out.curves.push_back(r);
    if (progress) progress(r);
  }
  nas::Selection sel = nas::select_architecture(history, snapshots);
  out.alpha = std::move(sel.alpha);
  out.epoch = sel.epoch;
  out.genotype = nas::derive_genotype(out.alpha);
  return out;
}

TrainResult run_train(const std::vector<PhantomCase>& train, const std::vector<PhantomCase>& val,
                      const TrainerConfig& cfg, const Variant& variant, const nas::Genotype& genotype,
                      std::uint64_t seed, const Progress& progress) {
  Trainer trainer(cfg, variant, train, val, seed, &genotype);
  TrainResult out;
  for (int e = 0; e < cfg.epochs; ++e) {
    const EpochRecord r = trainer.run_epoch(e);
    out.curves.push_back(r);
    if (progress) progress(r);
  }
  out.final_validation = {out.curves.back().accumulated_reward, out.curves.back().mean_sad};
  out.network = trainer.release_online();
  return out;
}

nas::Genotype effective_genotype(const Variant& v, const nas::Genotype* searched) {
  if (v.needs_search() && searched == nullptr)
    throw MissingPrerequisiteError(v.name() + " needs a searched genotype; run search first");
  if (v.searched_backbone) return *searched;
  nas::Genotype g = nas::fixed_backbone_genotype();
  if (v.rnn == nas::RnnMode::Searched) g.rnn = searched->rnn;
  return g;
}

// ---- parameter checkpoints

namespace {

void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(buf, 8);
}

double get_f64(std::istream& is) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8)) throw IoError("truncated parameter checkpoint");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace

template <typename Scalar>
void save_params(const nn::ParamList<Scalar>& params, const std::filesystem::path& stem) {
  const std::filesystem::path bin = stem.string() + ".bin";
  std::ofstream manifest(stem.string() + ".manifest");
  std::ofstream data(bin, std::ios::binary);
  if (!manifest || !data) throw IoError("cannot write checkpoint " + stem.string());
  manifest << "mplane-params 1\nencoding float64-le column-major\ndata " << bin.filename().string() << "\ncount "
           << params.size() << "\n";
  for (const auto* p : params) {
    manifest << "param " << p->name << ' ' << p->value.rows() << ' ' << p->value.cols() << '\n';
    for (Eigen::Index i = 0; i < p->value.size(); ++i) put_f64(data, static_cast<double>(p->value.data()[i]));
  }
}

template <typename Scalar>
void load_params(const nn::ParamList<Scalar>& params, const std::filesystem::path& stem) {
  std::ifstream manifest(stem.string() + ".manifest");
  if (!manifest) throw MissingPrerequisiteError("checkpoint not found: " + stem.string() + ".manifest");
  std::string magic, key, datafile;
  int version = 0;
  manifest >> magic >> version;
  if (magic != "mplane-params" || version != 1) throw IoError("unsupported checkpoint manifest");
  std::size_t count = 0, seen = 0;
  std::ifstream data;
  while (manifest >> key) {
    if (key == "encoding") {
      std::string enc, order;
      manifest >> enc >> order;
      if (enc != "float64-le" || order != "column-major") throw IoError("unsupported checkpoint encoding");
    } else if (key == "data") {
      manifest >> datafile;
      data.open(stem.parent_path() / datafile, std::ios::binary);
      if (!data) throw MissingPrerequisiteError("checkpoint data not found: " + datafile);
    } else if (key == "count") {
      manifest >> count;
      if (count != params.size()) throw ShapeMismatchError("checkpoint holds a different network");
    } else if (key == "param") {
      std::string name;
      Eigen::Index r = 0, c = 0;
      manifest >> name >> r >> c;
      if (seen >= params.size() || !data.is_open()) throw IoError("malformed checkpoint manifest");
      auto* p = params[seen++];
      if (p->name != name || p->value.rows() != r || p->value.cols() != c)
        throw ShapeMismatchError("checkpoint parameter mismatch at " + name);
      for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = static_cast<Scalar>(get_f64(data));
    } else {
      throw IoError("unknown checkpoint key: " + key);
    }
  }
  if (seen != params.size()) throw IoError("checkpoint is incomplete");
}

template void save_params(const nn::ParamList<float>&, const std::filesystem::path&);
template void save_params(const nn::ParamList<double>&, const std::filesystem::path&);
template void load_params(const nn::ParamList<float>&, const std::filesystem::path&);
template void load_params(const nn::ParamList<double>&, const std::filesystem::path&);

}  // namespace mplane
