#pragma once

#include "mplane/calibrator.hpp"
#include "mplane/env.hpp"
#include "mplane/eval.hpp"
#include "mplane/nas.hpp"
#include "mplane/replay.hpp"
#include "mplane/supernet.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mplane {

struct TrainerConfig {
  double lr_weights = 5e-5;
  double lr_arch = 0.05;
  double gamma = 0.9;
  int batch = 32;
  std::size_t buffer_capacity = 15000;
  long target_sync_every = 1500;
  double epsilon_start = 1.0;
  double epsilon_end = 0.1;
  double epsilon_fraction = 0.5;  ///< share of all environment steps spent annealing
  int horizon_train = 50;
  int horizon_test = 30;
  int epochs = 40;
  int search_epochs = 20;
  int episodes_per_epoch = 10;
  int train_every = 4;            ///< environment steps per optimization iteration
  std::size_t learn_start = 500;  ///< transitions required before optimizing
  double tau_start = 10.0;
  double tau_end = 0.1;
  double is_beta_start = 0.4;
  double is_beta_end = 1.0;
  double priority_exponent = 0.6;
  double priority_offset = 0.05;
  StepSizes step_sizes;
  InitRange init_range;
  nas::SupernetConfig net;

  void validate() const;
};

enum class TrainMode { Weights, Arch };

/// Network family of an experiment: backbone, calibrator and search sampler.
struct Variant {
  bool searched_backbone = true;
  nas::RnnMode rnn = nas::RnnMode::Searched;
  nas::SamplerKind sampler = nas::SamplerKind::Gdas;

  /// MARL, MARL-R, G-MARL, G-MARL-R, Ours, D-MARL, D-MARL-R, D-Ours.
  static Variant from_name(const std::string& name);
  std::string name() const;
  /// True when a search stage is needed before training.
  bool needs_search() const { return searched_backbone || rnn == nas::RnnMode::Searched; }
};

/// Agent supernet (or fixed network) followed by the calibrator.
template <typename Scalar>
class QNetwork {
 public:
  using Tensor = nn::Tensor<Scalar>;
  using Mat = nn::Mat<Scalar>;

  /// Searchable network; the calibrator searches only in Searched mode.
  QNetwork(const nas::SupernetConfig& cfg, nas::RnnMode rnn, std::mt19937_64& rng);
  /// Discrete network built from a genotype.
  QNetwork(const nas::SupernetConfig& cfg, const nas::Genotype& genotype, nas::RnnMode rnn, std::mt19937_64& rng);

  bool search() const { return agents_.search() || rnn_.search(); }

  /// Calibrated Q-values, one row per (state, agent).
  Mat forward(const Tensor& obs, const nas::ArchitectureSample* sample);
  /// Raw agent Q-values of the last forward.
  const Mat& raw() const { return raw_; }
  void backward(const Mat& gq, nas::ArchitectureSample* sample);

  nn::ParamList<Scalar> params();
  nas::Supernet<Scalar>& agents() { return agents_; }
  nas::Calibrator<Scalar>& calibrator() { return rnn_; }

 private:
  nas::Supernet<Scalar> agents_;
  nas::Calibrator<Scalar> rnn_;
  Mat raw_;
};

/// Per agent: uniform action with probability epsilon, else the row argmax
/// (ties to the lowest index). `qprime` is kAgents x kActions.
JointAction select_actions(const Eigen::MatrixXd& qprime, double epsilon, std::mt19937_64& rng);

/// q* = r + gamma * target(s')[argmax online(s')] per (state, agent).
/// rewards is B x kAgents; the Q sets are (B * kAgents) x kActions.
Eigen::MatrixXd ddqn_targets(const Eigen::MatrixXd& rewards, const Eigen::MatrixXd& online_next,
                             const Eigen::MatrixXd& target_next, double gamma);

struct TdLoss {
  double loss = 0.0;
  Eigen::MatrixXd grad;  ///< dL/dQ, (B * kAgents) x kActions
  Eigen::MatrixXd td;    ///< q* - Q(s, a), B x kAgents
};

/// Loss = (1/B) sum_b w_b sum_k (q*_bk - Q_bk(a_bk))^2.
TdLoss td_loss(const Eigen::MatrixXd& q, const std::vector<JointAction>& actions, const Eigen::MatrixXd& targets,
               const std::vector<double>& weights);

/// Copies online parameters into the target when step is a multiple of `every`.
template <typename Scalar>
bool sync_target(QNetwork<Scalar>& online, QNetwork<Scalar>& target, long step, long every);

double linear_schedule(double start, double end, double progress);

struct EpochRecord {
  int epoch = 0;
  double accumulated_reward = 0.0;  ///< validation, mean per case
  double mean_sad = 0.0;            ///< validation, final step
  double loss = 0.0;                ///< mean weights-mode loss of the epoch
  double epsilon = 0.0;
  double tau = 0.0;
};

void write_curves(const std::vector<EpochRecord>& curves, std::ostream& os);
std::vector<EpochRecord> read_curves(std::istream& is);

struct Validation {
  double accumulated_reward = 0.0;
  double mean_sad = 0.0;
};

/// Seed of the initial planes for case `index` of an evaluation set.
std::uint64_t init_seed(std::uint64_t base, std::size_t index);
/// Bases of the validation and test initializations of a run.
std::uint64_t validation_seed(std::uint64_t run_seed);
std::uint64_t evaluation_seed(std::uint64_t run_seed);

/// Greedy rollouts with the network, each case started from init_seed(seed, i).
std::vector<Trajectory> greedy_rollouts(QNetwork<float>& net, const nas::ArchitectureSample* sample,
                                        const std::vector<PhantomCase>& cases, const Environment& env,
                                        const InitRange& range, int horizon, std::uint64_t seed);
/// Uniform-random rollouts from the same initial planes as greedy_rollouts.
std::vector<Trajectory> random_rollouts(const std::vector<PhantomCase>& cases, const Environment& env,
                                        const InitRange& range, int horizon, std::uint64_t seed);
Validation summarize(const std::vector<Trajectory>& runs, const std::vector<PhantomCase>& cases);
std::vector<CaseRecord> case_records(const std::vector<Trajectory>& runs, const std::vector<PhantomCase>& cases,
                                     int slice_size);

/// Search (no genotype) or retraining (genotype given) over a training set.
class Trainer {
 public:
  Trainer(const TrainerConfig& cfg, const Variant& variant, const std::vector<PhantomCase>& train,
          const std::vector<PhantomCase>& val, std::uint64_t seed, const nas::Genotype* genotype = nullptr);

  bool searching() const { return searching_; }
  /// One optimization step; throws InsufficientDataError when the buffer holds fewer than `batch` transitions.
  double train_step(TrainMode mode);
  /// Collects one episode on a random training case, optimizing along the way.
  void run_episode();
  EpochRecord run_epoch(int epoch);
  Validation validate();

  /// Architecture used for greedy evaluation (argmax of alpha), or null for a fixed network.
  const nas::ArchitectureSample* eval_sample();

  QNetwork<float>& online() { return *online_; }
  std::unique_ptr<QNetwork<float>> release_online() { return std::move(online_); }
  QNetwork<float>& target() { return *target_; }
  ReplayBuffer& buffer() { return buffer_; }
  nas::ArchitectureParams& alpha() { return alpha_; }
  const TrainerConfig& config() const { return cfg_; }
  const Environment& environment() const { return env_; }
  long env_steps() const { return env_steps_; }
  long weight_steps() const { return weight_steps_; }
  double epsilon() const;
  std::uint64_t validation_seed() const { return val_seed_; }

 private:
  nn::Tensor<float> render(const std::vector<const Transition*>& batch, bool next) const;
  nn::Tensor<float> render(const MultiAgentState& s) const;
  std::optional<nas::ArchitectureSample> draw_sample();

  TrainerConfig cfg_;
  Variant variant_;
  const std::vector<PhantomCase>& train_;
  const std::vector<PhantomCase>& val_;
  bool searching_;
  std::mt19937_64 rng_;
  std::uint64_t val_seed_;
  Environment env_;
  ReplayBuffer buffer_;
  std::unique_ptr<QNetwork<float>> online_, target_;
  nas::ArchitectureParams alpha_;
  std::optional<nas::ArchitectureSample> eval_sample_;
  std::unique_ptr<nn::Adam<float>> opt_weights_;
  std::unique_ptr<nn::Adam<double>> opt_arch_;
  long env_steps_ = 0;
  long weight_steps_ = 0;
  long total_env_steps_ = 0;
  std::vector<double> epoch_losses_;
};

using Progress = std::function<void(const EpochRecord&)>;

struct SearchResult {
  nas::ArchitectureParams alpha;  ///< selected snapshot
  int epoch = 0;                  ///< 1-based selected epoch
  nas::Genotype genotype;
  std::vector<EpochRecord> curves;
};

SearchResult run_search(const std::vector<PhantomCase>& train, const std::vector<PhantomCase>& val,
                        const TrainerConfig& cfg, const Variant& variant, std::uint64_t seed,
                        const Progress& progress = {});

struct TrainResult {
  std::unique_ptr<QNetwork<float>> network;
  std::vector<EpochRecord> curves;
  Validation final_validation;
};

TrainResult run_train(const std::vector<PhantomCase>& train, const std::vector<PhantomCase>& val,
                      const TrainerConfig& cfg, const Variant& variant, const nas::Genotype& genotype,
                      std::uint64_t seed, const Progress& progress = {});

/// Genotype actually instantiated for a variant: the fixed backbone replaces
/// the CNN cells when the backbone is not searched.
nas::Genotype effective_genotype(const Variant& v, const nas::Genotype* searched);

/// Parameters as float64 little-endian at `stem`.bin with a text manifest.
template <typename Scalar>
void save_params(const nn::ParamList<Scalar>& params, const std::filesystem::path& stem);
template <typename Scalar>
void load_params(const nn::ParamList<Scalar>& params, const std::filesystem::path& stem);

}  // namespace mplane
