#include "mplane/error.hpp"
#include "mplane/phantom.hpp"
#include "mplane/qlearn.hpp"
#include "mplane/stats.hpp"
#include "support.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>
#include <sstream>

using namespace mplane;
using namespace mplane::nas;

namespace {

Eigen::MatrixXd random_q(std::mt19937_64& rng, Eigen::Index rows) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd q(rows, kActions);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = n(rng);
  return q;
}

TrainerConfig tiny_config() {
  TrainerConfig c;
  c.net = testing::miniature_net();
  c.net.head_scale = 0.1;
  c.batch = 4;
  c.learn_start = 8;
  c.buffer_capacity = 200;
  c.horizon_train = 6;
  c.horizon_test = 4;
  c.episodes_per_epoch = 2;
  c.epochs = 2;
  c.search_epochs = 2;
  c.lr_weights = 1e-3;
  return c;
}

const std::vector<PhantomCase>& tiny_cases() {
  static const std::vector<PhantomCase> cases = [] {
    PhantomConfig pc;
    pc.shape = 48;
    std::vector<PhantomCase> out;
    for (std::uint64_t s = 0; s < 3; ++s) out.push_back(generate_phantom(100 + s, pc));
    return out;
  }();
  return cases;
}

std::vector<PhantomCase> tiny_train() { return {tiny_cases()[0], tiny_cases()[1]}; }
std::vector<PhantomCase> tiny_val() { return {tiny_cases()[2]}; }

bool same_values(const nn::ParamList<float>& a, const nn::ParamList<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i]->value != b[i]->value) return false;
  return true;
}

}  // namespace

TEST_CASE("greedy selection takes the row argmax with ties to the lowest action") {
  std::mt19937_64 rng(1);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(kAgents, kActions);
  q(0, 5) = 2.0;
  q(1, 2) = 1.0;
  q(1, 6) = 1.0;
  q(2, 7) = -1.0;
  for (int i = 0; i < 20; ++i) {
    const JointAction a = select_actions(q, 0.0, rng);
    CHECK(a[0].value() == 5);
    CHECK(a[1].value() == 2);
    CHECK(a[2].value() == 0);
  }
  CHECK_THROWS_AS(select_actions(q, 1.5, rng), InvalidConfigError);
  CHECK_THROWS_AS(select_actions(Eigen::MatrixXd::Zero(2, kActions), 0.0, rng), ShapeMismatchError);
}

TEST_CASE("exploration frequencies") {
  std::mt19937_64 rng(2);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(kAgents, kActions);
  for (int k = 0; k < kAgents; ++k) q(k, 3) = 1.0;
  const int n = 16000;

  std::vector<double> counts(kActions, 0.0);
  for (int i = 0; i < n; ++i) counts[static_cast<std::size_t>(select_actions(q, 1.0, rng)[1].value())] += 1.0;
  const auto uniform = stats::chi_square_test(counts, std::vector<double>(kActions, 1.0 / kActions));
  CHECK(uniform.p_value > 1e-3);

  int greedy = 0;
  for (int i = 0; i < n; ++i) greedy += select_actions(q, 0.5, rng)[0].value() == 3;
  const double expected = 0.5 + 0.5 / kActions;
  CHECK(std::abs(greedy / double(n) - expected) < 4.0 * std::sqrt(expected * (1 - expected) / n));
}

TEST_CASE("double dqn targets") {
  Eigen::MatrixXd r(1, kAgents);
  r << 1.0, 0.0, -1.0;
  Eigen::MatrixXd online = Eigen::MatrixXd::Zero(kAgents, kActions), target = online;
  online(0, 2) = 3.0;
  target(0, 2) = 5.0;
  target(0, 4) = 9.0;  // larger, but not chosen by the online network
  online(1, 6) = 1.0;
  target(1, 6) = -2.0;
  online(2, 1) = 0.5;
  target(2, 1) = 4.0;

  const Eigen::MatrixXd t = ddqn_targets(r, online, target, 0.9);
  CHECK(t(0, 0) == doctest::Approx(5.5));
  CHECK(t(0, 1) == doctest::Approx(-1.8));
  CHECK(t(0, 2) == doctest::Approx(2.6));
  CHECK(ddqn_targets(r, online, target, 0.0) == r);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd a = random_q(rng, 2 * kAgents), b = random_q(rng, 2 * kAgents);
    const Eigen::MatrixXd rr = random_q(rng, 2).leftCols(kAgents);
    const Eigen::MatrixXd same = ddqn_targets(rr, a, a, 0.7);
    for (int i = 0; i < 2; ++i)
      for (int k = 0; k < kAgents; ++k)
        CHECK(same(i, k) == doctest::Approx(rr(i, k) + 0.7 * a.row(i * kAgents + k).maxCoeff()));

    // only the entry picked by the online argmax matters
    Eigen::MatrixXd b2 = b;
    const Eigen::MatrixXd base = ddqn_targets(rr, a, b, 0.7);
    for (Eigen::Index row = 0; row < b2.rows(); ++row) {
      Eigen::Index best;
      a.row(row).maxCoeff(&best);
      for (Eigen::Index c = 0; c < kActions; ++c)
        if (c != best) b2(row, c) += 10.0;
    }
    CHECK(ddqn_targets(rr, a, b2, 0.7) == base);
  }
  CHECK_THROWS_AS(ddqn_targets(r, online.topRows(2), target, 0.9), ShapeMismatchError);
}

TEST_CASE("td loss and its gradient") {
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(2 * kAgents, kActions);
  q(0, 1) = 1.0;
  q(4, 7) = -2.0;
  const std::vector<JointAction> actions = {{ActionId(1), ActionId(0), ActionId(0)},
                                            {ActionId(0), ActionId(7), ActionId(3)}};
  Eigen::MatrixXd targets(2, kAgents);
  targets << 2.0, 0.0, 1.0, 0.0, 0.0, 0.5;
  const TdLoss l = td_loss(q, actions, targets, {1.0, 0.5});
  // td: (1, 0, 1) and (0, 2, 0.5)
  CHECK(l.loss == doctest::Approx((1.0 + 0.0 + 1.0 + 0.5 * (4.0 + 0.25)) / 2.0));
  CHECK(l.td(1, 1) == doctest::Approx(2.0));
  CHECK(l.grad(0, 1) == doctest::Approx(-1.0));
  CHECK(l.grad(4, 7) == doctest::Approx(-1.0));
  CHECK(l.grad(5, 3) == doctest::Approx(-0.25));
  CHECK(l.grad.cwiseAbs().sum() == doctest::Approx(1.0 + 1.0 + 1.0 + 0.25));

  std::mt19937_64 rng(4);
  const Eigen::MatrixXd qr = random_q(rng, 2 * kAgents), tr = random_q(rng, 2).leftCols(kAgents);
  const std::vector<double> w = {0.3, 1.0};
  const TdLoss base = td_loss(qr, actions, tr, w);
  for (Eigen::Index i = 0; i < qr.size(); ++i) {
    Eigen::MatrixXd qp = qr, qm = qr;
    qp.data()[i] += 1e-6;
    qm.data()[i] -= 1e-6;
    const double fd = (td_loss(qp, actions, tr, w).loss - td_loss(qm, actions, tr, w).loss) / 2e-6;
    CHECK(base.grad.data()[i] == doctest::Approx(fd).epsilon(1e-6));
  }

  Eigen::MatrixXd perfect(2, kAgents);
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < kAgents; ++k) perfect(i, k) = qr(i * kAgents + k, actions[i][k].value());
  const TdLoss zero = td_loss(qr, actions, perfect, w);
  CHECK(zero.loss == 0.0);
  CHECK(zero.grad.isZero());
  CHECK_THROWS_AS(td_loss(qr, actions, perfect, {1.0}), ShapeMismatchError);
}

TEST_CASE("gradient descent on the td loss reaches the reward when gamma is zero") {
  std::mt19937_64 rng(5);
  Eigen::MatrixXd q = random_q(rng, kAgents);
  const std::vector<JointAction> actions = {{ActionId(2), ActionId(5), ActionId(7)}};
  Eigen::MatrixXd r(1, kAgents);
  r << 1.0, -1.0, 0.0;
  for (int it = 0; it < 200; ++it) {
    const Eigen::MatrixXd t = ddqn_targets(r, q, q, 0.0);
    q -= 0.25 * td_loss(q, actions, t, {1.0}).grad;
  }
  for (int k = 0; k < kAgents; ++k) CHECK(q(k, actions[0][k].value()) == doctest::Approx(r(0, k)).epsilon(1e-9));
}

TEST_CASE("target synchronization") {
  std::mt19937_64 rng(6);
  const auto cfg = testing::miniature_net();
  QNetwork<float> online(cfg, fixed_backbone_genotype(), RnnMode::Lstm, rng);
  QNetwork<float> target(cfg, fixed_backbone_genotype(), RnnMode::Lstm, rng);
  CHECK_FALSE(same_values(online.params(), target.params()));
  CHECK_FALSE(sync_target(online, target, 1501, 1500));
  CHECK_FALSE(same_values(online.params(), target.params()));
  CHECK(sync_target(online, target, 1500, 1500));
  CHECK(same_values(online.params(), target.params()));
  CHECK(sync_target(online, target, 3000, 1500));
  CHECK(same_values(online.params(), target.params()));
}

TEST_CASE("linear schedules clamp at their endpoints") {
  CHECK(linear_schedule(1.0, 0.1, 0.0) == 1.0);
  CHECK(linear_schedule(1.0, 0.1, 1.0) == doctest::Approx(0.1));
  CHECK(linear_schedule(1.0, 0.1, 0.5) == doctest::Approx(0.55));
  CHECK(linear_schedule(1.0, 0.1, 7.0) == doctest::Approx(0.1));
  CHECK(linear_schedule(10.0, 0.1, -1.0) == 10.0);
}

TEST_CASE("variant names") {
  for (const char* name : {"MARL", "MARL-R", "G-MARL", "G-MARL-R", "Ours", "D-MARL", "D-MARL-R", "D-Ours"})
    CHECK(Variant::from_name(name).name() == name);
  CHECK_FALSE(Variant::from_name("MARL").needs_search());
  CHECK_FALSE(Variant::from_name("MARL-R").needs_search());
  CHECK(Variant::from_name("G-MARL").needs_search());
  CHECK(Variant::from_name("D-Ours").sampler == SamplerKind::Darts);
  CHECK_THROWS_AS(Variant::from_name("ours"), InvalidConfigError);

  std::mt19937_64 rng(1);
  const Genotype searched = derive_genotype(ArchitectureParams::random(rng, 1.0));
  CHECK(effective_genotype(Variant::from_name("Ours"), &searched) == searched);
  const Genotype marl = effective_genotype(Variant::from_name("MARL"), nullptr);
  CHECK(marl.cells == fixed_backbone_genotype().cells);
  CHECK(effective_genotype(Variant::from_name("G-MARL"), &searched).cells == searched.cells);
}

TEST_CASE("trainer optimization steps") {
  const auto train = tiny_train(), val = tiny_val();
  TrainerConfig cfg = tiny_config();
  cfg.learn_start = 1000;  // collect without optimizing
  cfg.target_sync_every = 3;
  Trainer t(cfg, Variant::from_name("Ours"), train, val, 7);
  CHECK(t.searching());
  CHECK(t.epsilon() == 1.0);
  CHECK(same_values(t.online().params(), t.target().params()));
  CHECK_THROWS_AS(t.train_step(TrainMode::Weights), InsufficientDataError);

  t.run_episode();
  t.run_episode();
  CHECK(t.buffer().size() == 12);
  CHECK(t.weight_steps() == 0);
  for (std::size_t i = 0; i < t.buffer().size(); ++i) CHECK(t.buffer().priority(i) == 1.0);

  SUBCASE("weights step moves weights and priorities, not alpha") {
    const auto alpha = t.alpha().alpha[0].value;
    const double loss = t.train_step(TrainMode::Weights);
    CHECK(std::isfinite(loss));
    CHECK(t.alpha().alpha[0].value == alpha);
    CHECK_FALSE(same_values(t.online().params(), t.target().params()));
    int changed = 0;
    for (std::size_t i = 0; i < t.buffer().size(); ++i) changed += t.buffer().priority(i) != 1.0;
    CHECK(changed >= 1);
    CHECK(changed <= cfg.batch);

    t.train_step(TrainMode::Weights);
    CHECK_FALSE(same_values(t.online().params(), t.target().params()));
    t.train_step(TrainMode::Weights);
    CHECK(t.weight_steps() == 3);
    CHECK(same_values(t.online().params(), t.target().params()));
  }

  SUBCASE("architecture step moves alpha, not weights") {
    std::vector<nn::Mat<float>> before;
    for (auto* p : t.online().params()) before.push_back(p->value);
    ArchitectureParams a0 = t.alpha();
    t.train_step(TrainMode::Arch);
    bool moved = false;
    for (int g = 0; g < kGroups; ++g) moved |= t.alpha().alpha[g].value != a0.alpha[g].value;
    CHECK(moved);
    const auto after = t.online().params();
    for (std::size_t i = 0; i < after.size(); ++i) CHECK(after[i]->value == before[i]);
    CHECK(t.weight_steps() == 0);
  }
}

TEST_CASE("fixed networks reject architecture steps") {
  const auto train = tiny_train(), val = tiny_val();
  TrainerConfig cfg = tiny_config();
  const Genotype g = fixed_backbone_genotype();
  Trainer t(cfg, Variant::from_name("MARL"), train, val, 8, &g);
  CHECK_FALSE(t.searching());
  CHECK(t.eval_sample() == nullptr);
  t.run_episode();
  CHECK_THROWS_AS(t.train_step(TrainMode::Arch), InvalidConfigError);
  CHECK_THROWS_AS(Trainer(cfg, Variant::from_name("MARL"), train, val, 8), InvalidConfigError);
  CHECK_THROWS_AS(Trainer(cfg, Variant::from_name("MARL"), train, {}, 8, &g), InsufficientDataError);
}

TEST_CASE("search and training are reproducible from the seed") {
  const auto train = tiny_train(), val = tiny_val();
  const TrainerConfig cfg = tiny_config();
  const Variant v = Variant::from_name("Ours");
  const SearchResult a = run_search(train, val, cfg, v, 9), b = run_search(train, val, cfg, v, 9);
  REQUIRE(a.curves.size() == 2);
  for (std::size_t i = 0; i < a.curves.size(); ++i) {
    CHECK(a.curves[i].accumulated_reward == b.curves[i].accumulated_reward);
    CHECK(a.curves[i].mean_sad == b.curves[i].mean_sad);
    CHECK(a.curves[i].loss == b.curves[i].loss);
  }
  CHECK(a.genotype == b.genotype);
  for (int g = 0; g < kGroups; ++g) CHECK(a.alpha.alpha[g].value == b.alpha.alpha[g].value);
  CHECK(a.curves[1].tau == doctest::Approx(cfg.tau_end));

  TrainResult ta = run_train(train, val, cfg, v, a.genotype, 10);
  TrainResult tb = run_train(train, val, cfg, v, a.genotype, 10);
  CHECK(same_values(ta.network->params(), tb.network->params()));
  CHECK(ta.final_validation.mean_sad == tb.final_validation.mean_sad);
  TrainResult tc = run_train(train, val, cfg, v, a.genotype, 11);
  CHECK_FALSE(same_values(ta.network->params(), tc.network->params()));
}

TEST_CASE("parameters survive a save and load") {
  std::mt19937_64 rng(12);
  const auto cfg = testing::miniature_net();
  const Genotype g = derive_genotype(ArchitectureParams::random(rng, 1.0));
  QNetwork<float> a(cfg, g, RnnMode::Searched, rng), b(cfg, g, RnnMode::Searched, rng);
  const auto dir = std::filesystem::temp_directory_path() / "mplane_test_params";
  std::filesystem::create_directories(dir);
  save_params(a.params(), dir / "weights");
  load_params(b.params(), dir / "weights");
  CHECK(same_values(a.params(), b.params()));

  QNetwork<float> other(cfg, fixed_backbone_genotype(), RnnMode::None, rng);
  CHECK_THROWS(load_params(other.params(), dir / "weights"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("curves round trip") {
  std::vector<EpochRecord> c = {{1, 2.5, 10.25, 0.5, 0.9, 9.0}, {2, -1.0, 12.0, 0.25, 0.8, 4.5}};
  std::stringstream ss;
  write_curves(c, ss);
  const auto back = read_curves(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[1].epoch == 2);
  CHECK(back[1].mean_sad == 12.0);
  CHECK(back[0].tau == 9.0);
  std::stringstream bad("epoch\n1,2\n");
  CHECK_THROWS_AS(read_curves(bad), IoError);
}

TEST_CASE("rollout seeds") {
  CHECK(init_seed(1, 0) != init_seed(1, 1));
  CHECK(init_seed(1, 0) != init_seed(2, 0));
  CHECK(validation_seed(0) != evaluation_seed(0));
  CHECK(validation_seed(5) == validation_seed(5));
}
