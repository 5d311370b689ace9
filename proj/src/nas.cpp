#include "mplane/nas.hpp"

#include "mplane/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

namespace mplane::nas {

namespace {

constexpr std::array<const char*, kCnnOps> kCnnNames = {
    "none", "conv_3x3", "conv_5x5", "sep_conv_3x3", "sep_conv_5x5",
    "dil_conv_3x3", "dil_conv_5x5", "max_pool_3x3", "avg_pool_3x3", "skip_connect"};
constexpr std::array<const char*, kRnnOps> kRnnNames = {"none", "identity", "tanh", "relu", "sigmoid"};
constexpr std::array<const char*, kGroups> kGroupNames = {
    "shared_normal", "shared_reduce", "unique0_normal", "unique0_reduce", "unique1_normal",
    "unique1_reduce", "unique2_normal", "unique2_reduce", "rnn"};

template <std::size_t N>
int lookup(const std::array<const char*, N>& names, const std::string& name, const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (name == names[i]) return static_cast<int>(i);
  throw InvalidConfigError(std::string("unknown ") + what + ": " + name);
}

int argmax(const Eigen::VectorXd& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return static_cast<int>(i);
}

}  // namespace

const char* op_name(CnnOp op) { return kCnnNames[static_cast<int>(op)]; }
const char* op_name(RnnOp op) { return kRnnNames[static_cast<int>(op)]; }
CnnOp parse_cnn_op(const std::string& name) { return static_cast<CnnOp>(lookup(kCnnNames, name, "cnn op")); }
RnnOp parse_rnn_op(const std::string& name) { return static_cast<RnnOp>(lookup(kRnnNames, name, "rnn op")); }
const char* group_name(CellGroup g) { return kGroupNames[static_cast<int>(g)]; }
CellGroup parse_group(const std::string& name) { return static_cast<CellGroup>(lookup(kGroupNames, name, "cell group")); }
int group_edges(CellGroup g) { return g == CellGroup::Rnn ? kRnnEdges : kCnnEdges; }
int group_ops(CellGroup g) { return g == CellGroup::Rnn ? kRnnOps : kCnnOps; }

ArchitectureParams::ArchitectureParams() {
  for (int g = 0; g < kGroups; ++g) {
    const auto cg = static_cast<CellGroup>(g);
    alpha[g] = nn::Parameter<double>(std::string("alpha.") + group_name(cg), group_edges(cg), group_ops(cg));
  }
}

ArchitectureParams ArchitectureParams::random(std::mt19937_64& rng, double scale) {
  ArchitectureParams a;
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& p : a.alpha)
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = scale * n(rng);
  return a;
}

nn::ParamList<double> ArchitectureParams::params() {
  nn::ParamList<double> out;
  for (auto& p : alpha) out.push_back(&p);
  return out;
}

void ArchitectureParams::zero_grad() {
  for (auto& p : alpha) p.zero_grad();
}

Eigen::VectorXd softmax(const Eigen::VectorXd& x) {
  const Eigen::VectorXd e = (x.array() - x.maxCoeff()).exp().matrix();
  return e / e.sum();
}

EdgeChoice gdas_sample(const Eigen::VectorXd& alpha, double tau, const Eigen::VectorXd& gumbel) {
  if (!(tau > 0.0)) throw InvalidConfigError("temperature must be positive");
  const Eigen::VectorXd logits = alpha + gumbel;
  EdgeChoice c;
  c.index = argmax(logits);
  c.weights = Eigen::VectorXd::Zero(alpha.size());
  c.weights[c.index] = 1.0;
  c.probs = softmax(logits / tau);
  c.weight_grad = Eigen::VectorXd::Zero(alpha.size());
  return c;
}

EdgeChoice gdas_sample(const Eigen::VectorXd& alpha, double tau, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd g(alpha.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    double x = u(rng);
    while (x <= 0.0) x = u(rng);
    g[i] = -std::log(-std::log(x));
  }
  return gdas_sample(alpha, tau, g);
}

EdgeChoice darts_mix(const Eigen::VectorXd& alpha) {
  EdgeChoice c;
  c.dense = true;
  c.probs = softmax(alpha);
  c.weights = c.probs;
  c.index = argmax(alpha);
  c.weight_grad = Eigen::VectorXd::Zero(alpha.size());
  return c;
}

EdgeChoice argmax_choice(const Eigen::VectorXd& alpha) {
  EdgeChoice c;
  c.index = argmax(alpha);
  c.weights = Eigen::VectorXd::Zero(alpha.size());
  c.weights[c.index] = 1.0;
  c.probs = c.weights;
  c.weight_grad = Eigen::VectorXd::Zero(alpha.size());
  return c;
}

Eigen::VectorXd arch_gradient(const EdgeChoice& c, SamplerKind kind, double tau) {
  const Eigen::VectorXd& p = c.probs;
  const double inner = p.dot(c.weight_grad);
  switch (kind) {
    case SamplerKind::Gdas:
      return (p.array() * (c.weight_grad.array() - inner)).matrix() / tau;
    case SamplerKind::Darts:
      return (p.array() * (c.weight_grad.array() - inner)).matrix();
    case SamplerKind::Argmax:
      break;
  }
  return Eigen::VectorXd::Zero(p.size());
}

void ArchitectureSample::zero_grad() {
  for (auto& g : edges)
    for (auto& e : g) e.weight_grad.setZero();
}

ArchitectureSample sample_architecture(const ArchitectureParams& a, SamplerKind kind, std::mt19937_64& rng) {
  ArchitectureSample s;
  s.kind = kind;
  s.tau = a.tau;
  for (int g = 0; g < kGroups; ++g) {
    const auto cg = static_cast<CellGroup>(g);
    auto& edges = s.edges[g];
    edges.reserve(static_cast<std::size_t>(group_edges(cg)));
    for (int e = 0; e < group_edges(cg); ++e) {
      const Eigen::VectorXd logits = a.logits(cg, e);
      switch (kind) {
        case SamplerKind::Gdas: edges.push_back(gdas_sample(logits, a.tau, rng)); break;
        case SamplerKind::Darts: edges.push_back(darts_mix(logits)); break;
        case SamplerKind::Argmax: edges.push_back(argmax_choice(logits)); break;
      }
    }
  }
  return s;
}

void accumulate_arch_gradient(const ArchitectureSample& s, ArchitectureParams& a) {
  if (s.kind == SamplerKind::Argmax) return;
  for (int g = 0; g < kGroups; ++g)
    for (std::size_t e = 0; e < s.edges[g].size(); ++e)
      a.alpha[g].grad.row(static_cast<Eigen::Index>(e)) +=
          arch_gradient(s.edges[g][e], s.kind, s.tau).transpose();
}

namespace {

// Best non-none op of an edge and its softmax weight; ties go to the lower op.
std::pair<int, double> best_op(const Eigen::VectorXd& logits) {
  const Eigen::VectorXd w = softmax(logits);
  int best = 1;
  for (int o = 2; o < w.size(); ++o)
    if (w[o] > w[best]) best = o;
  return {best, w[best]};
}

}  // namespace

Genotype derive_genotype(const ArchitectureParams& a) {
  Genotype out;
  for (int g = 0; g < kCnnGroups; ++g) {
    const auto cg = static_cast<CellGroup>(g);
    for (int j = 0; j < kCnnNodes; ++j) {
      std::vector<std::tuple<double, int, int>> scored;  // (score, pred, op)
      for (int pred = 0; pred < j + 2; ++pred) {
        const auto [op, w] = best_op(a.logits(cg, cnn_edge(j, pred)));
        scored.emplace_back(w, pred, op);
      }
      std::stable_sort(scored.begin(), scored.end(),
                       [](const auto& x, const auto& y) { return std::get<0>(x) > std::get<0>(y); });
      std::array<std::pair<int, CnnOp>, 2> keep = {
          std::pair{std::get<1>(scored[0]), static_cast<CnnOp>(std::get<2>(scored[0]))},
          std::pair{std::get<1>(scored[1]), static_cast<CnnOp>(std::get<2>(scored[1]))}};
      if (keep[0].first > keep[1].first) std::swap(keep[0], keep[1]);
      out.cells[g].nodes[j] = keep;
    }
  }
  for (int j = 1; j < kRnnNodes; ++j) {
    int best_pred = 0, best = 1;
    double best_w = -1.0;
    for (int pred = 0; pred < j; ++pred) {
      const auto [op, w] = best_op(a.logits(CellGroup::Rnn, rnn_edge(j, pred)));
      if (w > best_w) {
        best_w = w;
        best_pred = pred;
        best = op;
      }
    }
    out.rnn.nodes[j - 1] = {best_pred, static_cast<RnnOp>(best)};
  }
  return out;
}

Genotype fixed_backbone_genotype() {
  CnnGene cell;
  cell.nodes[0] = {std::pair{0, CnnOp::Conv3}, std::pair{1, CnnOp::Conv3}};
  cell.nodes[1] = {std::pair{1, CnnOp::Conv3}, std::pair{2, CnnOp::Skip}};
  cell.nodes[2] = {std::pair{2, CnnOp::Conv3}, std::pair{3, CnnOp::Skip}};
  cell.nodes[3] = {std::pair{3, CnnOp::Conv3}, std::pair{4, CnnOp::Skip}};
  Genotype g;
  g.cells.fill(cell);
  g.rnn.nodes = {std::pair{0, RnnOp::Tanh}, std::pair{1, RnnOp::Tanh}, std::pair{2, RnnOp::Tanh}};
  return g;
}

void write_genotype(const Genotype& g, std::ostream& os) {
  for (int c = 0; c < kCnnGroups; ++c)
    for (int j = 0; j < kCnnNodes; ++j) {
      const auto& n = g.cells[c].nodes[j];
      os << group_name(static_cast<CellGroup>(c)) << ' ' << j << ' ' << n[0].first << ' ' << op_name(n[0].second)
         << ' ' << n[1].first << ' ' << op_name(n[1].second) << '\n';
    }
  for (int j = 1; j < kRnnNodes; ++j) {
    const auto& n = g.rnn.nodes[j - 1];
    os << "rnn " << j << ' ' << n.first << ' ' << op_name(n.second) << '\n';
  }
}

Genotype read_genotype(std::istream& is) {
  Genotype g;
  std::array<std::array<bool, kCnnNodes>, kCnnGroups> seen{};
  std::array<bool, kRnnNodes - 1> seen_rnn{};
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string kind;
    int node = -1;
    ss >> kind >> node;
    const auto bad = [&](const std::string& why) {
      return IoError("genotype line " + std::to_string(lineno) + ": " + why);
    };
    if (kind == "rnn") {
      int pred = -1;
      std::string op;
      if (!(ss >> pred >> op)) throw bad("expected 'rnn node pred op'");
      if (node < 1 || node >= kRnnNodes || pred < 0 || pred >= node) throw bad("node/predecessor out of range");
      const RnnOp o = parse_rnn_op(op);
      if (o == RnnOp::None) throw bad("op none is not allowed");
      g.rnn.nodes[node - 1] = {pred, o};
      seen_rnn[node - 1] = true;
      continue;
    }
    const int c = static_cast<int>(parse_group(kind));
    int p1 = -1, p2 = -1;
    std::string o1, o2;
    if (!(ss >> p1 >> o1 >> p2 >> o2)) throw bad("expected 'cellkind node pred1 op1 pred2 op2'");
    if (node < 0 || node >= kCnnNodes) throw bad("node out of range");
    if (p1 < 0 || p2 < 0 || p1 >= node + 2 || p2 >= node + 2 || p1 == p2) throw bad("invalid predecessors");
    const CnnOp a = parse_cnn_op(o1), b = parse_cnn_op(o2);
    if (a == CnnOp::None || b == CnnOp::None) throw bad("op none is not allowed");
    g.cells[c].nodes[node] = {std::pair{p1, a}, std::pair{p2, b}};
    seen[c][node] = true;
  }
  for (const auto& s : seen)
    for (bool b : s)
      if (!b) throw IoError("genotype is missing cell entries");
  for (bool b : seen_rnn)
    if (!b) throw IoError("genotype is missing rnn entries");
  return g;
}

void save_genotype(const Genotype& g, const std::filesystem::path& file) {
  std::ofstream os(file);
  if (!os) throw IoError("cannot write " + file.string());
  write_genotype(g, os);
}

Genotype load_genotype(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw MissingPrerequisiteError("genotype not found: " + file.string());
  return read_genotype(is);
}

Selection select_architecture(const std::vector<double>& rewards, const std::vector<ArchitectureParams>& snapshots) {
  if (rewards.empty()) throw InsufficientDataError("empty reward history");
  if (rewards.size() != snapshots.size()) throw ShapeMismatchError("reward history and snapshots differ in length");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rewards.size(); ++i)
    if (rewards[i] > rewards[best]) best = i;
  return {snapshots[best], static_cast<int>(best) + 1};
}

namespace {

void put_le(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(buf, 8);
}

double get_le(std::istream& is) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8)) throw IoError("truncated alpha checkpoint");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace

void save_alpha(const ArchitectureParams& a, const std::filesystem::path& stem) {
  const std::filesystem::path bin = stem.string() + ".bin";
  std::ofstream manifest(stem.string() + ".manifest");
  std::ofstream data(bin, std::ios::binary);
  if (!manifest || !data) throw IoError("cannot write alpha checkpoint " + stem.string());
  manifest << "mplane-alpha 1\n" << std::setprecision(17) << "tau " << a.tau << "\n"
           << "encoding float64-le row-major\n"
           << "data " << bin.filename().string() << "\n";
  for (int g = 0; g < kGroups; ++g) {
    const auto& v = a.alpha[g].value;
    manifest << "group " << group_name(static_cast<CellGroup>(g)) << ' ' << v.rows() << ' ' << v.cols() << '\n';
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      for (Eigen::Index c = 0; c < v.cols(); ++c) put_le(data, v(r, c));
  }
}

ArchitectureParams load_alpha(const std::filesystem::path& stem) {
  std::ifstream manifest(stem.string() + ".manifest");
  if (!manifest) throw MissingPrerequisiteError("alpha checkpoint not found: " + stem.string() + ".manifest");
  std::string magic;
  int version = 0;
  manifest >> magic >> version;
  if (magic != "mplane-alpha" || version != 1) throw IoError("unsupported alpha manifest");
  ArchitectureParams a;
  std::string key, datafile;
  std::vector<std::tuple<int, Eigen::Index, Eigen::Index>> groups;
  while (manifest >> key) {
    if (key == "tau") {
      manifest >> a.tau;
    } else if (key == "encoding") {
      std::string enc, order;
      manifest >> enc >> order;
      if (enc != "float64-le" || order != "row-major") throw IoError("unsupported alpha encoding");
    } else if (key == "data") {
      manifest >> datafile;
    } else if (key == "group") {
      std::string name;
      Eigen::Index r = 0, c = 0;
      manifest >> name >> r >> c;
      const int g = static_cast<int>(parse_group(name));
      if (r != a.alpha[g].value.rows() || c != a.alpha[g].value.cols()) throw IoError("alpha group shape mismatch");
      groups.emplace_back(g, r, c);
    } else {
      throw IoError("unknown alpha manifest key: " + key);
    }
  }
  if (groups.size() != static_cast<std::size_t>(kGroups)) throw IoError("alpha manifest is incomplete");
  std::ifstream data(stem.parent_path() / datafile, std::ios::binary);
  if (!data) throw MissingPrerequisiteError("alpha data not found: " + datafile);
  for (const auto& [g, r, c] : groups)
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) a.alpha[g].value(i, j) = get_le(data);
  return a;
}

}  // namespace mplane::nas
