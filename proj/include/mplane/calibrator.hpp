#pragma once

#include "mplane/nas.hpp"
#include "mplane/nn/layers.hpp"

#include <memory>
#include <random>
#include <string>
#include <vector>

namespace mplane::nas {

enum class RnnMode {
  None,      ///< Q' = Q
  Lstm,      ///< hand-designed bidirectional LSTM
  Searched,  ///< searched recurrent cell (supernet or fixed genotype)
};

const char* rnn_mode_name(RnnMode m);
/// Accepts "none", "fixed" and "searched".
RnnMode parse_rnn_mode(const std::string& s);

/// Runs a bidirectional recurrent cell over the agent sequence of each state
/// and maps the summed hidden states to calibrated Q-values. Input and
/// output rows are ordered b * kAgents + agent.
template <typename Scalar>
class Calibrator {
 public:
  using Mat = nn::Mat<Scalar>;
  static constexpr int kHidden = 8;

  /// None, Lstm, or the searchable recurrent supernet cell.
  Calibrator(RnnMode mode, std::mt19937_64& rng);
  /// Searched cell fixed to `gene`.
  Calibrator(const RnnGene& gene, std::mt19937_64& rng);
  ~Calibrator();
  Calibrator(Calibrator&&) noexcept;
  Calibrator& operator=(Calibrator&&) noexcept;

  RnnMode mode() const { return mode_; }
  bool search() const { return search_; }

  Mat forward(const Mat& q, const ArchitectureSample* sample);
  /// Returns dL/dq and accumulates parameter and edge-weight gradients.
  Mat backward(const Mat& gq, ArchitectureSample* sample);

  nn::ParamList<Scalar> params();

  struct Direction;

 private:
  RnnMode mode_;
  bool search_ = false;
  std::unique_ptr<Direction> fwd_, bwd_;
  nn::Linear<Scalar> out_;
  Mat summed_;
  int states_ = 0;
};

}  // namespace mplane::nas
