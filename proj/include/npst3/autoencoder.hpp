#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "npst3/checkpoint.hpp"
#include "npst3/config.hpp"
#include "npst3/motion.hpp"
#include "npst3/nn/sequential.hpp"

namespace npst3 {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Encoder activations, [time, channels] = [25, 256] for a full-size model.
using FeatureMap = RowMatrix;
using GramMatrix = Eigen::MatrixXd;

// Channel-by-channel inner products over time, divided by the time length.
GramMatrix gram(FeatureMap const &f);

// Mean of squared element differences.
double mse(RowMatrix const &a, RowMatrix const &b);
double mse(GramMatrix const &a, GramMatrix const &b);

// Intermediates of one eval-mode encoder pass, kept for the backward pass.
struct EncoderTrace
{
  RowMatrix                cols;     // im2col of the input, [50, K*3]
  RowMatrix                pre;      // convolution output, [50, C]
  std::vector<Eigen::Index> argmax;  // pooled source row per output element
  FeatureMap               features; // [25, C]
};

// Convolutional autoencoder used as the loss network. The encoder is
// Conv1D(3 -> C, k) + ReLU + Dropout + MaxPool1D(2, 2); the decoder mirrors it
// with Upsample1D(2) + TransposedConv1D(C -> 3, k).
//
// encode() and the loss functions are const and touch no shared mutable
// state, so a trained model can be shared across threads.
class Autoencoder
{
public:
  Autoencoder() = default;
  Autoencoder(StyleTransferConfig const &cfg, std::uint64_t seed);

  FeatureMap   encode(NormalizedTrajectory const &traj) const;
  FeatureMap   encode_matrix(RowMatrix const &x) const;
  EncoderTrace encode_traced(RowMatrix const &x) const;

  // Gradient of a scalar w.r.t. the encoder input, given its gradient w.r.t.
  // the features of `trace`.
  RowMatrix encode_backward(EncoderTrace const &trace, FeatureMap const &grad_features) const;

  // Train-mode reconstruction of a [B, 50, 3] batch through the trainable
  // networks (updates dropout state).
  nn::Tensor reconstruct_train(nn::Tensor const &batch);
  // Eval-mode reconstruction of a single trajectory.
  TrajectoryMatrix reconstruct(NormalizedTrajectory const &traj) const;
  double           reconstruction_mse(std::span<NormalizedTrajectory const> corpus) const;

  nn::Sequential &encoder_net()
  {
    return encoder_;
  }
  nn::Sequential &decoder_net()
  {
    return decoder_;
  }

  std::size_t channels() const
  {
    return channels_;
  }
  std::size_t kernel() const
  {
    return kernel_;
  }

  // Copies encoder weights into the cache used by the const eval path.
  void refresh_eval_weights();

  int           epochs_seen  = 0;
  std::uint64_t corpus_hash  = 0;
  std::uint64_t seed         = 0;

  // Hash over parameter values; used to check that policies share a model.
  std::uint64_t parameter_hash() const;

  Checkpoint            to_checkpoint(StyleTransferConfig const &cfg) const;
  static Autoencoder    from_checkpoint(Checkpoint const &ckpt);

private:
  nn::Sequential encoder_;
  nn::Sequential decoder_;
  std::size_t    channels_ = 0;
  std::size_t    kernel_   = 0;
  RowMatrix      conv_weight_;  // [K*3, C]
  Eigen::RowVectorXd conv_bias_;
};

struct AutoencoderTraining
{
  Autoencoder         model;
  // Entry 0 is the eval-mode reconstruction MSE before any update, entry e
  // the MSE after epoch e.
  std::vector<double> loss_history;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

AutoencoderTraining train_autoencoder(std::span<NormalizedTrajectory const> corpus, StyleTransferConfig const &cfg,
                                      std::uint64_t seed, EpochCallback const &on_epoch = {});

std::uint64_t corpus_hash(std::span<NormalizedTrajectory const> corpus);

// Style-transfer losses over normalized trajectories.
double content_loss(Autoencoder const &model, NormalizedTrajectory const &c, NormalizedTrajectory const &g);
double style_loss(Autoencoder const &model, NormalizedTrajectory const &s, NormalizedTrajectory const &g);
double st_loss(Autoencoder const &model, NormalizedTrajectory const &c, NormalizedTrajectory const &s,
               NormalizedTrajectory const &g);

// Gradient of st_loss w.r.t. the normalized matrix of g.
TrajectoryMatrix st_loss_gradient(Autoencoder const &model, NormalizedTrajectory const &c,
                                  NormalizedTrajectory const &s, NormalizedTrajectory const &g);

}  // namespace npst3
