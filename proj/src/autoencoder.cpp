#include "npst3/autoencoder.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "npst3/errors.hpp"
#include "npst3/nn/adam.hpp"

namespace npst3 {

namespace {

constexpr std::size_t kDims = 3;

std::vector<nn::LayerSpec> encoder_specs(std::size_t channels, std::size_t kernel, double dropout)
{
  return {nn::Conv1DSpec{kDims, channels, kernel, nn::Padding::Same}, nn::ActivationSpec{nn::Activation::ReLU},
          nn::DropoutSpec{dropout}, nn::MaxPool1DSpec{2, 2}};
}

std::vector<nn::LayerSpec> decoder_specs(std::size_t channels, std::size_t kernel)
{
  return {nn::Upsample1DSpec{2}, nn::TransposedConv1DSpec{channels, kDims, kernel}};
}

nn::Tensor to_tensor(std::span<NormalizedTrajectory const> items, std::span<std::size_t const> idx)
{
  nn::Tensor t({idx.size(), kHorizon, kDims});
  for (std::size_t i = 0; i < idx.size(); ++i)
  {
    std::copy_n(items[idx[i]].matrix().data(), kHorizon * kDims, t.data() + i * kHorizon * kDims);
  }
  return t;
}

}  // namespace

GramMatrix gram(FeatureMap const &f)
{
  if (f.rows() == 0)
  {
    return GramMatrix::Zero(f.cols(), f.cols());
  }
  GramMatrix g = f.transpose() * f;
  g /= static_cast<double>(f.rows());
  return g;
}

double mse(RowMatrix const &a, RowMatrix const &b)
{
  if (a.rows() != b.rows() || a.cols() != b.cols())
  {
    throw ShapeError("mse: operand shapes differ");
  }
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

double mse(GramMatrix const &a, GramMatrix const &b)
{
  if (a.rows() != b.rows() || a.cols() != b.cols())
  {
    throw ShapeError("mse: operand shapes differ");
  }
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

Autoencoder::Autoencoder(StyleTransferConfig const &cfg, std::uint64_t seed_value)
  : seed(seed_value)
  , channels_(cfg.autoencoder.channels)
  , kernel_(cfg.autoencoder.kernel)
{
  encoder_ = nn::Sequential(encoder_specs(channels_, kernel_, cfg.autoencoder.dropout_rate), seed_value ^ 0xd1b54a32d192ed03ULL);
  decoder_ = nn::Sequential(decoder_specs(channels_, kernel_));
  std::mt19937_64 rng(seed_value);
  encoder_.init_glorot(rng);
  decoder_.init_glorot(rng);
  refresh_eval_weights();
}

void Autoencoder::refresh_eval_weights()
{
  auto params  = encoder_.parameters();
  auto const kc = static_cast<Eigen::Index>(kernel_ * kDims);
  auto const c  = static_cast<Eigen::Index>(channels_);
  conv_weight_ = Eigen::Map<RowMatrix const>(params.at(0)->value.data(), kc, c);
  conv_bias_   = Eigen::Map<Eigen::RowVectorXd const>(params.at(1)->value.data(), c);
}

EncoderTrace Autoencoder::encode_traced(RowMatrix const &x) const
{
  if (x.rows() != static_cast<Eigen::Index>(kHorizon) || x.cols() != static_cast<Eigen::Index>(kDims))
  {
    throw ShapeError("encode: expected a [50, 3] trajectory, got [" + std::to_string(x.rows()) + ", " +
                     std::to_string(x.cols()) + "]");
  }
  auto const   t_len = static_cast<Eigen::Index>(kHorizon);
  auto const   k_len = static_cast<Eigen::Index>(kernel_);
  auto const   pad   = k_len / 2;
  EncoderTrace tr;
  tr.cols = RowMatrix::Zero(t_len, k_len * 3);
  for (Eigen::Index t = 0; t < t_len; ++t)
  {
    for (Eigen::Index k = 0; k < k_len; ++k)
    {
      Eigen::Index const src = t + k - pad;
      if (src >= 0 && src < t_len)
      {
        tr.cols.block(t, k * 3, 1, 3) = x.row(src);
      }
    }
  }
  tr.pre = tr.cols * conv_weight_;
  tr.pre.rowwise() += conv_bias_;

  Eigen::Index const c = static_cast<Eigen::Index>(channels_);
  Eigen::Index const out_len = t_len / 2;
  tr.features.resize(out_len, c);
  tr.argmax.resize(static_cast<std::size_t>(out_len * c));
  for (Eigen::Index t = 0; t < out_len; ++t)
  {
    for (Eigen::Index ch = 0; ch < c; ++ch)
    {
      Eigen::Index const a   = 2 * t;
      Eigen::Index const b   = 2 * t + 1;
      Eigen::Index const src = tr.pre(b, ch) > tr.pre(a, ch) ? b : a;
      tr.argmax[static_cast<std::size_t>(t * c + ch)] = src;
      tr.features(t, ch) = std::max(tr.pre(src, ch), 0.0);
    }
  }
  return tr;
}

FeatureMap Autoencoder::encode_matrix(RowMatrix const &x) const
{
  return encode_traced(x).features;
}

FeatureMap Autoencoder::encode(NormalizedTrajectory const &traj) const
{
  return encode_traced(RowMatrix(traj.matrix())).features;
}

RowMatrix Autoencoder::encode_backward(EncoderTrace const &tr, FeatureMap const &grad_features) const
{
  if (grad_features.rows() != tr.features.rows() || grad_features.cols() != tr.features.cols())
  {
    throw ShapeError("encode_backward: gradient shape does not match the features");
  }
  Eigen::Index const c = static_cast<Eigen::Index>(channels_);
  RowMatrix          dpre = RowMatrix::Zero(tr.pre.rows(), c);
  for (Eigen::Index t = 0; t < tr.features.rows(); ++t)
  {
    for (Eigen::Index ch = 0; ch < c; ++ch)
    {
      Eigen::Index const src = tr.argmax[static_cast<std::size_t>(t * c + ch)];
      if (tr.pre(src, ch) > 0.0)
      {
        dpre(src, ch) += grad_features(t, ch);
      }
    }
  }
  RowMatrix          dcols = dpre * conv_weight_.transpose();
  auto const         t_len = tr.pre.rows();
  auto const         k_len = static_cast<Eigen::Index>(kernel_);
  auto const         pad   = k_len / 2;
  RowMatrix          dx    = RowMatrix::Zero(t_len, 3);
  for (Eigen::Index t = 0; t < t_len; ++t)
  {
    for (Eigen::Index k = 0; k < k_len; ++k)
    {
      Eigen::Index const src = t + k - pad;
      if (src >= 0 && src < t_len)
      {
        dx.row(src) += dcols.block(t, k * 3, 1, 3);
      }
    }
  }
  return dx;
}

nn::Tensor Autoencoder::reconstruct_train(nn::Tensor const &batch)
{
  return decoder_.forward(encoder_.forward(batch, nn::Mode::Train), nn::Mode::Train);
}

TrajectoryMatrix Autoencoder::reconstruct(NormalizedTrajectory const &traj) const
{
  nn::Sequential enc = encoder_;
  nn::Sequential dec = decoder_;
  nn::Tensor     x({1, kHorizon, kDims});
  std::copy_n(traj.matrix().data(), kHorizon * kDims, x.data());
  nn::Tensor const y = dec.forward(enc.forward(x, nn::Mode::Eval), nn::Mode::Eval);
  TrajectoryMatrix out;
  std::copy_n(y.data(), kHorizon * kDims, out.data());
  return out;
}

double Autoencoder::reconstruction_mse(std::span<NormalizedTrajectory const> corpus) const
{
  if (corpus.empty())
  {
    return 0.0;
  }
  nn::Sequential           enc = encoder_;
  nn::Sequential           dec = decoder_;
  std::vector<std::size_t> idx(corpus.size());
  std::iota(idx.begin(), idx.end(), 0);
  nn::Tensor const x = to_tensor(corpus, idx);
  nn::Tensor const y = dec.forward(enc.forward(x, nn::Mode::Eval), nn::Mode::Eval);
  double           sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
  {
    double const d = y[i] - x[i];
    sum += d * d;
  }
  return sum / static_cast<double>(x.size());
}

std::uint64_t Autoencoder::parameter_hash() const
{
  std::uint64_t h    = 0xcbf29ce484222325ULL;
  auto         &self = const_cast<Autoencoder &>(*this);
  for (auto *net : {&self.encoder_, &self.decoder_})
  {
    for (auto *p : net->parameters())
    {
      h = fnv1a(p->value.data(), p->value.size() * sizeof(double), h);
    }
  }
  return h;
}

Checkpoint Autoencoder::to_checkpoint(StyleTransferConfig const &cfg) const
{
  Checkpoint ckpt;
  ckpt.kind = CheckpointKind::Autoencoder;
  ckpt.header["config"]      = to_json(cfg);
  ckpt.header["epochs_seen"] = epochs_seen;
  ckpt.header["corpus_hash"] = corpus_hash;
  ckpt.header["seed"]        = seed;
  ckpt.header["channels"]    = channels_;
  ckpt.header["kernel"]      = kernel_;
  auto &self                 = const_cast<Autoencoder &>(*this);
  ckpt.add_network("encoder", self.encoder_);
  ckpt.add_network("decoder", self.decoder_);
  return ckpt;
}

Autoencoder Autoencoder::from_checkpoint(Checkpoint const &ckpt)
{
  if (ckpt.kind != CheckpointKind::Autoencoder)
  {
    throw LoadError("checkpoint is not an autoencoder");
  }
  Autoencoder m;
  try
  {
    m.epochs_seen = ckpt.header.at("epochs_seen").get<int>();
    m.corpus_hash = ckpt.header.at("corpus_hash").get<std::uint64_t>();
    m.seed        = ckpt.header.at("seed").get<std::uint64_t>();
    m.channels_   = ckpt.header.at("channels").get<std::size_t>();
    m.kernel_     = ckpt.header.at("kernel").get<std::size_t>();
  }
  catch (nlohmann::json::exception const &e)
  {
    throw LoadError(std::string("autoencoder header: ") + e.what());
  }
  m.encoder_ = ckpt.network("encoder");
  m.decoder_ = ckpt.network("decoder");
  auto const expected_enc = encoder_specs(m.channels_, m.kernel_, 0.0);
  auto const got_enc      = m.encoder_.specs();
  if (got_enc.size() != expected_enc.size() || got_enc[0] != expected_enc[0] || got_enc[3] != expected_enc[3] ||
      m.decoder_.specs() != decoder_specs(m.channels_, m.kernel_))
  {
    throw LoadError("autoencoder layers do not match the expected architecture");
  }
  m.refresh_eval_weights();
  return m;
}

std::uint64_t corpus_hash(std::span<NormalizedTrajectory const> corpus)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto const &t : corpus)
  {
    h = fnv1a(t.matrix().data(), kHorizon * kDims * sizeof(double), h);
  }
  return h;
}

AutoencoderTraining train_autoencoder(std::span<NormalizedTrajectory const> corpus, StyleTransferConfig const &cfg,
                                      std::uint64_t seed, EpochCallback const &on_epoch)
{
  if (corpus.empty())
  {
    throw EmptyTrajectoryError("autoencoder training needs a non-empty corpus");
  }
  AutoencoderTraining result{Autoencoder(cfg, seed), {}};
  Autoencoder        &model = result.model;
  model.corpus_hash         = corpus_hash(corpus);

  std::mt19937_64 rng(seed ^ 0x2545f4914f6cdd1dULL);
  nn::AdamState   adam(cfg.autoencoder.learning_rate);
  std::vector<nn::Param *> params = model.encoder_net().parameters();
  for (auto *p : model.decoder_net().parameters())
  {
    params.push_back(p);
  }

  result.loss_history.push_back(model.reconstruction_mse(corpus));
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  auto const batch_size = static_cast<std::size_t>(cfg.autoencoder.batch_size);
  for (int epoch = 1; epoch <= cfg.autoencoder.epochs; ++epoch)
  {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch_size)
    {
      std::size_t const n = std::min(batch_size, order.size() - start);
      nn::Tensor const  x = to_tensor(corpus, std::span(order).subspan(start, n));
      model.encoder_net().zero_grad();
      model.decoder_net().zero_grad();
      nn::Tensor const y = model.reconstruct_train(x);
      nn::Tensor       grad(y.shape());
      double const     scale = 2.0 / static_cast<double>(y.size());
      for (std::size_t i = 0; i < y.size(); ++i)
      {
        grad[i] = scale * (y[i] - x[i]);
      }
      model.encoder_net().backward(model.decoder_net().backward(grad));
      nn::adam_step(adam, params);
    }
    model.refresh_eval_weights();
    model.epochs_seen = epoch;
    double const loss = model.reconstruction_mse(corpus);
    result.loss_history.push_back(loss);
    if (on_epoch)
    {
      on_epoch(epoch, loss);
    }
  }
  model.refresh_eval_weights();
  return result;
}

double content_loss(Autoencoder const &model, NormalizedTrajectory const &c, NormalizedTrajectory const &g)
{
  return mse(model.encode(c), model.encode(g));
}

double style_loss(Autoencoder const &model, NormalizedTrajectory const &s, NormalizedTrajectory const &g)
{
  return mse(gram(model.encode(s)), gram(model.encode(g)));
}

double st_loss(Autoencoder const &model, NormalizedTrajectory const &c, NormalizedTrajectory const &s,
               NormalizedTrajectory const &g)
{
  return content_loss(model, c, g) + style_loss(model, s, g);
}

TrajectoryMatrix st_loss_gradient(Autoencoder const &model, NormalizedTrajectory const &c,
                                  NormalizedTrajectory const &s, NormalizedTrajectory const &g)
{
  FeatureMap const   fc = model.encode(c);
  GramMatrix const   gs = gram(model.encode(s));
  EncoderTrace const tr = model.encode_traced(RowMatrix(g.matrix()));
  FeatureMap const  &fg = tr.features;
  GramMatrix const   gg = gram(fg);

  FeatureMap dfg = -2.0 * (fc - fg) / static_cast<double>(fc.size());
  // d mean((Gs - Gg)^2) / d Gg, pushed through Gg = F^T F / T.
  GramMatrix const dgg = -2.0 * (gs - gg) / static_cast<double>(gs.size());
  dfg += (fg * (dgg + dgg.transpose())) / static_cast<double>(fg.rows());

  RowMatrix const  dx = model.encode_backward(tr, dfg);
  TrajectoryMatrix out;
  std::copy_n(dx.data(), kHorizon * kDims, out.data());
  return out;
}

}  // namespace npst3
