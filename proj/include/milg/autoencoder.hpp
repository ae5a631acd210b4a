#pragma once
// Convolutional patch autoencoder.
//
// Encoder: three blocks of conv3x3 -> ReLU -> 2x2 average pool, then a dense
// layer to the latent vector. Decoder mirrors it: dense -> ReLU, then three
// blocks of 2x upsample -> conv3x3, ReLU between blocks and a sigmoid on the
// RGB output. Pixels are scaled to [0, 1]; the loss is the mean squared error
// over all pixels and channels.

#include <array>
#include <cstdint>
#include <vector>

#include "milg/autodiff.hpp"
#include "milg/checkpoint.hpp"
#include "milg/image.hpp"
#include "milg/optim.hpp"

namespace milg {

struct EncoderConfig {
  std::size_t patch_size = 32;  // must be divisible by 8
  std::size_t latent_dim = 64;
  std::array<std::size_t, 3> channels{8, 16, 16};
  OptimizerConfig optimizer{OptimizerKind::Adam, 2e-3};
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  /// Cap on patches used for training (sampled with the seed); 0 = all.
  std::size_t max_train_patches = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

template <typename T>
struct AutoencoderParams {
  std::array<Tensor<T>, 3> enc_w, enc_b;
  Tensor<T> enc_dense_w, enc_dense_b;  // [latent x flat], [latent]
  Tensor<T> dec_dense_w, dec_dense_b;  // [flat x latent], [flat]
  std::array<Tensor<T>, 3> dec_w, dec_b;

  std::vector<Tensor<T>*> all();
};

template <typename T>
class Autoencoder {
 public:
  /// Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  explicit Autoencoder(const EncoderConfig& cfg);

  const EncoderConfig& config() const { return cfg_; }
  AutoencoderParams<T>& params() { return params_; }
  const AutoencoderParams<T>& params() const { return params_; }

  /// x: [B, 3, N, N] -> [B, latent_dim]
  ad::Var encode(ad::Tape<T>& tape, ad::Var x);
  /// z: [B, latent_dim] -> [B, 3, N, N]
  ad::Var decode(ad::Tape<T>& tape, ad::Var z);

  Checkpoint to_checkpoint() const;
  static Autoencoder from_checkpoint(const Checkpoint& ck);

 private:
  std::size_t bottleneck_side() const { return cfg_.patch_size / 8; }
  std::size_t flat_dim() const { return cfg_.channels[2] * bottleneck_side() * bottleneck_side(); }

  EncoderConfig cfg_;
  AutoencoderParams<T> params_;
};

extern template class Autoencoder<float>;
extern template class Autoencoder<double>;

/// Packs patches [begin, end) into a [B, 3, N, N] tensor scaled to [0, 1].
template <typename T>
Tensor<T> patches_to_tensor(const std::vector<RgbImage>& patches, std::size_t begin, std::size_t end);

struct AeTrainLog {
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;
};

/// Mini-batch training on reconstruction MSE. Throws NumericError on a
/// non-finite loss.
Autoencoder<float> train_autoencoder(const std::vector<RgbImage>& patches, const EncoderConfig& cfg,
                                     AeTrainLog* log = nullptr);

/// Mean reconstruction MSE over the given patches.
double reconstruction_mse(Autoencoder<float>& model, const std::vector<RgbImage>& patches);

/// Row h is the latent vector of patch h. Deterministic and per-patch pure.
/// Throws UserError when patch sizes differ from the checkpoint's.
Tensor<float> featurize(const std::vector<RgbImage>& patches, const Autoencoder<float>& model);

}  // namespace milg
