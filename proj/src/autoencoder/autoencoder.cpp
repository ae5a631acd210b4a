#include "milg/autoencoder.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "milg/log.hpp"
#include "milg/rng.hpp"

namespace milg {

void EncoderConfig::validate() const {
  if (patch_size == 0 || patch_size % 8 != 0)
    throw UserError("autoencoder patch size must be a positive multiple of 8, got " + std::to_string(patch_size));
  if (latent_dim == 0) throw UserError("latent_dim must be positive");
  for (auto c : channels)
    if (c == 0) throw UserError("autoencoder channel widths must be positive");
  if (batch_size == 0) throw UserError("batch size must be positive");
}

template <typename T>
std::vector<Tensor<T>*> AutoencoderParams<T>::all() {
  std::vector<Tensor<T>*> out;
  for (std::size_t i = 0; i < 3; ++i) {
    out.push_back(&enc_w[i]);
    out.push_back(&enc_b[i]);
  }
  out.push_back(&enc_dense_w);
  out.push_back(&enc_dense_b);
  out.push_back(&dec_dense_w);
  out.push_back(&dec_dense_b);
  for (std::size_t i = 0; i < 3; ++i) {
    out.push_back(&dec_w[i]);
    out.push_back(&dec_b[i]);
  }
  return out;
}

namespace {

template <typename T>
Tensor<T> uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> zeros_param(Shape shape) {
  Tensor<T> t(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

const char* kEncW[3] = {"enc.conv0.w", "enc.conv1.w", "enc.conv2.w"};
const char* kEncB[3] = {"enc.conv0.b", "enc.conv1.b", "enc.conv2.b"};
const char* kDecW[3] = {"dec.conv0.w", "dec.conv1.w", "dec.conv2.w"};
const char* kDecB[3] = {"dec.conv0.b", "dec.conv1.b", "dec.conv2.b"};

}  // namespace

template <typename T>
Autoencoder<T>::Autoencoder(const EncoderConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(cfg_.seed, 0xAE));
  const auto& ch = cfg_.channels;
  const std::array<std::size_t, 4> enc_ch{3, ch[0], ch[1], ch[2]};
  for (std::size_t i = 0; i < 3; ++i) {
    params_.enc_w[i] = uniform_init<T>({enc_ch[i + 1], enc_ch[i], 3, 3}, enc_ch[i] * 9, rng);
    params_.enc_b[i] = zeros_param<T>({enc_ch[i + 1]});
  }
  params_.enc_dense_w = uniform_init<T>({cfg_.latent_dim, flat_dim()}, flat_dim(), rng);
  params_.enc_dense_b = zeros_param<T>({cfg_.latent_dim});
  params_.dec_dense_w = uniform_init<T>({flat_dim(), cfg_.latent_dim}, cfg_.latent_dim, rng);
  params_.dec_dense_b = zeros_param<T>({flat_dim()});
  const std::array<std::size_t, 4> dec_ch{ch[2], ch[1], ch[0], 3};
  for (std::size_t i = 0; i < 3; ++i) {
    params_.dec_w[i] = uniform_init<T>({dec_ch[i + 1], dec_ch[i], 3, 3}, dec_ch[i] * 9, rng);
    params_.dec_b[i] = zeros_param<T>({dec_ch[i + 1]});
  }
}

template <typename T>
ad::Var Autoencoder<T>::encode(ad::Tape<T>& tape, ad::Var x) {
  const auto& shape = tape.value(x).shape();
  if (shape.size() != 4 || shape[1] != 3 || shape[2] != cfg_.patch_size || shape[3] != cfg_.patch_size)
    throw DimensionError("encoder expects [B,3," + std::to_string(cfg_.patch_size) + "," +
                         std::to_string(cfg_.patch_size) + "], got " + shape_str(shape));
  const std::size_t batch = shape[0];
  ad::Var h = x;
  for (std::size_t i = 0; i < 3; ++i) {
    h = tape.conv3x3(h, tape.param(params_.enc_w[i]), tape.param(params_.enc_b[i]));
    h = tape.avg_pool2(tape.relu(h));
  }
  h = tape.reshape(h, {batch, flat_dim()});
  return tape.add_row_bias(tape.matmul_nt(h, tape.param(params_.enc_dense_w)), tape.param(params_.enc_dense_b));
}

template <typename T>
ad::Var Autoencoder<T>::decode(ad::Tape<T>& tape, ad::Var z) {
  const std::size_t batch = tape.value(z).dim(0);
  ad::Var h = tape.add_row_bias(tape.matmul_nt(z, tape.param(params_.dec_dense_w)), tape.param(params_.dec_dense_b));
  h = tape.relu(h);
  const std::size_t s = bottleneck_side();
  h = tape.reshape(h, {batch, cfg_.channels[2], s, s});
  for (std::size_t i = 0; i < 3; ++i) {
    h = tape.conv3x3(tape.upsample2(h), tape.param(params_.dec_w[i]), tape.param(params_.dec_b[i]));
    h = i < 2 ? tape.relu(h) : tape.sigmoid(h);
  }
  return h;
}

template <typename T>
Checkpoint Autoencoder<T>::to_checkpoint() const {
  Checkpoint ck;
  ck.meta = {{"model", "autoencoder"},
             {"patch_size", cfg_.patch_size},
             {"latent_dim", cfg_.latent_dim},
             {"channels", cfg_.channels},
             {"seed", cfg_.seed}};
  for (std::size_t i = 0; i < 3; ++i) {
    ck.add(kEncW[i], params_.enc_w[i]);
    ck.add(kEncB[i], params_.enc_b[i]);
  }
  ck.add("enc.dense.w", params_.enc_dense_w);
  ck.add("enc.dense.b", params_.enc_dense_b);
  ck.add("dec.dense.w", params_.dec_dense_w);
  ck.add("dec.dense.b", params_.dec_dense_b);
  for (std::size_t i = 0; i < 3; ++i) {
    ck.add(kDecW[i], params_.dec_w[i]);
    ck.add(kDecB[i], params_.dec_b[i]);
  }
  return ck;
}

template <typename T>
Autoencoder<T> Autoencoder<T>::from_checkpoint(const Checkpoint& ck) {
  if (ck.meta.value("model", "") != "autoencoder") throw UserError("checkpoint is not an autoencoder");
  EncoderConfig cfg;
  cfg.patch_size = ck.meta.at("patch_size").get<std::size_t>();
  cfg.latent_dim = ck.meta.at("latent_dim").get<std::size_t>();
  cfg.channels = ck.meta.at("channels").get<std::array<std::size_t, 3>>();
  cfg.seed = ck.meta.value("seed", std::uint64_t{0});
  Autoencoder model(cfg);
  auto& p = model.params_;
  for (std::size_t i = 0; i < 3; ++i) {
    ck.load_into(kEncW[i], p.enc_w[i]);
    ck.load_into(kEncB[i], p.enc_b[i]);
    ck.load_into(kDecW[i], p.dec_w[i]);
    ck.load_into(kDecB[i], p.dec_b[i]);
  }
  ck.load_into("enc.dense.w", p.enc_dense_w);
  ck.load_into("enc.dense.b", p.enc_dense_b);
  ck.load_into("dec.dense.w", p.dec_dense_w);
  ck.load_into("dec.dense.b", p.dec_dense_b);
  return model;
}

template class Autoencoder<float>;
template class Autoencoder<double>;

template <typename T>
Tensor<T> patches_to_tensor(const std::vector<RgbImage>& patches, std::size_t begin, std::size_t end) {
  if (begin >= end) throw DimensionError("empty patch batch");
  const std::size_t n = patches[begin].width();
  Tensor<T> out({end - begin, 3, n, n});
  T* dst = out.data().data();
  for (std::size_t b = begin; b < end; ++b) {
    const auto& img = patches[b];
    if (img.width() != n || img.height() != n) throw UserError("patches in a batch must share one size");
    const auto& px = img.bytes();
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < n * n; ++i) *dst++ = static_cast<T>(px[i * 3 + c]) / T(255);
  }
  return out;
}

template Tensor<float> patches_to_tensor<float>(const std::vector<RgbImage>&, std::size_t, std::size_t);
template Tensor<double> patches_to_tensor<double>(const std::vector<RgbImage>&, std::size_t, std::size_t);

namespace {

void check_patch_sizes(const std::vector<RgbImage>& patches, std::size_t n) {
  for (const auto& p : patches)
    if (p.width() != n || p.height() != n)
      throw UserError("patch size " + std::to_string(p.width()) + "x" + std::to_string(p.height()) +
                      " does not match the autoencoder's " + std::to_string(n));
}

double batch_mse(Autoencoder<float>& model, const std::vector<RgbImage>& patches, std::size_t begin,
                 std::size_t end) {
  ad::Tape<float> tape;
  ad::Var x = tape.constant(patches_to_tensor<float>(patches, begin, end));
  ad::Var loss = tape.mse(model.decode(tape, model.encode(tape, x)), x);
  return tape.value(loss)[0];
}

}  // namespace

double reconstruction_mse(Autoencoder<float>& model, const std::vector<RgbImage>& patches) {
  if (patches.empty()) return 0.0;
  check_patch_sizes(patches, model.config().patch_size);
  const std::size_t bs = model.config().batch_size;
  double total = 0.0;
  for (std::size_t b = 0; b < patches.size(); b += bs) {
    const std::size_t e = std::min(patches.size(), b + bs);
    total += batch_mse(model, patches, b, e) * static_cast<double>(e - b);
  }
  return total / static_cast<double>(patches.size());
}

Autoencoder<float> train_autoencoder(const std::vector<RgbImage>& all_patches, const EncoderConfig& cfg,
                                     AeTrainLog* log) {
  cfg.validate();
  if (all_patches.empty()) throw UserError("train_autoencoder: no patches");
  check_patch_sizes(all_patches, cfg.patch_size);

  Rng rng(derive_seed(cfg.seed, 0xAE7));
  std::vector<RgbImage> subset;
  const std::vector<RgbImage>* patches = &all_patches;
  if (cfg.max_train_patches > 0 && all_patches.size() > cfg.max_train_patches) {
    std::vector<std::size_t> idx(all_patches.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(idx);
    idx.resize(cfg.max_train_patches);
    std::sort(idx.begin(), idx.end());
    for (auto i : idx) subset.push_back(all_patches[i]);
    patches = &subset;
  }

  Autoencoder<float> model(cfg);
  Optimizer<float> opt(cfg.optimizer, model.params().all());
  if (log) {
    log->epoch_loss.clear();
    log->initial_loss = reconstruction_mse(model, *patches);
  }

  std::vector<std::size_t> order(patches->size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<RgbImage> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      batch.clear();
      for (std::size_t i = b; i < e; ++i) batch.push_back((*patches)[order[i]]);
      ad::Tape<float> tape;
      ad::Var x = tape.constant(patches_to_tensor<float>(batch, 0, batch.size()));
      ad::Var loss = tape.mse(model.decode(tape, model.encode(tape, x)), x);
      const double l = tape.value(loss)[0];
      if (!std::isfinite(l)) {
        std::ostringstream os;
        os << "autoencoder loss became non-finite at epoch " << epoch << ", batch starting " << b;
        throw NumericError(os.str());
      }
      tape.backward(loss);
      opt.step();
      total += l * static_cast<double>(e - b);
    }
    const double mean = total / static_cast<double>(order.size());
    if (log) log->epoch_loss.push_back(mean);
    log::info("train-ae epoch " + std::to_string(epoch + 1) + "/" + std::to_string(cfg.epochs) +
              " mse=" + std::to_string(mean));
  }
  return model;
}

Tensor<float> featurize(const std::vector<RgbImage>& patches, const Autoencoder<float>& model_in) {
  const auto& cfg = model_in.config();
  Tensor<float> out({patches.size(), cfg.latent_dim});
  if (patches.empty()) return out;
  check_patch_sizes(patches, cfg.patch_size);
  Autoencoder<float> model = model_in;
  const std::size_t bs = std::max<std::size_t>(1, cfg.batch_size);
  for (std::size_t b = 0; b < patches.size(); b += bs) {
    const std::size_t e = std::min(patches.size(), b + bs);
    ad::Tape<float> tape;
    ad::Var z = model.encode(tape, tape.constant(patches_to_tensor<float>(patches, b, e)));
    const auto& zv = tape.value(z);
    std::copy(zv.data().begin(), zv.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * cfg.latent_dim));
  }
  return out;
}

}  // namespace milg
