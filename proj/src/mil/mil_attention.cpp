#include "milg/mil_attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "milg/log.hpp"
#include "milg/rng.hpp"

namespace milg {

void Bag::validate(std::size_t n_classes) const {
  if (features.rank() != 2 || features.dim(0) == 0)
    throw UserError("bag '" + slide_id + "' has no patches");
  if (coords.size() != features.dim(0))
    throw UserError("bag '" + slide_id + "': " + std::to_string(coords.size()) + " coordinates for " +
                    std::to_string(features.dim(0)) + " feature rows");
  if (label >= n_classes)
    throw UserError("bag '" + slide_id + "': label " + std::to_string(label) + " outside [0, " +
                    std::to_string(n_classes) + ")");
}

std::size_t AttentionResult::predicted() const {
  return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

template <typename T>
Tensor<T> init_weight(std::size_t rows, std::size_t cols, std::uint64_t seed, std::uint64_t stream) {
  Rng rng(derive_seed(seed, stream));
  Tensor<T> w({rows, cols});
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  w.set_requires_grad(true);
  return w;
}

template Tensor<float> init_weight<float>(std::size_t, std::size_t, std::uint64_t, std::uint64_t);
template Tensor<double> init_weight<double>(std::size_t, std::size_t, std::uint64_t, std::uint64_t);

template <typename T>
MilModel<T>::MilModel(const MilConfig& cfg) : cfg_(cfg) {
  if (cfg.input_dim == 0 || cfg.proj_dim == 0 || cfg.att_dim == 0) throw UserError("MIL dimensions must be positive");
  if (cfg.n_classes < 2) throw UserError("MIL classifier needs at least two classes");
  params_.w_proj = init_weight<T>(cfg.proj_dim, cfg.input_dim, cfg.seed, 101);
  params_.v_att = init_weight<T>(cfg.att_dim, cfg.proj_dim, cfg.seed, 102);
  params_.q_att = init_weight<T>(cfg.att_dim, cfg.proj_dim, cfg.seed, 103);
  params_.k_att = init_weight<T>(1, cfg.att_dim, cfg.seed, 104);
  params_.w_cls = init_weight<T>(cfg.n_classes, cfg.proj_dim, cfg.seed, 105);
}

template <typename T>
typename MilModel<T>::Graph MilModel<T>::forward(ad::Tape<T>& tape, ad::Var features) {
  const auto& shape = tape.value(features).shape();
  if (shape.size() != 2 || shape[1] != cfg_.input_dim)
    throw DimensionError("MIL input must be [M x " + std::to_string(cfg_.input_dim) + "], got " + shape_str(shape));
  if (shape[0] == 0) throw DimensionError("MIL input has no patches");
  Graph g;
  g.projected = tape.matmul_nt(features, tape.param(params_.w_proj));
  ad::Var gate_tanh = tape.tanh(tape.matmul_nt(g.projected, tape.param(params_.v_att)));
  ad::Var gate_sigm = tape.sigmoid(tape.matmul_nt(g.projected, tape.param(params_.q_att)));
  ad::Var e = tape.matmul_nt(tape.mul(gate_tanh, gate_sigm), tape.param(params_.k_att));
  g.scores = tape.softmax(e);
  g.embedding = tape.matmul(tape.transpose(g.scores), g.projected);
  g.logits = tape.matmul_nt(g.embedding, tape.param(params_.w_cls));
  g.probs = tape.softmax(g.logits);
  return g;
}

template <typename T>
AttentionResult MilModel<T>::attend(const Tensor<float>& features) const {
  MilModel copy = *this;
  ad::Tape<T> tape;
  auto g = copy.forward(tape, tape.constant(features.template cast<T>()));
  AttentionResult r;
  for (T v : tape.value(g.scores).data()) r.scores.push_back(static_cast<double>(v));
  for (T v : tape.value(g.embedding).data()) r.bag_embedding.push_back(static_cast<double>(v));
  for (T v : tape.value(g.logits).data()) r.logits.push_back(static_cast<double>(v));
  return r;
}

template <typename T>
Tensor<float> MilModel<T>::project(const Tensor<float>& features) const {
  MilModel copy = *this;
  ad::Tape<T> tape;
  ad::Var p = tape.matmul_nt(tape.constant(features.template cast<T>()), tape.param(copy.params_.w_proj));
  return tape.value(p).template cast<float>();
}

template <typename T>
Checkpoint MilModel<T>::to_checkpoint() const {
  Checkpoint ck;
  ck.meta = {{"model", "mil-attention"},
             {"input_dim", cfg_.input_dim},
             {"proj_dim", cfg_.proj_dim},
             {"att_dim", cfg_.att_dim},
             {"n_classes", cfg_.n_classes},
             {"seed", cfg_.seed}};
  ck.add("W_p", params_.w_proj);
  ck.add("V_a", params_.v_att);
  ck.add("Q_a", params_.q_att);
  ck.add("K_a", params_.k_att);
  ck.add("W_cls", params_.w_cls);
  return ck;
}

template <typename T>
MilModel<T> MilModel<T>::from_checkpoint(const Checkpoint& ck) {
  if (ck.meta.value("model", "") != "mil-attention") throw UserError("checkpoint is not a MIL attention model");
  MilConfig cfg;
  cfg.input_dim = ck.meta.at("input_dim").get<std::size_t>();
  cfg.proj_dim = ck.meta.at("proj_dim").get<std::size_t>();
  cfg.att_dim = ck.meta.at("att_dim").get<std::size_t>();
  cfg.n_classes = ck.meta.at("n_classes").get<std::size_t>();
  cfg.seed = ck.meta.value("seed", std::uint64_t{0});
  MilModel m(cfg);
  ck.load_into("W_p", m.params_.w_proj);
  ck.load_into("V_a", m.params_.v_att);
  ck.load_into("Q_a", m.params_.q_att);
  ck.load_into("K_a", m.params_.k_att);
  ck.load_into("W_cls", m.params_.w_cls);
  return m;
}

template class MilModel<float>;
template class MilModel<double>;

MilModel<float> train_mil(const std::vector<Bag>& bags, const MilConfig& cfg, const TrainConfig& train,
                          std::vector<EpochStat>* log) {
  if (bags.size() < 2) throw UserError("train_mil needs at least two bags, got " + std::to_string(bags.size()));
  std::vector<std::size_t> counts(cfg.n_classes, 0);
  for (const auto& b : bags) {
    b.validate(cfg.n_classes);
    if (b.features.dim(1) != cfg.input_dim)
      throw UserError("bag '" + b.slide_id + "' has feature width " + std::to_string(b.features.dim(1)) +
                      ", model expects " + std::to_string(cfg.input_dim));
    ++counts[b.label];
  }
  if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2) {
    std::ostringstream os;
    os << "train_mil: all bags share one label; class counts:";
    for (std::size_t c = 0; c < counts.size(); ++c) os << ' ' << c << '=' << counts[c];
    throw UserError(os.str());
  }
  if (train.batch_size == 0) throw UserError("batch size must be positive");

  MilModel<float> model(cfg);
  Optimizer<float> opt(train.optimizer, model.params().all());
  Rng rng(derive_seed(train.seed, 0x11));
  std::vector<std::size_t> order(bags.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (log) log->clear();

  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < order.size(); b += train.batch_size) {
      const std::size_t e = std::min(order.size(), b + train.batch_size);
      for (std::size_t i = b; i < e; ++i) {
        const Bag& bag = bags[order[i]];
        ad::Tape<float> tape;
        auto g = model.forward(tape, tape.constant(bag.features));
        ad::Var loss = tape.cross_entropy(g.probs, bag.label);
        const double l = tape.value(loss)[0];
        if (!std::isfinite(l)) throw NumericError("train_mil: non-finite loss at epoch " + std::to_string(epoch));
        tape.backward(loss);
        total += l;
        const auto& p = tape.value(g.probs).data();
        if (static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()) == bag.label) ++correct;
      }
      opt.step(1.0f / static_cast<float>(e - b));
    }
    const EpochStat st{total / static_cast<double>(bags.size()),
                       static_cast<double>(correct) / static_cast<double>(bags.size())};
    if (log) log->push_back(st);
    if ((epoch + 1) % 10 == 0 || epoch + 1 == train.epochs)
      log::info("train-mil epoch " + std::to_string(epoch + 1) + " loss=" + std::to_string(st.loss) +
                " acc=" + std::to_string(st.train_acc));
  }
  return model;
}

std::vector<std::size_t> select_top(std::span<const double> scores, double s_percent) {
  if (!(s_percent > 0.0 && s_percent <= 100.0)) throw UserError("top-S percentage must lie in (0, 100]");
  const std::size_t m = scores.size();
  if (m == 0) return {};
  const double raw = s_percent * static_cast<double>(m) / 100.0;
  std::size_t k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  k = std::clamp<std::size_t>(k, 1, m);
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace milg
