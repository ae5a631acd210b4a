#include "milg/asg_network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "milg/log.hpp"
#include "milg/rng.hpp"

namespace milg {

void AsgConfig::validate() const {
  if (num_modules < 1) throw UserError("ASG network needs at least one module");
  if (hidden < 1) throw UserError("ASG hidden width must be positive");
  if (!(pool_ratio > 0.0 && pool_ratio < 1.0)) throw UserError("pooling ratio must lie in (0, 1)");
  if (n_classes < 2) throw UserError("ASG classifier needs at least two classes");
  if (input_dim < 1) throw UserError("ASG input width must be positive");
}

template <typename T>
std::vector<Tensor<T>*> AsgParams<T>::all() {
  std::vector<Tensor<T>*> out;
  for (std::size_t l = 0; l < w_gcn.size(); ++l) {
    out.push_back(&w_gcn[l]);
    out.push_back(&w_score[l]);
  }
  out.push_back(&w_fc);
  return out;
}

template <typename T>
Tensor<T> normalized_adjacency(const Adjacency& a) {
  const std::size_t n = a.size();
  std::vector<T> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = T(1) / std::sqrt(static_cast<T>(a.degree(i) + 1));
  Tensor<T> out({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i == j || a(i, j)) out[i * n + j] = inv_sqrt[i] * inv_sqrt[j];
  return out;
}

template <typename T>
ad::Var gcn_layer(ad::Tape<T>& tape, ad::Var g, const Adjacency& a, ad::Var w) {
  const auto& gs = tape.value(g).shape();
  if (gs.size() != 2 || gs[0] != a.size())
    throw DimensionError("gcn_layer: features " + shape_str(gs) + " do not match " + std::to_string(a.size()) +
                         " nodes");
  ad::Var prop = tape.constant(normalized_adjacency<T>(a));
  return tape.relu(tape.matmul(prop, tape.matmul(g, w)));
}

std::size_t pooled_size(std::size_t n, double ratio) {
  const auto k = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
  return std::max<std::size_t>(1, std::min(k, n));
}

template <typename T>
PoolOutput sag_pool(ad::Tape<T>& tape, ad::Var g, const Adjacency& a, ad::Var w_score, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw UserError("pooling ratio must lie in (0, 1)");
  PoolOutput out;
  out.scores = gcn_layer(tape, g, a, w_score);
  const auto& s = tape.value(out.scores);
  if (s.cols() != 1) throw DimensionError("sag_pool: score weight must produce one column");
  const std::size_t n = a.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return s[i] > s[j]; });
  order.resize(pooled_size(n, ratio));
  std::sort(order.begin(), order.end());
  out.kept = order;
  out.adjacency = a.induced(out.kept);
  out.features = tape.scale_rows(tape.gather_rows(g, out.kept), tape.gather_rows(out.scores, out.kept));
  return out;
}

template <typename T>
AsgNetwork<T>::AsgNetwork(const AsgConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  for (std::size_t l = 0; l < cfg_.num_modules; ++l) {
    const std::size_t in = l == 0 ? cfg_.input_dim : cfg_.hidden;
    // Stored [F_in x F] so the layer is a plain G * W.
    Tensor<T> w = init_weight<T>(cfg_.hidden, in, cfg_.seed, 200 + 2 * l);
    Tensor<T> wt({in, cfg_.hidden});
    for (std::size_t i = 0; i < in; ++i)
      for (std::size_t j = 0; j < cfg_.hidden; ++j) wt[i * cfg_.hidden + j] = w[j * in + i];
    wt.set_requires_grad(true);
    params_.w_gcn.push_back(std::move(wt));
    Tensor<T> ws = init_weight<T>(1, cfg_.hidden, cfg_.seed, 201 + 2 * l).reshaped({cfg_.hidden, 1});
    ws.set_requires_grad(true);
    params_.w_score.push_back(std::move(ws));
  }
  params_.w_fc = init_weight<T>(cfg_.n_classes, cfg_.hidden, cfg_.seed, 199);
}

template <typename T>
ad::Var AsgNetwork<T>::forward(ad::Tape<T>& tape, const PatchGraph& graph, Trace* trace) {
  if (graph.size() == 0) throw UserError("graph '" + graph.slide_id + "' has no nodes");
  if (graph.node_features.dim(1) != cfg_.input_dim)
    throw DimensionError("graph '" + graph.slide_id + "' node width " + std::to_string(graph.node_features.dim(1)) +
                         " does not match the network's " + std::to_string(cfg_.input_dim));
  ad::Var x = tape.constant(graph.node_features.template cast<T>());
  Adjacency adj = graph.adjacency;
  if (trace) trace->kept.clear();
  for (std::size_t l = 0; l < cfg_.num_modules; ++l) {
    ad::Var h = gcn_layer(tape, x, adj, tape.param(params_.w_gcn[l]));
    PoolOutput pool = sag_pool(tape, h, adj, tape.param(params_.w_score[l]), cfg_.pool_ratio);
    ad::Var next = pool.features;
    // The first module's skip only exists when its input already has width F.
    if (l > 0 || cfg_.input_dim == cfg_.hidden) next = tape.add(next, tape.gather_rows(x, pool.kept));
    x = next;
    adj = std::move(pool.adjacency);
    if (trace) trace->kept.push_back(std::move(pool.kept));
  }
  ad::Var pooled = tape.mean_rows(x);
  return tape.softmax(tape.matmul_nt(pooled, tape.param(params_.w_fc)));
}

template <typename T>
std::vector<double> AsgNetwork<T>::predict_proba(const PatchGraph& graph) const {
  AsgNetwork copy = *this;
  ad::Tape<T> tape;
  ad::Var p = copy.forward(tape, graph);
  std::vector<double> out;
  for (T v : tape.value(p).data()) out.push_back(static_cast<double>(v));
  return out;
}

template <typename T>
std::size_t AsgNetwork<T>::predict(const PatchGraph& graph) const {
  const auto p = predict_proba(graph);
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

template <typename T>
Checkpoint AsgNetwork<T>::to_checkpoint() const {
  Checkpoint ck;
  ck.meta = {{"model", "asg-network"},     {"num_modules", cfg_.num_modules}, {"hidden", cfg_.hidden},
             {"pool_ratio", cfg_.pool_ratio}, {"n_classes", cfg_.n_classes},     {"input_dim", cfg_.input_dim},
             {"seed", cfg_.seed}};
  for (std::size_t l = 0; l < cfg_.num_modules; ++l) {
    ck.add("asg" + std::to_string(l) + ".W_G", params_.w_gcn[l]);
    ck.add("asg" + std::to_string(l) + ".W_T", params_.w_score[l]);
  }
  ck.add("head.W_fc", params_.w_fc);
  return ck;
}

template <typename T>
AsgNetwork<T> AsgNetwork<T>::from_checkpoint(const Checkpoint& ck) {
  if (ck.meta.value("model", "") != "asg-network") throw UserError("checkpoint is not an ASG network");
  AsgConfig cfg;
  cfg.num_modules = ck.meta.at("num_modules").get<std::size_t>();
  cfg.hidden = ck.meta.at("hidden").get<std::size_t>();
  cfg.pool_ratio = ck.meta.at("pool_ratio").get<double>();
  cfg.n_classes = ck.meta.at("n_classes").get<std::size_t>();
  cfg.input_dim = ck.meta.at("input_dim").get<std::size_t>();
  cfg.seed = ck.meta.value("seed", std::uint64_t{0});
  AsgNetwork net(cfg);
  for (std::size_t l = 0; l < cfg.num_modules; ++l) {
    ck.load_into("asg" + std::to_string(l) + ".W_G", net.params_.w_gcn[l]);
    ck.load_into("asg" + std::to_string(l) + ".W_T", net.params_.w_score[l]);
  }
  ck.load_into("head.W_fc", net.params_.w_fc);
  return net;
}

template Tensor<float> normalized_adjacency<float>(const Adjacency&);
template Tensor<double> normalized_adjacency<double>(const Adjacency&);
template ad::Var gcn_layer<float>(ad::Tape<float>&, ad::Var, const Adjacency&, ad::Var);
template ad::Var gcn_layer<double>(ad::Tape<double>&, ad::Var, const Adjacency&, ad::Var);
template PoolOutput sag_pool<float>(ad::Tape<float>&, ad::Var, const Adjacency&, ad::Var, double);
template PoolOutput sag_pool<double>(ad::Tape<double>&, ad::Var, const Adjacency&, ad::Var, double);
template struct AsgParams<float>;
template struct AsgParams<double>;
template class AsgNetwork<float>;
template class AsgNetwork<double>;

AsgNetwork<float> train_gcn(const std::vector<PatchGraph>& graphs, AsgNetwork<float> net, const TrainConfig& train,
                            std::vector<EpochStat>* log) {
  const auto& cfg = net.config();
  if (graphs.size() < 2) throw UserError("train_gcn needs at least two graphs, got " + std::to_string(graphs.size()));
  std::vector<std::size_t> counts(cfg.n_classes, 0);
  for (const auto& g : graphs) {
    if (g.label >= cfg.n_classes) throw UserError("graph '" + g.slide_id + "' label out of range");
    if (g.size() == 0) throw UserError("graph '" + g.slide_id + "' has no nodes");
    ++counts[g.label];
  }
  if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2) {
    std::ostringstream os;
    os << "train_gcn: all graphs share one label; class counts:";
    for (std::size_t c = 0; c < counts.size(); ++c) os << ' ' << c << '=' << counts[c];
    throw UserError(os.str());
  }
  if (train.batch_size == 0) throw UserError("batch size must be positive");

  Optimizer<float> opt(train.optimizer, net.params().all());
  Rng rng(derive_seed(train.seed, 0x22));
  std::vector<std::size_t> order(graphs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (log) log->clear();

  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < order.size(); b += train.batch_size) {
      const std::size_t e = std::min(order.size(), b + train.batch_size);
      for (std::size_t i = b; i < e; ++i) {
        const PatchGraph& g = graphs[order[i]];
        ad::Tape<float> tape;
        ad::Var probs = net.forward(tape, g);
        ad::Var loss = tape.cross_entropy(probs, g.label);
        const double l = tape.value(loss)[0];
        if (!std::isfinite(l)) throw NumericError("train_gcn: non-finite loss at epoch " + std::to_string(epoch));
        tape.backward(loss);
        total += l;
        const auto& p = tape.value(probs).data();
        if (static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()) == g.label) ++correct;
      }
      opt.step(1.0f / static_cast<float>(e - b));
    }
    const EpochStat st{total / static_cast<double>(graphs.size()),
                       static_cast<double>(correct) / static_cast<double>(graphs.size())};
    if (log) log->push_back(st);
    if ((epoch + 1) % 20 == 0 || epoch + 1 == train.epochs)
      log::info("train-gcn epoch " + std::to_string(epoch + 1) + " loss=" + std::to_string(st.loss) +
                " acc=" + std::to_string(st.train_acc));
  }
  return net;
}

AsgNetwork<float> train_gcn(const std::vector<PatchGraph>& graphs, const AsgConfig& cfg, const TrainConfig& train,
                            std::vector<EpochStat>* log) {
  return train_gcn(graphs, AsgNetwork<float>(cfg), train, log);
}

}  // namespace milg
