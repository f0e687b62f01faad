#include "rdgcn/gcn.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "rdgcn/error.hpp"
#include "rdgcn/matrix_io.hpp"

namespace rdgcn::gcn {

namespace {

constexpr std::array<char, 4> kMagic = {'R', 'D', 'G', 'W'};
constexpr std::uint8_t kVersion = 1;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

/// P H W with the cheaper association.
Matrix propagate(const Matrix& p, const Matrix& h, const Matrix& w) {
  if (h.cols() <= w.cols()) return matmul(matmul(p, h), w);
  return matmul(p, matmul(h, w));
}

void log_softmax_rows(Matrix& z) {
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto r = z.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double v : r) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    for (double& v : r) v -= lse;
  }
}

void check_mask(std::span<const std::size_t> mask, std::size_t n, std::span<const int> labels) {
  require(!mask.empty(), "empty loss mask");
  require(labels.size() == n, "label count does not match node count");
  for (std::size_t i : mask) {
    require(i < n, "mask index out of range");
    require(labels[i] == 0 || labels[i] == 1, "labels must be 0 or 1");
  }
}

ForwardCache forward_impl(const Matrix& p, const Matrix& x, const GCNModel& model, Mode mode,
                          const std::vector<Matrix>* fixed_masks, std::uint64_t dropout_seed) {
  const std::size_t layers = model.weights.size();
  require(layers >= 1, "model has no layers");
  require(p.rows() == p.cols(), "propagation matrix is not square");
  require(p.rows() == x.rows(), "propagation and feature matrices disagree on node count");
  require(x.cols() == model.weights[0].rows(), "feature width does not match the first layer");

  ForwardCache cache;
  cache.generation = model.generation;
  cache.training = mode == Mode::Train;
  std::mt19937_64 rng(dropout_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - model.dropout_rate);

  Matrix h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    const Matrix& w = model.weights[l];
    require(h.cols() == w.rows(), "layer " + std::to_string(l) + " shape mismatch");
    Matrix z = propagate(p, h, w);
    cache.inputs.push_back(std::move(h));
    if (l + 1 == layers) {
      log_softmax_rows(z);
      cache.log_probs = std::move(z);
      break;
    }
    Matrix a = z;
    for (double& v : a.data()) v = std::max(v, 0.0);
    if (mode == Mode::Train) {
      Matrix mask;
      if (fixed_masks) {
        require(l < fixed_masks->size(), "missing dropout mask");
        mask = (*fixed_masks)[l];
        require(mask.same_shape(a), "dropout mask shape mismatch");
      } else {
        mask = Matrix(a.rows(), a.cols());
        for (double& v : mask.data()) v = unit(rng) < model.dropout_rate ? 0.0 : keep_scale;
      }
      for (std::size_t k = 0; k < a.size(); ++k) a.data()[k] *= mask.data()[k];
      cache.masks.push_back(std::move(mask));
    }
    cache.pre_activations.push_back(std::move(z));
    h = std::move(a);
  }
  return cache;
}

double data_loss(const Matrix& log_probs, std::span<const int> labels,
                 std::span<const std::size_t> mask) {
  double s = 0.0;
  for (std::size_t i : mask) s -= log_probs(i, static_cast<std::size_t>(labels[i]));
  return s / static_cast<double>(mask.size());
}

}  // namespace

std::vector<std::size_t> GCNModel::dims() const {
  std::vector<std::size_t> d;
  if (weights.empty()) return d;
  d.push_back(weights.front().rows());
  for (const auto& w : weights) d.push_back(w.cols());
  return d;
}

GCNModel GCNModel::create(const std::vector<std::size_t>& dims, double dropout_rate,
                          std::uint64_t seed) {
  if (dims.size() < 2) throw ConfigError("a GCN needs at least one layer");
  if (dims.back() != 2) throw ConfigError("the output layer must have 2 units");
  for (std::size_t d : dims) {
    if (d == 0) throw ConfigError("layer dimensions must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("dropout_rate must be in [0, 1)");
  }
  GCNModel m;
  m.dropout_rate = dropout_rate;
  m.seed = seed;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    m.weights.push_back(glorot_init(dims[l], dims[l + 1], mix_seed(seed, l)));
  }
  return m;
}

std::vector<std::size_t> layer_dims(std::size_t input, std::size_t hidden, std::size_t num_layers) {
  if (num_layers == 0) throw ConfigError("num_layers must be at least 1");
  std::vector<std::size_t> d{input};
  for (std::size_t l = 1; l < num_layers; ++l) d.push_back(hidden);
  d.push_back(2);
  return d;
}

Matrix glorot_init(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  if (fan_in == 0 || fan_out == 0) throw std::invalid_argument("glorot_init: zero dimension");
  const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-r, r);
  Matrix w(fan_in, fan_out);
  for (double& v : w.data()) v = dist(rng);
  return w;
}

ForwardCache gcn_forward(const Matrix& p, const Matrix& x, const GCNModel& model, Mode mode,
                         std::uint64_t dropout_seed) {
  return forward_impl(p, x, model, mode, nullptr, dropout_seed);
}

ForwardCache gcn_forward_with_masks(const Matrix& p, const Matrix& x, const GCNModel& model,
                                    const std::vector<Matrix>& masks) {
  return forward_impl(p, x, model, Mode::Train, &masks, 0);
}

double nll_loss(const Matrix& log_probs, std::span<const int> labels,
                std::span<const std::size_t> mask, const GCNModel& model, double weight_decay) {
  check_mask(mask, log_probs.rows(), labels);
  double loss = data_loss(log_probs, labels, mask);
  if (weight_decay != 0.0 && !model.weights.empty()) {
    loss += 0.5 * weight_decay * frobenius_squared(model.weights[0]);
  }
  return loss;
}

std::vector<Matrix> gcn_backward(const ForwardCache& cache, const Matrix& p,
                                 std::span<const int> labels, std::span<const std::size_t> mask,
                                 const GCNModel& model, double weight_decay) {
  if (cache.generation != model.generation || cache.inputs.size() != model.weights.size()) {
    throw std::logic_error("gcn_backward: forward cache is stale");
  }
  const std::size_t n = cache.log_probs.rows();
  check_mask(mask, n, labels);
  require(p.rows() == n && p.cols() == n, "propagation matrix does not match the cache");

  // d loss / d logits: (softmax - onehot) / |mask| on masked rows
  Matrix g(n, 2);
  const double inv = 1.0 / static_cast<double>(mask.size());
  for (std::size_t i : mask) {
    for (std::size_t c = 0; c < 2; ++c) {
      const double target = static_cast<std::size_t>(labels[i]) == c ? 1.0 : 0.0;
      g(i, c) += (std::exp(cache.log_probs(i, c)) - target) * inv;
    }
  }

  const std::size_t layers = model.weights.size();
  std::vector<Matrix> grads(layers);
  for (std::size_t l = layers; l-- > 0;) {
    const Matrix& h = cache.inputs[l];
    const Matrix& w = model.weights[l];
    const std::size_t in = w.rows();
    const std::size_t out = w.cols();
    Matrix dh;
    if ((l == 0 ? in : 2 * in) < out) {
      grads[l] = matmul_tn(matmul(p, h), g);
      if (l > 0) dh = matmul_tn(p, matmul_nt(g, w));
    } else {
      const Matrix q = matmul_tn(p, g);
      grads[l] = matmul_tn(h, q);
      if (l > 0) dh = matmul_nt(q, w);
    }
    if (l == 0) break;
    if (cache.training) {
      const Matrix& m = cache.masks[l - 1];
      for (std::size_t k = 0; k < dh.size(); ++k) dh.data()[k] *= m.data()[k];
    }
    const Matrix& z = cache.pre_activations[l - 1];
    for (std::size_t k = 0; k < dh.size(); ++k) {
      if (!(z.data()[k] > 0.0)) dh.data()[k] = 0.0;
    }
    g = std::move(dh);
  }
  if (weight_decay != 0.0) {
    for (std::size_t k = 0; k < grads[0].size(); ++k) {
      grads[0].data()[k] += weight_decay * model.weights[0].data()[k];
    }
  }
  return grads;
}

void adam_step(std::vector<Matrix>& weights, const std::vector<Matrix>& grads, AdamState& state,
               const AdamHyper& hyper) {
  require(weights.size() == grads.size(), "adam_step: gradient count mismatch");
  if (state.m.empty()) {
    for (const auto& w : weights) {
      state.m.emplace_back(w.rows(), w.cols());
      state.v.emplace_back(w.rows(), w.cols());
    }
  }
  require(state.m.size() == weights.size(), "adam_step: optimizer state mismatch");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    require(weights[l].same_shape(grads[l]) && weights[l].same_shape(state.m[l]),
            "adam_step: shape mismatch at layer " + std::to_string(l));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t l = 0; l < weights.size(); ++l) {
    auto& w = weights[l].data();
    auto& m = state.m[l].data();
    auto& v = state.v[l].data();
    const auto& g = grads[l].data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = hyper.beta1 * m[k] + (1.0 - hyper.beta1) * g[k];
      v[k] = hyper.beta2 * v[k] + (1.0 - hyper.beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      w[k] -= hyper.learning_rate * mhat / (std::sqrt(vhat) + hyper.epsilon);
    }
  }
}

void adam_step(GCNModel& model, const std::vector<Matrix>& grads, AdamState& state,
               const AdamHyper& hyper) {
  adam_step(model.weights, grads, state, hyper);
  ++model.generation;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be nonnegative");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("train.dropout_rate must be in [0, 1)");
  }
  if (num_layers == 0) throw ConfigError("train.num_layers must be at least 1");
  if (hidden_size == 0 && num_layers > 1) throw ConfigError("train.hidden_size must be positive");
}

TrainResult train(const Matrix& p, const Matrix& x, std::span<const int> labels,
                  const SplitMasks& masks, const TrainConfig& config) {
  config.validate();
  masks.validate(x.rows());
  if (masks.train.empty()) throw DataError("training split is empty");
  if (labels.size() != x.rows()) throw DataError("label count does not match rule matrix rows");

  TrainResult result;
  result.model = GCNModel::create(layer_dims(x.cols(), config.hidden_size, config.num_layers),
                                  config.dropout_rate, config.seed);
  GCNModel& model = result.model;
  const AdamHyper hyper{config.learning_rate};
  AdamState state;

  const bool has_val = !masks.validation.empty();
  std::vector<int> val_labels;
  for (std::size_t i : masks.validation) val_labels.push_back(labels[i]);

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Matrix> best_weights = model.weights;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const ForwardCache cache =
        gcn_forward(p, x, model, Mode::Train, mix_seed(config.seed, 1000 + epoch));
    const double loss = nll_loss(cache.log_probs, labels, masks.train, model, config.weight_decay);
    if (!std::isfinite(loss)) {
      throw NumericalError("training diverged at epoch " + std::to_string(epoch) +
                           ": non-finite loss; try a smaller learning rate");
    }
    const auto grads = gcn_backward(cache, p, labels, masks.train, model, config.weight_decay);
    adam_step(model, grads, state, hyper);

    EpochRecord rec{epoch, loss, std::numeric_limits<double>::quiet_NaN(), 0.0};
    if (has_val) {
      const ForwardCache ev = gcn_forward(p, x, model, Mode::Eval);
      rec.val_loss = data_loss(ev.log_probs, labels, masks.validation);
      if (!std::isfinite(rec.val_loss)) {
        throw NumericalError("validation loss is non-finite at epoch " + std::to_string(epoch));
      }
      std::vector<double> scores;
      for (std::size_t i : masks.validation) scores.push_back(std::exp(ev.log_probs(i, 1)));
      rec.val_f1 = eval::confusion_metrics(scores, val_labels, 0.5).f1;
    }
    result.history.push_back(rec);

    if (!has_val) {
      result.best_epoch = epoch;
      continue;
    }
    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      best_weights = model.weights;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  if (has_val) {
    model.weights = std::move(best_weights);
    ++model.generation;
  }
  return result;
}

Predictions predict(const GCNModel& model, const Matrix& p, const Matrix& x) {
  const ForwardCache cache = gcn_forward(p, x, model, Mode::Eval);
  Predictions out;
  for (std::size_t i = 0; i < cache.log_probs.rows(); ++i) {
    out.scores.push_back(std::exp(cache.log_probs(i, 1)));
    out.labels.push_back(cache.log_probs(i, 1) > cache.log_probs(i, 0) ? 1 : 0);
  }
  return out;
}

void write_checkpoint(std::ostream& out, const GCNModel& model) {
  out.write(kMagic.data(), kMagic.size());
  out.put(static_cast<char>(kVersion));
  io::write_u64(out, model.weights.size());
  for (std::size_t d : model.dims()) io::write_u64(out, d);
  io::write_f64(out, model.dropout_rate);
  io::write_u64(out, model.seed);
  for (const auto& w : model.weights) {
    for (double v : w.data()) io::write_f64(out, v);
  }
}

GCNModel read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4 || magic != kMagic) throw DataError("not an RDGW checkpoint");
  const int version = in.get();
  if (version != kVersion) throw DataError("unsupported RDGW version " + std::to_string(version));
  const std::uint64_t layers = io::read_u64(in);
  if (layers == 0 || layers > 64) throw DataError("implausible layer count in checkpoint");
  std::vector<std::size_t> dims;
  for (std::uint64_t l = 0; l <= layers; ++l) {
    const std::uint64_t d = io::read_u64(in);
    if (d == 0 || d > (1u << 24)) throw DataError("implausible layer width in checkpoint");
    dims.push_back(d);
  }
  GCNModel m;
  m.dropout_rate = io::read_f64(in);
  m.seed = io::read_u64(in);
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix w(dims[l], dims[l + 1]);
    for (double& v : w.data()) v = io::read_f64(in);
    m.weights.push_back(std::move(w));
  }
  return m;
}

void save_checkpoint(const std::filesystem::path& path, const GCNModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  write_checkpoint(out, model);
  if (!out) throw DataError("write failed: " + path.string());
}

GCNModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read file: " + path.string());
  return read_checkpoint(in);
}

void write_history_csv(std::ostream& out, std::span<const EpochRecord> history) {
  out << "epoch,train_loss,val_loss,val_f1\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << io::format_double(r.train_loss) << ','
        << (std::isfinite(r.val_loss) ? io::format_double(r.val_loss) : "") << ','
        << io::format_double(r.val_f1) << '\n';
  }
}

}  // namespace rdgcn::gcn
