#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "rdgcn/eval.hpp"
#include "rdgcn/matrix.hpp"

namespace rdgcn::gcn {

using eval::SplitMasks;

/// Dense GCN: weights[l] is dims[l] x dims[l+1] and the last dimension is 2.
struct GCNModel {
  std::vector<Matrix> weights;
  double dropout_rate = 0.5;
  std::uint64_t seed = 0;
  /// Bumped by every optimizer step; ties forward caches to the weights they
  /// were computed with.
  std::uint64_t generation = 0;

  std::vector<std::size_t> dims() const;
  std::size_t num_layers() const noexcept { return weights.size(); }

  /// Glorot-initialized model, layer l seeded from `seed` and l.
  /// Throws ConfigError on fewer than 2 dims, a zero dim, or a last dim other than 2.
  static GCNModel create(const std::vector<std::size_t>& dims, double dropout_rate,
                         std::uint64_t seed);
};

/// [input, hidden x (num_layers - 1), 2]
std::vector<std::size_t> layer_dims(std::size_t input, std::size_t hidden, std::size_t num_layers);

/// Uniform on [-r, r] with r = sqrt(6 / (fan_in + fan_out)).
Matrix glorot_init(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed);

enum class Mode : std::uint8_t { Train, Eval };

struct ForwardCache {
  std::vector<Matrix> inputs;           // H fed to layer l, after dropout
  std::vector<Matrix> pre_activations;  // P H W for each hidden layer
  std::vector<Matrix> masks;            // per hidden layer, entries 0 or 1/(1-rate); empty in eval
  Matrix log_probs;
  std::uint64_t generation = 0;
  bool training = false;
};

/// Hidden layers apply relu then (in train mode) dropout; the last layer is
/// followed by a row-wise log-softmax. Throws std::invalid_argument on shape
/// mismatches.
ForwardCache gcn_forward(const Matrix& p, const Matrix& x, const GCNModel& model, Mode mode,
                         std::uint64_t dropout_seed = 0);
/// Train-mode forward with caller-supplied dropout masks (one per hidden layer).
ForwardCache gcn_forward_with_masks(const Matrix& p, const Matrix& x, const GCNModel& model,
                                    const std::vector<Matrix>& masks);

/// Mean of -log_probs[i][labels[i]] over `mask` plus weight_decay/2 * |W0|^2.
/// Throws std::invalid_argument on an empty mask.
double nll_loss(const Matrix& log_probs, std::span<const int> labels,
                std::span<const std::size_t> mask, const GCNModel& model, double weight_decay);

/// Gradient of nll_loss for every weight matrix. `cache` must come from a
/// forward pass over `p` with the current weights; a stale cache throws
/// std::logic_error.
std::vector<Matrix> gcn_backward(const ForwardCache& cache, const Matrix& p,
                                 std::span<const int> labels, std::span<const std::size_t> mask,
                                 const GCNModel& model, double weight_decay);

struct AdamHyper {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::uint64_t step = 0;
};

/// Bias-corrected Adam update in place. Throws std::invalid_argument on shape
/// mismatch.
void adam_step(std::vector<Matrix>& weights, const std::vector<Matrix>& grads, AdamState& state,
               const AdamHyper& hyper);
/// Same, and bumps model.generation.
void adam_step(GCNModel& model, const std::vector<Matrix>& grads, AdamState& state,
               const AdamHyper& hyper);

struct TrainConfig {
  std::size_t epochs = 200;
  double learning_rate = 0.01;
  double weight_decay = 5e-4;
  double dropout_rate = 0.5;
  std::uint64_t seed = 0;
  /// Epochs without validation-loss improvement before stopping; 0 disables.
  std::size_t patience = 10;
  std::size_t hidden_size = 16;
  std::size_t num_layers = 2;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // includes weight decay
  double val_loss = 0.0;    // data term only; NaN without a validation set
  double val_f1 = 0.0;
};

struct TrainResult {
  GCNModel model;  // weights of the best validation-loss epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

/// Full-batch transductive training. Throws NumericalError on a non-finite
/// loss and ConfigError on an invalid config.
TrainResult train(const Matrix& p, const Matrix& x, std::span<const int> labels,
                  const SplitMasks& masks, const TrainConfig& config);

struct Predictions {
  std::vector<double> scores;  // P(positive)
  std::vector<int> labels;     // argmax
};

Predictions predict(const GCNModel& model, const Matrix& p, const Matrix& x);

/// `RDGW`, version byte, u64 layer count, u64 dims, f64 dropout, u64 seed,
/// then each weight matrix row-major f64, little-endian.
void write_checkpoint(std::ostream& out, const GCNModel& model);
GCNModel read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const GCNModel& model);
GCNModel load_checkpoint(const std::filesystem::path& path);

void write_history_csv(std::ostream& out, std::span<const EpochRecord> history);

}  // namespace rdgcn::gcn
