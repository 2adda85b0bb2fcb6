// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcsp/chansim/dataset.hpp"
#include "mcsp/error.hpp"
#include "mcsp/model/checkpoint.hpp"
#include "mcsp/model/model.hpp"
#include "mcsp/pipeline/pipeline.hpp"

namespace mcsp::trainer {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  bool shuffle = true;
  bool clip = false;  // rescale to global norm `clip_norm` when exceeded
  double clip_norm = 10.0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Epoch 0 is the untrained model.
struct EpochRecord {
  std::size_t epoch = 0;
  double train_nmse = 0.0;
  double val_nmse = 0.0;
};

struct TrainResult {
  model::Checkpoint best;
  std::size_t best_epoch = 0;
  double best_val_nmse = 0.0;
  std::vector<EpochRecord> history;
};

/// NaN loss during training; carries the parameters before the failing step.
class TrainingAborted : public NumericFailure {
 public:
  TrainingAborted(const std::string& what, model::Checkpoint last_good)
      : NumericFailure(what), last_good_(std::move(last_good)) {}
  const model::Checkpoint& last_good() const noexcept { return last_good_; }

 private:
  model::Checkpoint last_good_;
};

/// Sum |pred - truth|^2 / sum |truth|^2 for one sample.
double nmse(const ComplexMatrix& pred, const ComplexMatrix& truth);

/// Differentiable NMSE of a normalised prediction X_hat [2K x L] after the
/// sigma * X + mu mapping, against `truth` (K x L).
ad::Var nmse_loss(const ad::Var& x_hat, const pipeline::NormStats& stats,
                  const ComplexMatrix& truth);

/// Last history slot repeated over L target slots.
ComplexMatrix persistence_baseline(const chansim::Sample& s, std::size_t L);

/// Adam on the mean per-sample NMSE. Deterministic for a given seed and
/// independent of the thread count. Returns the best-validation checkpoint.
TrainResult train(const model::Model& init, const chansim::Dataset& train_set,
                  const chansim::Dataset& val_set, const TrainConfig& cfg);

struct EvalReport {
  double overall_nmse = 0.0;
  std::map<int, double> per_velocity;  // bin lower edge (km/h) -> NMSE
  std::vector<double> per_horizon;     // slot offset 1..L
  std::size_t sample_count = 0;
  std::vector<double> per_sample;
};

using Predictor = std::function<ComplexMatrix(const chansim::Sample&)>;

EvalReport evaluate(const model::Model& m, const chansim::Dataset& test_set);
EvalReport evaluate_predictor(const Predictor& f, const chansim::Dataset& test_set);
EvalReport evaluate_persistence(const chansim::Dataset& test_set);

/// 10 km/h bins keyed by lower edge.
int velocity_bin(double v_kmh);

nlohmann::json to_json(const EvalReport& r);
void write_eval_report(const EvalReport& r, const std::filesystem::path& path);
void write_loss_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

}  // namespace mcsp::trainer
