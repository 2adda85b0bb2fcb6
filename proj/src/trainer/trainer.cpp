// SPDX-License-Identifier: Apache-2.0
#include "mcsp/trainer/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>

#include "mcsp/numcore/adam.hpp"
#include "mcsp/numcore/rng.hpp"

namespace mcsp::trainer {

using chansim::Dataset;
using chansim::Sample;
using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("train: epochs must be >= 1");
  if (batch_size < 1) throw InvalidArgument("train: batch size must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidArgument("train: lr must be finite and >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("train: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw InvalidArgument("train: eps must be positive");
  if (clip && !(clip_norm > 0.0)) throw InvalidArgument("train: clip norm must be positive");
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"lr", c.lr},
          {"beta1", c.beta1},   {"beta2", c.beta2},           {"eps", c.eps},
          {"seed", c.seed},     {"shuffle", c.shuffle},       {"clip", c.clip},
          {"clip_norm", c.clip_norm}};
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("train config must be a JSON object");
  TrainConfig c;
  try {
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<std::size_t>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("beta1")) c.beta1 = j.at("beta1").get<double>();
    if (j.contains("beta2")) c.beta2 = j.at("beta2").get<double>();
    if (j.contains("eps")) c.eps = j.at("eps").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("shuffle")) c.shuffle = j.at("shuffle").get<bool>();
    if (j.contains("clip")) c.clip = j.at("clip").get<bool>();
    if (j.contains("clip_norm")) c.clip_norm = j.at("clip_norm").get<double>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("train config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------- metrics

double nmse(const ComplexMatrix& pred, const ComplexMatrix& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw InvalidArgument("nmse: shape mismatch");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double dr = pred.re()[i] - truth.re()[i];
    const double di = pred.im()[i] - truth.im()[i];
    num += dr * dr + di * di;
    den += truth.re()[i] * truth.re()[i] + truth.im()[i] * truth.im()[i];
  }
  if (den == 0.0) throw InvalidArgument("nmse: truth has zero energy");
  return num / den;
}

ad::Var nmse_loss(const ad::Var& x_hat, const pipeline::NormStats& stats,
                  const ComplexMatrix& truth) {
  const Tensor target = pipeline::grid_to_rows(truth);
  if (x_hat.shape() != target.shape()) {
    throw InvalidArgument("nmse_loss: prediction " + shape_string(x_hat.shape()) +
                          " vs target " + shape_string(target.shape()));
  }
  double den = 0.0;
  for (double v : target.data()) den += v * v;
  if (den == 0.0) throw InvalidArgument("nmse_loss: truth has zero energy");
  auto diff = ad::sub(ad::affine(x_hat, stats.sigma, stats.mu), ad::Var::leaf(target));
  return ad::affine(ad::sum(ad::mul(diff, diff)), 1.0 / den);
}

ComplexMatrix persistence_baseline(const Sample& s, std::size_t L) {
  const auto& h = s.ul_history;
  if (h.cols() == 0) throw InvalidArgument("persistence: empty history");
  ComplexMatrix out(h.rows(), L);
  for (std::size_t k = 0; k < h.rows(); ++k) {
    const cplx last = h(k, h.cols() - 1);
    for (std::size_t l = 0; l < L; ++l) out.set(k, l, last);
  }
  return out;
}

int velocity_bin(double v_kmh) { return static_cast<int>(std::floor(v_kmh / 10.0)) * 10; }

EvalReport evaluate_predictor(const Predictor& f, const Dataset& ds) {
  const std::size_t n = ds.samples.size();
  if (n == 0) throw InvalidArgument("evaluate: empty test set");
  const std::size_t L = ds.header.L;
  std::vector<double> per_sample(n);
  std::vector<double> horizon(n * L);
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    try {
      const auto& s = ds.samples[i];
      const auto pred = f(s);
      per_sample[i] = nmse(pred, s.dl_target);
      const std::size_t K = s.dl_target.rows();
      for (std::size_t l = 0; l < L; ++l) {
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          const cplx d = pred(k, l) - s.dl_target(k, l);
          num += std::norm(d);
          den += std::norm(s.dl_target(k, l));
        }
        horizon[i * L + l] = den > 0.0 ? num / den : std::numeric_limits<double>::quiet_NaN();
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  EvalReport r;
  r.sample_count = n;
  r.per_sample = per_sample;
  double total = 0.0;
  std::map<int, std::pair<double, std::size_t>> bins;
  for (std::size_t i = 0; i < n; ++i) {
    total += per_sample[i];
    auto& b = bins[velocity_bin(ds.samples[i].velocity)];
    b.first += per_sample[i];
    ++b.second;
  }
  r.overall_nmse = total / static_cast<double>(n);
  for (const auto& [bin, acc] : bins) r.per_velocity[bin] = acc.first / static_cast<double>(acc.second);
  r.per_horizon.assign(L, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += horizon[i * L + l];
    r.per_horizon[l] = acc / static_cast<double>(n);
  }
  return r;
}

namespace {

void check_shapes(const model::ModelConfig& c, const Dataset& ds, const char* which) {
  const auto& h = ds.header;
  if (h.K != c.K || h.P != c.P || h.L != c.L) {
    throw InvalidArgument(std::string(which) + " set (K=" + std::to_string(h.K) +
                          ", P=" + std::to_string(h.P) + ", L=" + std::to_string(h.L) +
                          ") does not match model (K=" + std::to_string(c.K) +
                          ", P=" + std::to_string(c.P) + ", L=" + std::to_string(c.L) + ")");
  }
}

}  // namespace

EvalReport evaluate(const model::Model& m, const Dataset& ds) {
  check_shapes(m.config(), ds, "test");
  return evaluate_predictor([&](const Sample& s) { return m.predict(s.ul_history); }, ds);
}

EvalReport evaluate_persistence(const Dataset& ds) {
  const std::size_t L = ds.header.L;
  return evaluate_predictor([L](const Sample& s) { return persistence_baseline(s, L); }, ds);
}

// ---------------------------------------------------------------- training

namespace {

struct SampleGrad {
  double loss = 0.0;
  std::vector<Tensor> grads;  // empty tensors for frozen params
  std::exception_ptr error;
};

void sample_step(const model::Model& m, const pipeline::PatchedInput& in,
                 const ComplexMatrix& truth, SampleGrad& out) {
  const model::Bound bound(m.params(), true);
  const auto loss = nmse_loss(m.forward(bound, in), in.norm_f, truth);
  out.loss = loss.value()[0];
  if (!std::isfinite(out.loss)) throw NumericFailure("non-finite training loss");
  loss.backward();
  out.grads.resize(bound.size());
  for (std::size_t i = 0; i < bound.size(); ++i) {
    if (bound[i].requires_grad()) out.grads[i] = bound[i].grad();
  }
}

double validation_nmse(const model::Checkpoint& ck, const Dataset& val) {
  return evaluate(model::to_model(ck), val).overall_nmse;
}

}  // namespace

TrainResult train(const model::Model& init, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg) {
  cfg.validate();
  const auto& mc = init.config();
  check_shapes(mc, train_set, "train");
  check_shapes(mc, val_set, "validation");
  const std::size_t n = train_set.samples.size();
  if (n == 0) throw InvalidArgument("train: empty training set");
  if (val_set.samples.empty()) throw InvalidArgument("train: empty validation set");

  std::vector<pipeline::PatchedInput> inputs(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    inputs[i] = pipeline::preprocess(train_set.samples[i].ul_history, mc.patch_size);
  }

  model::Model m = init;
  const AdamHyper hyper{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps};
  std::vector<AdamState> adam;
  adam.reserve(m.params().size());
  for (const auto& p : m.params()) adam.emplace_back(p.value.shape(), hyper);

  TrainResult result;
  auto record = [&](std::size_t epoch, double train_nmse) {
    auto ck = model::make_checkpoint(m);
    const double val = validation_nmse(ck, val_set);
    result.history.push_back({epoch, train_nmse, val});
    if (result.history.size() == 1 || val < result.best_val_nmse) {
      result.best_val_nmse = val;
      result.best_epoch = epoch;
      result.best = std::move(ck);
    }
  };

  // Untrained reference point.
  {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const model::Bound bound(m.params(), false);
      acc += nmse_loss(m.forward(bound, inputs[i]), inputs[i].norm_f,
                       train_set.samples[i].dl_target).value()[0];
    }
    record(0, acc / static_cast<double>(n));
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::vector<SampleGrad> batch(cfg.batch_size);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle) order = RngStream(cfg.seed, stream_id("shuffle", epoch)).permutation(n);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t bsz = std::min(cfg.batch_size, n - start);
#pragma omp parallel for schedule(dynamic)
      for (std::ptrdiff_t bb = 0; bb < static_cast<std::ptrdiff_t>(bsz); ++bb) {
        auto& sg = batch[bb];
        sg.error = nullptr;
        const std::size_t idx = order[start + bb];
        try {
          sample_step(m, inputs[idx], train_set.samples[idx].dl_target, sg);
        } catch (...) {
          sg.error = std::current_exception();
        }
      }
      for (std::size_t b = 0; b < bsz; ++b) {
        if (!batch[b].error) continue;
        try {
          std::rethrow_exception(batch[b].error);
        } catch (const NumericFailure& e) {
          throw TrainingAborted("training aborted in epoch " + std::to_string(epoch) + ": " +
                                    e.what(),
                                model::make_checkpoint(m));
        }
      }

      // Fixed-order reduction, then the mean.
      const double inv = 1.0 / static_cast<double>(bsz);
      std::vector<Tensor> grad(m.params().size());
      double sq = 0.0;
      for (std::size_t p = 0; p < m.params().size(); ++p) {
        if (!m.params()[p].trainable) continue;
        grad[p] = Tensor(m.params()[p].value.shape());
        auto g = grad[p].data();
        for (std::size_t b = 0; b < bsz; ++b) {
          const auto src = batch[b].grads[p].data();
          for (std::size_t k = 0; k < g.size(); ++k) g[k] += src[k];
        }
        for (double& v : g) {
          v *= inv;
          sq += v * v;
        }
      }
      if (!std::isfinite(sq)) {
        throw TrainingAborted("non-finite gradient in epoch " + std::to_string(epoch),
                              model::make_checkpoint(m));
      }
      const double norm = std::sqrt(sq);
      const double scale = (cfg.clip && norm > cfg.clip_norm) ? cfg.clip_norm / norm : 1.0;
      for (std::size_t p = 0; p < m.params().size(); ++p) {
        if (!m.params()[p].trainable) continue;
        if (scale != 1.0) {
          for (double& v : grad[p].data()) v *= scale;
        }
        adam_step(m.params()[p].value, grad[p], adam[p]);
      }
      for (std::size_t b = 0; b < bsz; ++b) epoch_loss += batch[b].loss;
    }
    record(epoch, epoch_loss / static_cast<double>(n));
  }
  return result;
}

// ---------------------------------------------------------------- output

json to_json(const EvalReport& r) {
  json pv = json::object();
  for (const auto& [bin, v] : r.per_velocity) pv[std::to_string(bin)] = v;
  return {{"overall_nmse", r.overall_nmse},
          {"per_velocity", pv},
          {"per_horizon", r.per_horizon},
          {"sample_count", r.sample_count}};
}

void write_eval_report(const EvalReport& r, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << to_json(r).dump(2) << '\n';
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

void write_loss_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << "epoch,train_nmse,val_nmse\n";
  char line[96];
  for (const auto& e : history) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g\n", e.epoch, e.train_nmse, e.val_nmse);
    os << line;
  }
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace mcsp::trainer
