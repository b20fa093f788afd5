#pragma once

// Adam, the plateau learning-rate schedule with early stopping, and the
// epoch loop that keeps the best-dev-accuracy model.

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <utility>
#include <string>
#include <vector>

#include "hbmp/checkpoint.hpp"
#include "hbmp/data.hpp"
#include "hbmp/inference.hpp"
#include "hbmp/model.hpp"

namespace hbmp {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteGradient : public TrainingError {
 public:
  using TrainingError::TrainingError;
};

struct AdamState {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;  // first moments, one per parameter
  std::vector<std::vector<double>> v;  // second moments
};

/// One bias-corrected Adam update. Parameters without a gradient buffer are
/// treated as having zero gradient. A non-finite gradient aborts the step
/// before anything is modified.
inline void adam_step(const ParamList& params, AdamState& s) {
  for (const auto& [name, t] : params) {
    const auto g = t.grad_view();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!std::isfinite(g[i]))
        throw NonFiniteGradient("non-finite gradient in " + name + " at index " + std::to_string(i) +
                                " (step " + std::to_string(s.step + 1) + ")");
  }
  if (s.m.empty()) {
    for (const auto& p : params) {
      s.m.emplace_back(p.tensor.numel(), 0.0);
      s.v.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  if (s.m.size() != params.size()) throw DimensionError("adam_step: state does not match parameter list");
  ++s.step;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor t = params[k].tensor;
    auto data = t.data();
    const auto g = t.grad_view();
    auto& m = s.m[k];
    auto& v = s.v[k];
    if (m.size() != data.size()) throw DimensionError("adam_step: moment shape mismatch for " + params[k].name);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * gi;
      v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * gi * gi;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      data[i] -= s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
    }
  }
}

enum class EpochAction { proceed, decay_lr, stop };

/// Dev-loss plateau handling. An epoch "improves" when its dev loss is below
/// the best seen so far. Every non-improving epoch multiplies the learning
/// rate by `decay`; once the number of consecutive non-improving epochs
/// exceeds `patience`, training stops.
class PlateauSchedule {
 public:
  explicit PlateauSchedule(double lr0 = 5e-4, double decay = 0.2, std::size_t patience = 3)
      : lr0_(lr0), decay_(decay), patience_(patience) {
    if (!(lr0 > 0.0) || !(decay > 0.0 && decay < 1.0))
      throw std::invalid_argument("schedule needs lr0 > 0 and decay in (0, 1)");
  }

  EpochAction epoch_end(double dev_loss) {
    history_.push_back(dev_loss);
    if (dev_loss < best_) {
      best_ = dev_loss;
      streak_ = 0;
      return EpochAction::proceed;
    }
    ++decays_;
    ++streak_;
    return streak_ > patience_ ? EpochAction::stop : EpochAction::decay_lr;
  }

  /// lr0 · decay^k after k non-improving epochs.
  double lr() const { return lr0_ * std::pow(decay_, static_cast<double>(decays_)); }
  std::size_t decays() const { return decays_; }
  std::size_t streak() const { return streak_; }
  double best_loss() const { return best_; }
  const std::vector<double>& history() const { return history_; }

 private:
  double lr0_;
  double decay_;
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t decays_ = 0;
  std::size_t streak_ = 0;
  std::vector<double> history_;
};

struct TrainConfig {
  double lr0 = 5e-4;
  double decay = 0.2;
  std::size_t batch_size = 64;
  std::size_t patience = 3;
  std::size_t max_epochs = 20;
  std::uint64_t seed = 1234;
  std::string checkpoint_dir;  // empty: keep checkpoints in memory only

  void validate() const {
    if (max_epochs == 0) throw std::invalid_argument("max_epochs must be at least 1");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
    if (!(lr0 > 0.0)) throw std::invalid_argument("lr must be positive");
    if (!(decay > 0.0 && decay < 1.0)) throw std::invalid_argument("decay must be in (0, 1)");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double dev_accuracy = 0.0;
  double lr = 0.0;  // rate used during this epoch
};

struct FitResult {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_dev_accuracy = -1.0;
  std::string best_checkpoint;  // empty when no checkpoint_dir
  std::string stop_reason;      // "early_stopping" or "max_epochs"
};

inline void append_adam_state(Checkpoint& ck, const ParamList& params, const AdamState& s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", s.lr);
  ck.config["adam.lr"] = buf;
  ck.config["adam.step"] = std::to_string(s.step);
  for (std::size_t k = 0; k < s.m.size() && k < params.size(); ++k) {
    const Shape& shape = params[k].tensor.shape();
    ck.tensors.push_back({"adam.m/" + params[k].name, Tensor::from(shape, s.m[k])});
    ck.tensors.push_back({"adam.v/" + params[k].name, Tensor::from(shape, s.v[k])});
  }
}

inline AdamState restore_adam_state(const Checkpoint& ck, const ParamList& params) {
  AdamState s;
  s.lr = std::stod(ck.get("adam.lr"));
  s.step = std::stoull(ck.get("adam.step"));
  if (s.step == 0) return s;
  for (const auto& p : params) {
    const Tensor* m = ck.find("adam.m/" + p.name);
    const Tensor* v = ck.find("adam.v/" + p.name);
    if (!m || !v) throw CheckpointShapeError("checkpoint lacks optimizer moments for " + p.name);
    if (m->shape() != p.tensor.shape() || v->shape() != p.tensor.shape())
      throw CheckpointShapeError("optimizer moments for " + p.name + " have the wrong shape");
    s.m.emplace_back(m->data().begin(), m->data().end());
    s.v.emplace_back(v->data().begin(), v->data().end());
  }
  return s;
}

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains `model` in place and leaves it holding the parameters of the epoch
/// with the highest dev accuracy (earliest on ties).
inline FitResult fit(NliModel& model, const EncodedDataset& train, const EncodedDataset& dev,
                     const TrainConfig& cfg, const std::map<std::string, std::string>& meta = {},
                     const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train.size() == 0 || dev.size() == 0) throw std::invalid_argument("fit: train and dev must be non-empty");
  for (const auto* ds : {&train, &dev})
    for (int label : ds->labels)
      if (label < 0 || static_cast<std::size_t>(label) >= model.config.classes)
        throw std::invalid_argument("fit: label " + std::to_string(label) + " outside the model's " +
                                    std::to_string(model.config.classes) + " classes");

  namespace fs = std::filesystem;
  std::string best_path, last_path;
  if (!cfg.checkpoint_dir.empty()) {
    fs::create_directories(cfg.checkpoint_dir);
    best_path = (fs::path(cfg.checkpoint_dir) / "best.ckpt").string();
    last_path = (fs::path(cfg.checkpoint_dir) / "last.ckpt").string();
  }

  const ParamList params = model.parameters();
  AdamState adam;
  adam.lr = cfg.lr0;
  PlateauSchedule schedule(cfg.lr0, cfg.decay, cfg.patience);
  Rng dropout_rng(Rng::mix(cfg.seed ^ 0xd5u));
  NliModel best = model.clone();
  FitResult result;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = adam.lr;
    BatchStream stream(train, cfg.batch_size, true, Rng::mix(cfg.seed + epoch));
    PairBatch batch;
    double loss_sum = 0.0;
    while (stream.next(batch)) {
      for (const auto& p : params) p.tensor.zero_grad();
      Tape tape;
      Tensor logits = model.logits(tape, batch.premise, batch.hypothesis, true, dropout_rng);
      Tensor loss = softmax_cross_entropy(tape, logits, batch.labels);
      if (!std::isfinite(loss.item()))
        throw TrainingError("non-finite training loss in epoch " + std::to_string(epoch));
      tape.backward(loss);
      adam_step(params, adam);
      loss_sum += loss.item() * static_cast<double>(batch.labels.size());
    }
    rec.train_loss = loss_sum / static_cast<double>(train.size());

    const Predictions dev_pred = predict(model, dev, cfg.batch_size);
    rec.dev_loss = dev_pred.mean_loss;
    rec.dev_accuracy = dev_pred.accuracy;
    if (!std::isfinite(rec.dev_loss)) throw TrainingError("non-finite dev loss in epoch " + std::to_string(epoch));
    result.epochs.push_back(rec);

    if (rec.dev_accuracy > result.best_dev_accuracy) {
      result.best_dev_accuracy = rec.dev_accuracy;
      result.best_epoch = epoch;
      best.assign_from(model);
      if (!best_path.empty()) {
        auto extra = meta;
        extra["train.epoch"] = std::to_string(epoch);
        save_checkpoint(best_path, make_checkpoint(model, extra));
        result.best_checkpoint = best_path;
      }
    }

    const EpochAction action = schedule.epoch_end(rec.dev_loss);
    adam.lr = schedule.lr();
    if (!last_path.empty()) {
      auto extra = meta;
      extra["train.epoch"] = std::to_string(epoch);
      Checkpoint ck = make_checkpoint(model, extra);
      append_adam_state(ck, params, adam);
      save_checkpoint(last_path, ck);
    }
    if (on_epoch) on_epoch(rec);
    if (action == EpochAction::stop) {
      result.stop_reason = "early_stopping";
      break;
    }
  }
  if (result.stop_reason.empty()) result.stop_reason = "max_epochs";
  model.assign_from(best);
  return result;
}

}  // namespace hbmp
