#pragma once

#include <vector>

#include "hbmp/data.hpp"
#include "hbmp/model.hpp"

namespace hbmp {

struct Predictions {
  std::vector<int> predicted;   // per example, dataset order
  std::vector<double> losses;   // per-example cross-entropy
  double mean_loss = 0.0;
  double accuracy = 0.0;
};

/// Deterministic evaluation pass (dropout off). Losses are reduced in
/// dataset order. `extra_padding` appends pad steps to every batch.
inline Predictions predict(const NliModel& model, const EncodedDataset& ds, std::size_t batch_size = 64,
                           std::size_t extra_padding = 0) {
  Predictions out;
  out.predicted.assign(ds.size(), 0);
  out.losses.assign(ds.size(), 0.0);
  BatchStream stream(ds, batch_size, false, 0);
  PairBatch batch;
  Rng unused(0);
  while (stream.next(batch)) {
    if (extra_padding > 0) {
      batch.premise = batch.premise.padded(extra_padding);
      batch.hypothesis = batch.hypothesis.padded(extra_padding);
    }
    Tape tape(false);
    Tensor logits = model.logits(tape, batch.premise, batch.hypothesis, false, unused);
    const auto pred = argmax_rows(logits);
    const auto loss = cross_entropy_per_row(logits, batch.labels);
    for (std::size_t k = 0; k < batch.indices.size(); ++k) {
      out.predicted[batch.indices[k]] = pred[k];
      out.losses[batch.indices[k]] = loss[k];
    }
  }
  std::size_t correct = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    total += out.losses[i];
    correct += out.predicted[i] == ds.labels[i];
  }
  out.mean_loss = total / static_cast<double>(ds.size());
  out.accuracy = static_cast<double>(correct) / static_cast<double>(ds.size());
  return out;
}

}  // namespace hbmp
