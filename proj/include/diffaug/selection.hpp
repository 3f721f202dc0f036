// Copyright (c) 2026 The diffaug Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Top-k selection of generated samples by a small convolutional classifier,
// plus the fold-wise accuracy evaluation used to compare training sets.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffaug/data/bytes.hpp"
#include "diffaug/denoisers/checkpoint.hpp"
#include "diffaug/diffusion.hpp"
#include "diffaug/error.hpp"
#include "diffaug/numerics/adamw.hpp"
#include "diffaug/numerics/grid.hpp"
#include "diffaug/numerics/rng.hpp"
#include "diffaug/numerics/tape.hpp"

namespace diffaug {

/// Anything that maps a batch [N, ...] to scores [N, C].
template <class D, class T>
concept Discriminator = requires(const D& d, const BasicGrid<T>& x) {
  { d.predict_scores(x) } -> std::convertible_to<BasicGrid<T>>;
  { d.num_classes() } -> std::convertible_to<std::size_t>;
};

struct ClassifierConfig {
  std::size_t in_channels = 1;
  std::size_t width = 8;
  std::size_t num_classes = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (in_channels == 0 || width == 0) throw std::invalid_argument("classifier: invalid configuration");
    if (num_classes < 2) throw std::invalid_argument("classifier: needs at least 2 classes");
  }
  friend bool operator==(const ClassifierConfig&, const ClassifierConfig&) = default;
};

/// Three stride-2 conv + SiLU blocks (width, 2 width, 4 width channels),
/// global average pooling and a linear head.
template <class T>
class ConvClassifier {
 public:
  explicit ConvClassifier(ClassifierConfig config) : config_(config) {
    config_.validate();
    Rng rng(config_.seed, 0xc1f);
    std::size_t in = config_.in_channels;
    for (std::size_t b = 0; b < 3; ++b) {
      const std::size_t out = config_.width << b;
      const double bound = 1.0 / std::sqrt(static_cast<double>(in * 9));
      params_.push_back(uniform(rng, {out, in, 3, 3}, bound));
      params_.push_back(uniform(rng, {out}, bound));
      in = out;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    params_.push_back(uniform(rng, {in, config_.num_classes}, bound));
    params_.emplace_back(Shape{config_.num_classes});
  }

  const ClassifierConfig& config() const { return config_; }
  std::size_t num_classes() const { return config_.num_classes; }
  std::vector<BasicGrid<T>>& parameters() { return params_; }
  const std::vector<BasicGrid<T>>& parameters() const { return params_; }

  Var<T> forward(Tape<T>& tape, std::span<const Var<T>> p, Var<T> x) const {
    const auto& s = x.shape();
    if (s.size() != 4 || s[1] != config_.in_channels) {
      throw ShapeError("classifier: expected [N," + std::to_string(config_.in_channels) + ",H,W], got " +
                       shape_string(s));
    }
    auto h = x;
    for (std::size_t b = 0; b < 3; ++b) h = ad::silu(ad::conv2d(h, p[2 * b], p[2 * b + 1], 2, 1));
    (void)tape;
    return ad::affine(ad::spatial_mean(h), p[6], p[7]);
  }

  /// Scores for a batch [N, C, H, W] (or [N, H, W] with one channel).
  BasicGrid<T> predict_scores(const BasicGrid<T>& x) const {
    BasicGrid<T> in = to_nchw(x);
    Tape<T> tape(false);
    std::vector<Var<T>> p;
    for (const auto& g : params_) p.push_back(tape.constant(g));
    return forward(tape, p, tape.constant(std::move(in))).value();
  }

  BasicGrid<T> to_nchw(const BasicGrid<T>& x) const {
    if (x.rank() == 3 && config_.in_channels == 1) return x.reshaped({x.dim(0), 1, x.dim(1), x.dim(2)});
    return x;
  }

 private:
  static BasicGrid<T> uniform(Rng& rng, Shape s, double bound) {
    BasicGrid<T> g(std::move(s));
    for (auto& v : g.data()) v = static_cast<T>(rng.uniform(-bound, bound));
    return g;
  }

  ClassifierConfig config_;
  std::vector<BasicGrid<T>> params_;
};

struct ClassifierTrainConfig {
  int epochs = 200;
  int batch_size = 32;
  double label_smoothing = 0.1;
  AdamWConfig optimizer;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1 || batch_size < 1) throw std::invalid_argument("classifier training: epochs and batch_size >= 1");
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
      throw std::invalid_argument("classifier training: label smoothing must be in [0, 1)");
    }
  }
};

namespace detail {

/// Stacks sample i of each item into [N, C, H, W].
template <class T>
BasicGrid<T> stack_images(std::span<const LabeledSample<T>> data, std::span<const std::size_t> idx,
                          std::size_t channels) {
  const auto& first = data[idx[0]].spectrogram;
  const std::size_t per = first.numel();
  const std::size_t h = first.dim(first.rank() - 2), w = first.dim(first.rank() - 1);
  if (per != channels * h * w) throw ShapeError("classifier: sample shape " + shape_string(first.shape()));
  BasicGrid<T> out({idx.size(), channels, h, w});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto& g = data[idx[b]].spectrogram;
    require_same_shape(g.shape(), first.shape(), "classifier batch");
    std::copy(g.data().begin(), g.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * per));
  }
  return out;
}

}  // namespace detail

/// Trains the classifier with label-smoothed cross-entropy and AdamW.
/// Deterministic for fixed seeds. Returns the mean training loss per epoch
/// through `loss_trace` when given.
template <class T>
ConvClassifier<T> train_discriminator(std::span<const LabeledSample<T>> data, const ClassifierConfig& arch,
                                      const ClassifierTrainConfig& config,
                                      std::vector<double>* loss_trace = nullptr) {
  config.validate();
  std::set<int> present;
  for (const auto& s : data) {
    if (s.class_id < 0 || static_cast<std::size_t>(s.class_id) >= arch.num_classes) {
      throw std::out_of_range("train_discriminator: class id " + std::to_string(s.class_id) + " outside [0, " +
                              std::to_string(arch.num_classes) + ")");
    }
    present.insert(s.class_id);
  }
  if (present.size() < 2) throw std::invalid_argument("train_discriminator: need at least 2 classes present");

  ConvClassifier<T> clf(arch);
  AdamWState<T> opt(config.optimizer);
  Rng rng(config.seed, 0x7c1f);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto bs = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i) - 1))]);
    }
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const auto idx = std::span<const std::size_t>(order).subspan(start, std::min(bs, order.size() - start));
      std::vector<int> labels;
      for (auto i : idx) labels.push_back(data[i].class_id);
      Tape<T> tape;
      std::vector<Var<T>> p;
      for (const auto& g : clf.parameters()) p.push_back(tape.parameter(g));
      auto logits = clf.forward(tape, p, tape.constant(detail::stack_images(data, idx, arch.in_channels)));
      auto loss = ad::cross_entropy(logits, std::span<const int>(labels), config.label_smoothing);
      const double lv = static_cast<double>(loss.value().item());
      if (!std::isfinite(lv)) throw NonFiniteError("train_discriminator: non-finite loss");
      tape.backward(loss);
      std::vector<BasicGrid<T>> grads;
      for (auto v : p) grads.push_back(tape.grad(v));
      adamw_step(clf.parameters(), grads, opt);
      total += lv * static_cast<double>(idx.size());
    }
    if (loss_trace) loss_trace->push_back(total / static_cast<double>(data.size()));
  }
  return clf;
}

template <class T>
ConvClassifier<T> train_discriminator(const std::vector<LabeledSample<T>>& data, const ClassifierConfig& arch,
                                      const ClassifierTrainConfig& config,
                                      std::vector<double>* loss_trace = nullptr) {
  return train_discriminator<T>(std::span<const LabeledSample<T>>(data), arch, config, loss_trace);
}

/// Position of `label` when classes are sorted by descending score, ties
/// going to the lower class index.
template <class T>
std::size_t label_rank(std::span<const T> scores, std::size_t label) {
  std::size_t rank = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > scores[label] || (scores[j] == scores[label] && j < label)) ++rank;
  }
  return rank;
}

struct SelectionReport {
  std::size_t k = 1;
  std::size_t total = 0;     // N
  std::size_t accepted = 0;  // G
  std::vector<std::size_t> accepted_per_class;
  std::vector<std::size_t> rejected_per_class;

  double acceptance_rate() const { return total ? static_cast<double>(accepted) / total : 0.0; }
};

template <class T>
struct FilterResult {
  std::vector<BasicGrid<T>> samples;
  std::vector<int> labels;
  std::vector<std::size_t> indices;
  SelectionReport report;
};

/// Scores in chunks so large sample sets do not need one giant batch.
template <class T, Discriminator<T> D>
BasicGrid<T> score_all(const D& clf, std::span<const BasicGrid<T>> samples, std::size_t chunk = 64) {
  const std::size_t c = clf.num_classes();
  BasicGrid<T> out({samples.size(), c});
  for (std::size_t start = 0; start < samples.size(); start += chunk) {
    const std::size_t n = std::min(chunk, samples.size() - start);
    const auto s = clf.predict_scores(stack(samples.subspan(start, n)));
    if (s.rank() != 2 || s.dim(0) != n || s.dim(1) != c) {
      throw ShapeError("discriminator returned scores of shape " + shape_string(s.shape()));
    }
    if (!s.all_finite()) throw NonFiniteError("discriminator returned non-finite scores");
    std::copy(s.data().begin(), s.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(start * c));
  }
  return out;
}

/// Accepts sample i iff labels[i] is among the k highest-scoring classes.
/// Inputs are not modified.
template <class T, Discriminator<T> D>
FilterResult<T> topk_filter(std::span<const BasicGrid<T>> samples, std::span<const int> labels, const D& clf,
                            std::size_t k) {
  const std::size_t c = clf.num_classes();
  if (k < 1 || k > c) throw std::out_of_range("topk_filter: k = " + std::to_string(k) + " outside [1, " + std::to_string(c) + "]");
  if (samples.size() != labels.size()) throw std::invalid_argument("topk_filter: one label per sample required");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= c) {
      throw std::out_of_range("topk_filter: label " + std::to_string(l) + " outside [0, " + std::to_string(c) + ")");
    }
  }
  FilterResult<T> r;
  r.report.k = k;
  r.report.total = samples.size();
  r.report.accepted_per_class.assign(c, 0);
  r.report.rejected_per_class.assign(c, 0);
  if (samples.empty()) return r;
  const auto scores = score_all<T>(clf, samples);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto row = scores.data().subspan(i * c, c);
    const auto label = static_cast<std::size_t>(labels[i]);
    if (label_rank<T>(row, label) < k) {
      r.samples.push_back(samples[i]);
      r.labels.push_back(labels[i]);
      r.indices.push_back(i);
      ++r.report.accepted_per_class[label];
    } else {
      ++r.report.rejected_per_class[label];
    }
  }
  r.report.accepted = r.indices.size();
  return r;
}

template <class T, Discriminator<T> D>
FilterResult<T> topk_filter(const std::vector<BasicGrid<T>>& samples, const std::vector<int>& labels, const D& clf,
                            std::size_t k) {
  return topk_filter<T>(std::span<const BasicGrid<T>>(samples), std::span<const int>(labels), clf, k);
}

/// class_id,accepted,rejected per class, then a summary row
/// total,G,N-G.
inline void write_selection_report(const std::filesystem::path& path, const SelectionReport& r) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "class_id,accepted,rejected\n";
  for (std::size_t c = 0; c < r.accepted_per_class.size(); ++c) {
    out << c << ',' << r.accepted_per_class[c] << ',' << r.rejected_per_class[c] << '\n';
  }
  out << "total," << r.accepted << ',' << (r.total - r.accepted) << '\n';
}

/// Top-1 accuracy (ties to the lower class index).
template <class T, Discriminator<T> D>
double accuracy(const D& clf, std::span<const LabeledSample<T>> data) {
  if (data.empty()) throw std::invalid_argument("accuracy: empty dataset");
  std::vector<BasicGrid<T>> xs;
  xs.reserve(data.size());
  for (const auto& s : data) xs.push_back(s.spectrogram);
  const auto scores = score_all<T>(clf, std::span<const BasicGrid<T>>(xs));
  const std::size_t c = clf.num_classes();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (label_rank<T>(scores.data().subspan(i * c, c), static_cast<std::size_t>(data[i].class_id)) == 0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

struct FoldAccuracy {
  int fold = 0;
  double accuracy = 0.0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
};

struct KFoldResult {
  std::vector<FoldAccuracy> folds;
  double mean_accuracy() const {
    if (folds.empty()) return 0.0;
    double s = 0.0;
    for (const auto& f : folds) s += f.accuracy;
    return s / static_cast<double>(folds.size());
  }
};

/// For each predefined fold f of `real` (values >= 1): train a fresh
/// classifier on the other real folds plus every extra sample whose fold is
/// not f, then measure accuracy on real fold f. Extra samples with fold 0
/// (generated data) are always in training.
template <class T>
KFoldResult kfold_accuracy(std::span<const LabeledSample<T>> real, std::span<const LabeledSample<T>> extra,
                           const ClassifierConfig& arch, const ClassifierTrainConfig& train,
                           const std::function<void(const FoldAccuracy&)>& on_fold = {}) {
  std::set<int> folds;
  for (const auto& s : real) {
    if (s.fold < 1) throw std::invalid_argument("kfold_accuracy: real samples need folds >= 1");
    folds.insert(s.fold);
  }
  KFoldResult result;
  for (int f : folds) {
    std::vector<LabeledSample<T>> tr, te;
    for (const auto& s : real) (s.fold == f ? te : tr).push_back(s);
    for (const auto& s : extra)
      if (s.fold != f) tr.push_back(s);
    ClassifierTrainConfig tc = train;
    tc.seed = derive_seed(train.seed, static_cast<std::uint64_t>(f));
    ClassifierConfig ac = arch;
    ac.seed = derive_seed(arch.seed, static_cast<std::uint64_t>(f));
    const auto clf = train_discriminator<T>(std::span<const LabeledSample<T>>(tr), ac, tc);
    FoldAccuracy fa{f, accuracy<T>(clf, std::span<const LabeledSample<T>>(te)), tr.size(), te.size()};
    if (on_fold) on_fold(fa);
    result.folds.push_back(fa);
  }
  return result;
}

template <class T>
KFoldResult kfold_accuracy(const std::vector<LabeledSample<T>>& real, const std::vector<LabeledSample<T>>& extra,
                           const ClassifierConfig& arch, const ClassifierTrainConfig& train) {
  return kfold_accuracy<T>(std::span<const LabeledSample<T>>(real), std::span<const LabeledSample<T>>(extra), arch,
                           train);
}

// Classifier checkpoints: "DCLF", u32 version, u32 in_channels, width,
// num_classes, u64 seed (two u32), then the parameter block of the
// denoiser checkpoint format.
inline constexpr std::uint32_t kClassifierVersion = 1;

template <class T>
std::vector<std::uint8_t> encode_classifier(const ConvClassifier<T>& clf) {
  io::ByteWriter w;
  w.tag("DCLF");
  w.u32(kClassifierVersion);
  const auto& c = clf.config();
  w.u32(static_cast<std::uint32_t>(c.in_channels));
  w.u32(static_cast<std::uint32_t>(c.width));
  w.u32(static_cast<std::uint32_t>(c.num_classes));
  w.u32(static_cast<std::uint32_t>(c.seed & 0xffffffffu));
  w.u32(static_cast<std::uint32_t>(c.seed >> 32));
  detail::write_grids(w, clf.parameters());
  return w.bytes();
}

template <class T>
ConvClassifier<T> decode_classifier(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (r.tag("magic") != "DCLF") throw FormatError("not a classifier checkpoint (bad magic)", 0);
  const std::size_t vat = r.offset();
  if (r.u32("version") != kClassifierVersion) throw FormatError("unsupported classifier checkpoint version", vat);
  ClassifierConfig c;
  c.in_channels = r.u32("in_channels");
  c.width = r.u32("width");
  const std::size_t cat = r.offset();
  c.num_classes = r.u32("num_classes");
  const std::uint64_t lo = r.u32("seed"), hi = r.u32("seed");
  c.seed = lo | (hi << 32);
  if (c.in_channels == 0 || c.width == 0 || c.width > 4096 || c.num_classes < 2 || c.num_classes > 100000) {
    throw FormatError("implausible classifier configuration", cat);
  }
  ConvClassifier<T> clf(c);
  detail::read_grids_into(r, clf.parameters());
  if (r.remaining() != 0) throw FormatError("trailing bytes after classifier checkpoint", r.offset());
  return clf;
}

template <class T>
void save_classifier(const ConvClassifier<T>& clf, const std::filesystem::path& path) {
  io::write_file(path, encode_classifier(clf));
}

template <class T>
ConvClassifier<T> load_classifier(const std::filesystem::path& path) {
  return decode_classifier<T>(io::read_file(path));
}

}  // namespace diffaug
