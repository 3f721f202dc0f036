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

// The diffaug command line. Settings resolve, lowest precedence first, from
// built-in defaults, DIFFAUG_SEED (seed only), a `key = value` file given
// with --config, and flags. Every run writes the resolved settings to
// <out>/<subcommand>.cfg, which can be passed back through --config.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "diffaug/bench.hpp"
#include "diffaug/data/manifest.hpp"
#include "diffaug/data/sgrm.hpp"
#include "diffaug/data/wav.hpp"
#include "diffaug/denoisers/checkpoint.hpp"
#include "diffaug/denoisers/condnet.hpp"
#include "diffaug/diffusion.hpp"
#include "diffaug/dsp/mel.hpp"
#include "diffaug/dsp/policy.hpp"
#include "diffaug/error.hpp"
#include "diffaug/samplers.hpp"
#include "diffaug/selection.hpp"

namespace diffaug::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// `key = value` lines; '#' starts a comment; blank lines ignored.
inline std::vector<std::pair<std::string, std::string>> read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  std::vector<std::pair<std::string, std::string>> kv;
  int n = 0;
  for (std::string line; std::getline(in, line);) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(path.string() + ":" + std::to_string(n) + ": empty key");
    kv.emplace_back(std::move(key), std::move(value));
  }
  return kv;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class N>
std::vector<N> parse_numbers(const std::string& s, const char* what) {
  std::vector<N> out;
  for (const auto& item : split_list(s)) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      if constexpr (std::is_integral_v<N>) {
        if (v != std::floor(v) || v < 0) throw std::invalid_argument(item);
      }
      out.push_back(static_cast<N>(v));
    } catch (const std::exception&) {
      throw ConfigError(std::string(what) + ": '" + item + "' is not a valid number");
    }
  }
  if (out.empty()) throw ConfigError(std::string(what) + ": empty list");
  return out;
}

inline TimeSpacing parse_spacing(const std::string& s) {
  if (s == "uniform_t") return TimeSpacing::uniform_t;
  if (s == "uniform_lambda") return TimeSpacing::uniform_lambda;
  throw ConfigError("unknown time spacing '" + s + "' (uniform_t or uniform_lambda)");
}

/// Reads every manifest in a comma-separated list. Fold 0 (generated data)
/// is accepted only when `allow_generated`.
inline std::vector<std::pair<fs::path, io::ManifestRow>> read_manifests(const std::string& list, bool allow_generated) {
  std::vector<std::pair<fs::path, io::ManifestRow>> out;
  for (const auto& m : split_list(list)) {
    for (auto& r : io::read_manifest(m, io::kMaxFolds, allow_generated ? 0 : 1)) {
      out.emplace_back(io::resolve_path(m, r), std::move(r));
    }
  }
  return out;
}

inline std::vector<LabeledSample<float>> load_spectrograms(const std::string& list, bool allow_generated) {
  std::vector<LabeledSample<float>> out;
  for (const auto& [path, row] : read_manifests(list, allow_generated)) {
    auto s = io::read_sgrm(path);
    out.push_back({s.grid.reshaped({1, s.grid.dim(0), s.grid.dim(1)}), row.class_id, row.fold});
  }
  return out;
}

inline std::size_t class_count(std::size_t flag, const std::vector<LabeledSample<float>>& data) {
  int hi = -1;
  for (const auto& s : data) hi = std::max(hi, s.class_id);
  const auto needed = static_cast<std::size_t>(hi + 1);
  if (flag == 0) return needed;
  if (flag < needed) throw ConfigError("num-classes " + std::to_string(flag) + " but data has class " + std::to_string(hi));
  return flag;
}

inline std::uint8_t label_byte(int class_id) {
  if (class_id < 0 || class_id > 255) throw Error("class id " + std::to_string(class_id) + " does not fit the SGRM label byte");
  return static_cast<std::uint8_t>(class_id);
}

inline std::string numbered(const char* stem, std::size_t i, const char* ext) {
  std::ostringstream s;
  s << stem << std::setw(6) << std::setfill('0') << i << ext;
  return s.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

inline std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(9) << v;
  return s.str();
}

/// P5 graymap, 8-bit; row 0 of the grid (lowest band) at the bottom.
inline void write_pgm(const fs::path& path, const BasicGrid<float>& g, double lo, double hi) {
  const std::size_t rows = g.dim(g.rank() - 2), cols = g.dim(g.rank() - 1);
  std::string bytes = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
  for (std::size_t r = rows; r-- > 0;) {
    for (std::size_t q = 0; q < cols; ++q) {
      const double v = (static_cast<double>(g[r * cols + q]) - lo) / (hi - lo);
      bytes += static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))));
    }
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << bytes;
}

struct FeatureFlags {
  double sample_rate = dsp::kDefaultSampleRate;
  std::size_t n_fft = 1024, hop = 256, n_mels = 128, frames = 128;
  double fmin = 20.0, floor = 1e-3;

  void add(CLI::App* sub) {
    sub->add_option("--sample-rate", sample_rate, "Target sample rate (Hz)")->check(CLI::PositiveNumber);
    sub->add_option("--n-fft", n_fft, "STFT window length");
    sub->add_option("--hop", hop, "STFT hop");
    sub->add_option("--n-mels", n_mels, "Mel bands (rows)");
    sub->add_option("--frames", frames, "Time frames (columns)");
    sub->add_option("--fmin", fmin, "Lowest mel frequency (Hz)");
    sub->add_option("--floor", floor, "Log compression floor")->check(CLI::PositiveNumber);
  }
  dsp::FeatureConfig config() const {
    dsp::FeatureConfig c;
    c.stft = {n_fft, hop};
    c.stft.validate();
    c.n_mels = n_mels;
    c.frames = frames;
    c.fmin = fmin;
    c.floor = floor;
    c.sample_rate = sample_rate;
    return c;
  }
};

struct ClassifierFlags {
  int epochs = 200, batch = 32;
  double lr = 1e-4, weight_decay = 0.05, smoothing = 0.1;
  std::size_t width = 8, num_classes = 0;

  void add(CLI::App* sub) {
    sub->add_option("--epochs", epochs, "Training epochs")->check(CLI::PositiveNumber);
    sub->add_option("--batch", batch, "Mini-batch size")->check(CLI::PositiveNumber);
    sub->add_option("--lr", lr, "AdamW learning rate")->check(CLI::PositiveNumber);
    sub->add_option("--weight-decay", weight_decay, "AdamW weight decay");
    sub->add_option("--smoothing", smoothing, "Label smoothing");
    sub->add_option("--width", width, "Channels of the first conv block")->check(CLI::PositiveNumber);
    sub->add_option("--num-classes", num_classes, "Class count (0 means from the data)");
  }
  ClassifierTrainConfig train(std::uint64_t seed) const {
    ClassifierTrainConfig c;
    c.epochs = epochs;
    c.batch_size = batch;
    c.label_smoothing = smoothing;
    c.optimizer.lr = lr;
    c.optimizer.weight_decay = weight_decay;
    c.seed = seed;
    c.validate();
    return c;
  }
  ClassifierConfig arch(std::size_t classes, std::uint64_t seed) const {
    ClassifierConfig a;
    a.width = width;
    a.num_classes = classes;
    a.seed = seed;
    return a;
  }
};

}  // namespace detail

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

/// Runs one command line; returns the process exit code.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace detail;
  CLI::App app{"Diffusion-based data augmentation toolkit", "diffaug"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  std::string out_dir = "out", config_path;
  std::uint64_t seed = 0;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--seed", seed, "Random seed");
    sub->add_option("--config", config_path, "key = value settings file");
  };

  // featurize
  std::string manifest;
  FeatureFlags feat;
  auto* featurize = app.add_subcommand("featurize", "WAV manifest -> log-mel SGRM files");
  featurize->add_option("--manifest", manifest, "Manifest of WAV files")->required();
  feat.add(featurize);
  common(featurize);

  // augment
  std::string ambience;
  double ambience_seconds = 60.0;
  int copies = 1;
  bool write_audio = false;
  dsp::AugmentPolicy policy;
  auto* augment = app.add_subcommand("augment", "Traditional augmentation policy over WAV files");
  augment->add_option("--manifest", manifest, "Manifest of WAV files")->required();
  augment->add_option("--ambience", ambience, "Comma-separated ambience WAVs (default: three synthesized)");
  augment->add_option("--ambience-seconds", ambience_seconds, "Length of synthesized ambience")->check(CLI::PositiveNumber);
  augment->add_option("--copies", copies, "Augmented copies per input")->check(CLI::PositiveNumber);
  augment->add_option("--write-wav", write_audio, "Also write augmented audio (true/false)");
  augment->add_option("--p-noise", policy.p_noise, "Probability of ambience mixing");
  augment->add_option("--p-pitch-up", policy.p_pitch_up, "Probability of up pitch shift");
  augment->add_option("--p-pitch-down", policy.p_pitch_down, "Probability of down pitch shift");
  augment->add_option("--p-stretch", policy.p_stretch, "Probability of time stretch");
  augment->add_option("--noise-weight", policy.noise_weight, "Ambience weight");
  augment->add_option("--pitch-factor", policy.pitch_factor, "Pitch shift frequency ratio");
  augment->add_option("--min-rate", policy.min_rate, "Minimum stretch rate");
  augment->add_option("--max-rate", policy.max_rate, "Maximum stretch rate");
  feat.add(augment);
  common(augment);

  // train-dpm
  std::string data;
  TrainConfig dpm_train;
  CondNetConfig net;
  std::string multipliers = "1,2,4,8";
  std::size_t dpm_classes = 0;
  int timesteps = 1000;
  auto* train_dpm = app.add_subcommand("train-dpm", "Train the conditional denoiser");
  train_dpm->add_option("--data", data, "Comma-separated SGRM manifests")->required();
  train_dpm->add_option("--epochs", dpm_train.epochs, "Training epochs")->check(CLI::PositiveNumber);
  train_dpm->add_option("--batch", dpm_train.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  train_dpm->add_option("--lr", dpm_train.optimizer.lr, "AdamW learning rate")->check(CLI::PositiveNumber);
  train_dpm->add_option("--weight-decay", dpm_train.optimizer.weight_decay, "AdamW weight decay");
  train_dpm->add_option("--label-dropout", dpm_train.label_dropout, "Probability of training with the null label");
  train_dpm->add_option("--base-width", net.base_width, "Channels at the first level")->check(CLI::PositiveNumber);
  train_dpm->add_option("--multipliers", multipliers, "Channel multipliers per level");
  train_dpm->add_option("--time-dim", net.time_dim, "Sinusoidal time embedding size");
  train_dpm->add_option("--timesteps", timesteps, "Diffusion steps T")->check(CLI::PositiveNumber);
  train_dpm->add_option("--num-classes", dpm_classes, "Class count (0 means from the data)");
  common(train_dpm);

  // sample
  std::string model_path, method = "dpm2m", threshold = "static", spacing = "uniform_t", classes;
  int steps = 20, per_class = 10;
  double guidance = 0.0;
  std::size_t batch = 64;
  auto* sample_cmd = app.add_subcommand("sample", "Generate conditional spectrograms");
  sample_cmd->add_option("--model", model_path, "Denoiser checkpoint")->required();
  sample_cmd->add_option("--method", method, "ancestral, first_order, dpm2s or dpm2m");
  sample_cmd->add_option("--steps", steps, "Solver steps")->check(CLI::PositiveNumber);
  sample_cmd->add_option("--guidance-w", guidance, "Guidance scale w");
  sample_cmd->add_option("--threshold", threshold, "none, static[:bound] or dynamic[:percentile]");
  sample_cmd->add_option("--spacing", spacing, "uniform_t or uniform_lambda");
  sample_cmd->add_option("--per-class", per_class, "Samples per class")->check(CLI::PositiveNumber);
  sample_cmd->add_option("--classes", classes, "Comma-separated class ids (default: all)");
  sample_cmd->add_option("--batch", batch, "Trajectories integrated together")->check(CLI::PositiveNumber);
  common(sample_cmd);

  // filter
  std::string samples, classifier;
  std::size_t k = 1;
  auto* filter = app.add_subcommand("filter", "Top-k selection of generated samples");
  filter->add_option("--samples", samples, "Manifest of generated samples")->required();
  filter->add_option("--classifier", classifier, "Classifier checkpoint")->required();
  filter->add_option("--k", k, "Accept when the label is in the top k")->check(CLI::PositiveNumber);
  common(filter);

  // train-clf
  std::string traditional, train_on = "augmented";
  ClassifierFlags clf_flags;
  auto* train_clf = app.add_subcommand("train-clf", "Train the selection discriminator");
  train_clf->add_option("--data", data, "Real SGRM manifests")->required();
  train_clf->add_option("--traditional", traditional, "Traditionally augmented SGRM manifests");
  train_clf->add_option("--train-on", train_on, "augmented (real + traditional) or entire (real only)")
      ->check(CLI::IsMember({"augmented", "entire"}));
  clf_flags.add(train_clf);
  common(train_clf);

  // evaluate
  std::string synthetic;
  int folds = 10;
  auto* evaluate = app.add_subcommand("evaluate", "Fold-wise accuracy of classifiers trained on each arm");
  evaluate->add_option("--real", data, "Real SGRM manifests")->required();
  evaluate->add_option("--traditional", traditional, "Traditionally augmented manifests");
  evaluate->add_option("--synthetic", synthetic, "Generated (fold 0) manifests");
  evaluate->add_option("--folds", folds, "Number of predefined folds")->check(CLI::Range(1, io::kMaxFolds));
  clf_flags.add(evaluate);
  common(evaluate);

  // bench-solver
  std::string methods = "first_order,dpm2s,dpm2m", step_list = "5,10,15,20,30,60,100";
  SolverBenchConfig bench;
  auto* bench_cmd = app.add_subcommand("bench-solver", "W1 versus steps on the Gaussian oracle");
  bench_cmd->add_option("--methods", methods, "Comma-separated solver methods");
  bench_cmd->add_option("--steps", step_list, "Comma-separated step counts");
  bench_cmd->add_option("--samples", bench.samples, "Samples per run")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--mu", bench.mu, "Data mean");
  bench_cmd->add_option("--sigma0", bench.sigma0, "Data standard deviation")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--spacing", spacing, "uniform_t or uniform_lambda");
  bench_cmd->add_option("--timesteps", timesteps, "Diffusion steps T")->check(CLI::PositiveNumber);
  common(bench_cmd);

  // export-pgm
  std::string inputs;
  double lo = -1.0, hi = 1.0;
  auto* export_pgm = app.add_subcommand("export-pgm", "SGRM files -> portable graymaps");
  export_pgm->add_option("--input", inputs, "Comma-separated SGRM files")->required();
  export_pgm->add_option("--lo", lo, "Value mapped to black");
  export_pgm->add_option("--hi", hi, "Value mapped to white");
  common(export_pgm);

  // Assemble the effective argument list: env seed, then config entries,
  // then the real flags, so that later sources win.
  std::vector<std::string> args;  // reversed, as CLI11 expects
  for (int i = argc - 1; i >= 1; --i) args.emplace_back(argv[i]);
  try {
    if (argc >= 2) {
      const std::string name = argv[1];
      if (name.rfind('-', 0) != 0 && app.get_subcommand_no_throw(name) == nullptr) {
        err << "diffaug: unknown subcommand '" << name << "'\n" << app.help();
        return kExitUsage;
      }
      if (CLI::App* sub = app.get_subcommand_no_throw(name)) {
        std::vector<std::string> front;
        if (const char* env = std::getenv("DIFFAUG_SEED"); env && *env) {
          front = {"--seed", env};
        }
        std::string cfg;
        for (int i = 2; i < argc; ++i) {
          const std::string a = argv[i];
          if (a == "--config" && i + 1 < argc) cfg = argv[i + 1];
          if (a.rfind("--config=", 0) == 0) cfg = a.substr(9);
        }
        if (!cfg.empty()) {
          for (const auto& [key, value] : read_config_file(cfg)) {
            if (key == "config" || key == "help") throw ConfigError("config file may not set '" + key + "'");
            if (sub->get_option_no_throw("--" + key) == nullptr) {
              throw ConfigError("unknown key '" + key + "' for " + name + " in " + cfg);
            }
            front.push_back("--" + key);
            front.push_back(value);
          }
        }
        args.clear();
        for (int i = argc - 1; i >= 2; --i) args.emplace_back(argv[i]);
        for (auto it = front.rbegin(); it != front.rend(); ++it) args.push_back(*it);
        args.push_back(name);
      }
    }
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "diffaug: " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "diffaug: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "diffaug: " << e.what() << "\n";
    return kExitFailure;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  const fs::path outp(out_dir);

  try {
    // resolved settings snapshot
    {
      std::string snap = "# resolved settings for diffaug " + name + "\n";
      for (const CLI::Option* o : sub->get_options()) {
        const std::string ln = o->get_lnames().empty() ? "" : o->get_lnames().front();
        if (ln.empty() || ln == "help" || ln == "config") continue;
        const std::string v = o->count() ? o->results().back() : o->get_default_str();
        if (v.empty() && !o->count()) continue;
        snap += ln + " = " + v + "\n";
      }
      write_text(outp / (name + ".cfg"), snap);
    }

    if (name == "featurize") {
      const auto fc = feat.config();
      std::vector<io::ManifestRow> rows;
      std::size_t i = 0;
      for (const auto& [path, row] : read_manifests(manifest, false)) {
        const auto g = dsp::featurize(io::read_wav(path, fc.sample_rate), fc);
        const std::string rel = "spectrograms/" + numbered("spec_", i++, ".sgrm");
        io::write_sgrm(outp / rel, g, label_byte(row.class_id));
        rows.push_back({rel, row.fold, row.class_id, row.class_name});
      }
      io::write_manifest(outp / "manifest.csv", rows);
      out << "featurize: wrote " << rows.size() << " spectrograms to " << (outp / "spectrograms").string() << "\n";

    } else if (name == "augment") {
      policy.validate();
      const auto fc = feat.config();
      std::vector<dsp::Waveform> amb;
      for (const auto& p : split_list(ambience)) amb.push_back(io::read_wav(p, fc.sample_rate));
      if (amb.empty()) {
        for (auto kind : {dsp::AmbienceKind::traffic, dsp::AmbienceKind::hum, dsp::AmbienceKind::crowd}) {
          amb.push_back(dsp::synth_ambience(kind, ambience_seconds, seed, fc.sample_rate));
        }
      }
      std::vector<io::ManifestRow> rows;
      std::string log = "index,source,transforms,stretch_rate\n";
      std::size_t i = 0;
      const auto inputs_rows = read_manifests(manifest, false);
      for (std::size_t src = 0; src < inputs_rows.size(); ++src) {
        const auto& [path, row] = inputs_rows[src];
        const auto x = io::read_wav(path, fc.sample_rate);
        // clips shorter than each ambience need a tiled ambience
        std::vector<dsp::Waveform> fit_amb = amb;
        for (auto& a : fit_amb) {
          if (a.size() < x.size() && !a.samples.empty()) {
            const auto base = a.samples;
            while (a.size() < x.size()) a.samples.insert(a.samples.end(), base.begin(), base.end());
          }
        }
        for (int c = 0; c < copies; ++c, ++i) {
          Rng rng(seed, i);
          const auto r = dsp::apply_policy(x, policy, rng, fit_amb, fc.stft);
          const std::string rel = "augmented/" + numbered("aug_", i, ".sgrm");
          io::write_sgrm(outp / rel, dsp::featurize(r.audio, fc), label_byte(row.class_id));
          if (write_audio) io::write_wav(outp / "audio" / numbered("aug_", i, ".wav"), r.audio);
          rows.push_back({rel, row.fold, row.class_id, row.class_name});
          std::string names;
          for (auto t : r.applied) names += std::string(names.empty() ? "" : "+") + dsp::transform_name(t);
          log += std::to_string(i) + "," + std::to_string(src) + "," + names + "," + fmt(r.stretch_rate) + "\n";
        }
      }
      io::write_manifest(outp / "manifest.csv", rows);
      write_text(outp / "augment_log.csv", log);
      out << "augment: wrote " << rows.size() << " augmented spectrograms\n";

    } else if (name == "train-dpm") {
      auto ds = load_spectrograms(data, true);
      if (ds.empty()) throw Error("train-dpm: no training data");
      dpm_train.seed = seed;
      net.multipliers.clear();
      for (auto m : parse_numbers<std::size_t>(multipliers, "multipliers")) net.multipliers.push_back(m);
      net.in_channels = 1;
      net.height = ds[0].spectrogram.dim(1);
      net.width = ds[0].spectrogram.dim(2);
      net.num_classes = class_count(dpm_classes, ds);
      net.num_timesteps = timesteps;
      net.seed = derive_seed(seed, 1);
      CondNetLite<float> model(net);
      const auto schedule = NoiseSchedule::linear(timesteps);
      const int every = std::max(1, dpm_train.epochs / 10);
      const auto r = fit(model, ds, dpm_train, schedule, [&](int e, double l) {
        if (e % every == 0 || e == dpm_train.epochs) out << "train-dpm: epoch " << e << " loss " << fmt(l) << "\n";
      });
      save_checkpoint(model, outp / "model.denw");
      write_loss_trace(outp / "loss.csv", r.loss_trace);
      out << "train-dpm: saved " << (outp / "model.denw").string() << "\n";

    } else if (name == "sample") {
      const auto model = load_checkpoint<float>(model_path);
      const auto& mc = model.config();
      const auto schedule = NoiseSchedule::linear(mc.num_timesteps);
      SolverConfig sc;
      try {
        sc.method = parse_method(method);
        sc.thresholding = parse_thresholding(threshold);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      sc.num_steps = steps;
      sc.guidance_scale = guidance;
      sc.spacing = parse_spacing(spacing);
      sc.seed = seed;
      sc.batch = batch;
      try {
        sc.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      std::vector<int> ids;
      if (classes.empty()) {
        for (std::size_t c = 0; c < mc.num_classes; ++c) ids.push_back(static_cast<int>(c));
      } else {
        for (auto c : parse_numbers<std::size_t>(classes, "classes")) {
          if (c >= mc.num_classes) throw ConfigError("class " + std::to_string(c) + " not known to the model");
          ids.push_back(static_cast<int>(c));
        }
      }
      std::vector<ClassLabel> labels;
      for (int c : ids)
        for (int j = 0; j < per_class; ++j) labels.push_back(c);
      const auto xs = sample<float>(model, schedule, sc, Shape{mc.in_channels, mc.height, mc.width},
                                    std::span<const ClassLabel>(labels));
      std::vector<io::ManifestRow> rows;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const std::string rel = "samples/" + numbered("gen_", i, ".sgrm");
        io::write_sgrm(outp / rel, xs[i], label_byte(*labels[i]));
        rows.push_back({rel, 0, *labels[i], "class" + std::to_string(*labels[i])});
      }
      io::write_manifest(outp / "manifest.csv", rows);
      out << "sample: wrote " << xs.size() << " samples (" << method_name(sc.method) << ", " << steps << " steps)\n";

    } else if (name == "filter") {
      const auto clf = load_classifier<float>(classifier);
      const auto entries = read_manifests(samples, true);
      std::vector<BasicGrid<float>> xs;
      std::vector<int> ls;
      for (const auto& [path, row] : entries) {
        const auto s = io::read_sgrm(path);
        xs.push_back(s.grid.reshaped({1, s.grid.dim(0), s.grid.dim(1)}));
        ls.push_back(row.class_id);
      }
      if (k > clf.num_classes()) throw ConfigError("--k " + std::to_string(k) + " exceeds " + std::to_string(clf.num_classes()) + " classes");
      const auto r = topk_filter(xs, ls, clf, k);
      std::vector<io::ManifestRow> rows;
      for (std::size_t j = 0; j < r.indices.size(); ++j) {
        const auto& row = entries[r.indices[j]].second;
        const std::string rel = "accepted/" + numbered("acc_", j, ".sgrm");
        io::write_sgrm(outp / rel, r.samples[j], label_byte(row.class_id));
        rows.push_back({rel, 0, row.class_id, row.class_name});
      }
      io::write_manifest(outp / "manifest.csv", rows);
      write_selection_report(outp / "selection.csv", r.report);
      out << "filter: accepted " << r.report.accepted << " of " << r.report.total << " (k = " << k << ")\n";

    } else if (name == "train-clf") {
      auto ds = load_spectrograms(data, false);
      if (train_on == "augmented") {
        if (traditional.empty()) {
          throw ConfigError("--train-on augmented needs --traditional manifests (or use --train-on entire)");
        }
        auto extra = load_spectrograms(traditional, false);
        ds.insert(ds.end(), extra.begin(), extra.end());
      }
      if (ds.empty()) throw Error("train-clf: no training data");
      std::vector<double> trace;
      const auto clf = train_discriminator<float>(ds, clf_flags.arch(class_count(clf_flags.num_classes, ds), derive_seed(seed, 2)),
                                                  clf_flags.train(seed), &trace);
      save_classifier(clf, outp / "classifier.dclf");
      write_loss_trace(outp / "loss.csv", trace);
      out << "train-clf: trained on " << ds.size() << " samples, training accuracy "
          << fmt(accuracy<float>(clf, std::span<const LabeledSample<float>>(ds))) << "\n";

    } else if (name == "evaluate") {
      const auto real = load_spectrograms(data, false);
      if (real.empty()) throw Error("evaluate: no real data");
      for (const auto& s : real) {
        if (s.fold > folds) throw ConfigError("real data has fold " + std::to_string(s.fold) + " > --folds " + std::to_string(folds));
      }
      std::vector<std::pair<std::string, std::vector<LabeledSample<float>>>> arms{{"real", {}}};
      if (!traditional.empty()) arms.emplace_back("real+traditional", load_spectrograms(traditional, false));
      if (!synthetic.empty()) arms.emplace_back("real+synthetic", load_spectrograms(synthetic, true));
      std::size_t classes_n = clf_flags.num_classes;
      for (const auto& [arm, extra] : arms) {
        auto all = real;
        all.insert(all.end(), extra.begin(), extra.end());
        classes_n = std::max(classes_n, class_count(0, all));
      }
      std::string csv = "arm,fold,accuracy,train_size,test_size\n";
      for (const auto& [arm, extra] : arms) {
        const auto r = kfold_accuracy<float>(std::span<const LabeledSample<float>>(real),
                                             std::span<const LabeledSample<float>>(extra),
                                             clf_flags.arch(classes_n, derive_seed(seed, 2)), clf_flags.train(seed));
        for (const auto& f : r.folds) {
          csv += arm + "," + std::to_string(f.fold) + "," + fmt(f.accuracy) + "," + std::to_string(f.train_size) + "," +
                 std::to_string(f.test_size) + "\n";
        }
        csv += arm + ",mean," + fmt(r.mean_accuracy()) + ",,\n";
        out << "evaluate: " << std::left << std::setw(18) << arm << " mean accuracy " << fmt(r.mean_accuracy()) << "\n";
      }
      write_text(outp / "evaluate.csv", csv);

    } else if (name == "bench-solver") {
      bench.spacing = parse_spacing(spacing);
      bench.seed = seed;
      const auto schedule = NoiseSchedule::linear(timesteps);
      std::vector<SolverMethod> ms;
      for (const auto& m : split_list(methods)) {
        try {
          ms.push_back(parse_method(m));
        } catch (const std::invalid_argument& e) {
          throw ConfigError(e.what());
        }
      }
      std::string csv = "method,steps,w1,mean,sd\n";
      for (auto m : ms) {
        for (int n : parse_numbers<int>(step_list, "steps")) {
          if (n < 1) throw ConfigError("steps must be >= 1");
          const auto row = bench_solver_once(schedule, bench, m, n);
          csv += std::string(method_name(m)) + "," + std::to_string(n) + "," + fmt(row.w1) + "," + fmt(row.mean) + "," +
                 fmt(row.sd) + "\n";
          out << "bench-solver: " << method_name(m) << " " << n << " steps W1 " << fmt(row.w1) << "\n";
        }
      }
      write_text(outp / "bench_solver.csv", csv);

    } else if (name == "export-pgm") {
      if (!(hi > lo)) throw ConfigError("--hi must exceed --lo");
      for (const auto& p : split_list(inputs)) {
        const auto s = io::read_sgrm(p);
        const auto dst = outp / (fs::path(p).stem().string() + ".pgm");
        write_pgm(dst, s.grid, lo, hi);
        out << "export-pgm: " << dst.string() << "\n";
      }
    }
  } catch (const ConfigError& e) {
    err << "diffaug " << name << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "diffaug " << name << ": " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace diffaug::cli
