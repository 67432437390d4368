// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// stnet-cli: data generation and import, training, evaluation, cost reports,
// spectral-efficiency curves and gradient checks.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stnet/csi.hpp"
#include "stnet/dataset.hpp"
#include "stnet/errors.hpp"
#include "stnet/flops.hpp"
#include "stnet/grad_cases.hpp"
#include "stnet/report.hpp"
#include "stnet/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stnet;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::uint64_t seed = 1;
  bool seed_set = false;
  std::string config;
  std::string out = ".";

  std::string gamma;
  std::optional<std::size_t> codeword;
  std::string dataset;
  std::string validation;
  std::string checkpoint;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch;
  std::optional<double> lr;
  std::string snr_list = "-10,-5,0,5,10,15,20,25,30";
  std::size_t users = 4;
  std::optional<std::size_t> samples;
  std::string source;
  std::string scenario = "indoor";
  std::string split = "train";
  bool ops_only = false;
};

json load_config(const Options& o) {
  if (o.config.empty()) return json::object();
  std::ifstream in(o.config);
  if (!in) throw DataError("cannot open config " + o.config);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("config " + o.config + " is not valid JSON: " + e.what());
  }
}

/// Prints the resolved configuration as one JSON line on stderr.
void log_config(const std::string& command, const json& resolved) {
  std::cerr << "stnet-cli " << command << " config " << resolved.dump() << "\n";
}

fs::path out_file(const Options& o, const std::string& name) {
  fs::create_directories(o.out);
  return fs::path(o.out) / name;
}

ModelConfig resolve_model(const Options& o, const json& cfg) {
  ModelConfig m;
  if (cfg.contains("model")) m = cfg.at("model").get<ModelConfig>();
  if (o.seed_set) m.seed = o.seed;
  std::optional<std::size_t> from_gamma;
  if (!o.gamma.empty()) {
    ModelConfig probe = m;
    probe.set_gamma(Ratio::parse(o.gamma));
    from_gamma = probe.codeword;
  }
  if (from_gamma && o.codeword && *from_gamma != *o.codeword) {
    throw UsageError("--gamma " + o.gamma + " gives M = " + std::to_string(*from_gamma) + " but --codeword is " +
                     std::to_string(*o.codeword));
  }
  if (from_gamma) m.codeword = *from_gamma;
  if (!from_gamma && o.codeword) m.codeword = *o.codeword;
  m.validate();
  return m;
}

TrainConfig resolve_train(const Options& o, const json& cfg) {
  TrainConfig t;
  if (cfg.contains("train")) t = cfg.at("train").get<TrainConfig>();
  if (o.seed_set) t.seed = o.seed;
  if (o.steps) {
    t.max_steps = *o.steps;
    // A step budget alone should not be cut short by the default epoch count.
    if (!o.epochs) t.epochs = *o.steps;
  }
  if (o.epochs) t.epochs = *o.epochs;
  if (o.batch) t.batch_size = *o.batch;
  if (o.lr) t.lr = *o.lr;
  t.validate();
  return t;
}

data::SynthConfig resolve_synth(const Options& o, const json& cfg) {
  data::SynthConfig s;
  if (cfg.contains("synth")) {
    const auto& j = cfg.at("synth");
    s.samples = j.value("samples", s.samples);
    s.paths = j.value("paths", s.paths);
    s.n_sub = j.value("n_sub", s.n_sub);
    s.n_c = j.value("n_c", s.n_c);
    s.n_t = j.value("n_t", s.n_t);
    s.max_delay = j.value("max_delay", s.max_delay);
    s.delay_decay = j.value("delay_decay", s.delay_decay);
    s.max_angle_deg = j.value("max_angle_deg", s.max_angle_deg);
    s.seed = j.value("seed", s.seed);
  }
  if (o.seed_set) s.seed = o.seed;
  if (o.samples) s.samples = *o.samples;
  s.validate();
  return s;
}

json synth_json(const data::SynthConfig& s) {
  return {{"samples", s.samples},   {"paths", s.paths},
          {"n_sub", s.n_sub},       {"n_c", s.n_c},
          {"n_t", s.n_t},           {"max_delay", s.max_delay},
          {"delay_decay", s.delay_decay}, {"max_angle_deg", s.max_angle_deg},
          {"seed", s.seed}};
}

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw UsageError(flag + " is required");
}

std::vector<double> parse_snr_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--snr-list: '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw UsageError("--snr-list is empty");
  return out;
}

// ---- subcommands ------------------------------------------------------------

int run_synth(const Options& o) {
  const auto cfg = load_config(o);
  const auto s = resolve_synth(o, cfg);
  log_config("synth", {{"synth", synth_json(s)}, {"out", o.out}});
  const auto result = data::synth_channels(s);
  const auto path = out_file(o, "synth.csib");
  data::write_container(result.dataset, path);
  std::printf("wrote %zu samples to %s\n", result.dataset.size(), path.string().c_str());
  return 0;
}

int run_import(const Options& o) {
  require(o.source, "--source");
  const auto cfg = load_config(o);
  data::Dims dims{32, 32};
  if (cfg.contains("model")) {
    const auto m = cfg.at("model").get<ModelConfig>();
    dims = {m.n_c, m.n_t};
  }
  log_config("import", {{"source", o.source}, {"scenario", o.scenario}, {"split", o.split},
                        {"n_c", dims.n_c}, {"n_t", dims.n_t}, {"out", o.out}});
  const auto ds = data::import_cost2100(o.source, o.split, o.scenario, dims);
  const auto path = out_file(o, o.scenario + "_" + o.split + ".csib");
  data::write_container(ds, path);
  std::printf("wrote %zu samples to %s\n", ds.size(), path.string().c_str());
  return 0;
}

int run_train(const Options& o) {
  require(o.dataset, "--dataset");
  const auto cfg = load_config(o);
  const auto model = resolve_model(o, cfg);
  auto train = resolve_train(o, cfg);
  train.checkpoint_dir = fs::path(o.out) / "checkpoints";
  log_config("train", {{"model", model}, {"train", train}, {"dataset", o.dataset}, {"validation", o.validation}});
  const auto ds = data::read_container(o.dataset, data::Dims{model.n_c, model.n_t});
  std::optional<data::Dataset> val;
  if (!o.validation.empty()) val = data::read_container(o.validation, data::Dims{model.n_c, model.n_t});
  Trainer trainer(model, train);
  const auto& history = trainer.run(ds, val ? &*val : nullptr);
  write_history_csv(history, out_file(o, "history.csv"));
  const auto report = evaluate(trainer.model(), ds);
  std::printf("trained %llu steps, train NMSE %.3f dB, checkpoint %s\n",
              static_cast<unsigned long long>(trainer.steps()), report.nmse.db,
              (train.checkpoint_dir / "final.ckpt").string().c_str());
  return 0;
}

StnetModel<float> load_model(const std::string& checkpoint) {
  const auto ckpt = load_checkpoint(checkpoint);
  StnetModel<float> model(ckpt.model);
  load_parameters(model, ckpt);
  return model;
}

int run_eval(const Options& o) {
  require(o.checkpoint, "--checkpoint");
  require(o.dataset, "--dataset");
  const auto model = load_model(o.checkpoint);
  log_config("eval", {{"model", model.config()}, {"checkpoint", o.checkpoint}, {"dataset", o.dataset}});
  const auto ds = data::read_container(o.dataset, data::Dims{model.config().n_c, model.config().n_t});
  const auto report = evaluate(model, ds);
  write_eval_csv({eval_row(report)}, out_file(o, "eval.csv"));
  std::printf("%s gamma %s: NMSE %.3f dB over %zu samples\n", report.scenario.c_str(), report.gamma.str().c_str(),
              report.nmse.db, report.nmse.samples);
  return 0;
}

int run_flops(const Options& o) {
  const auto cfg = load_config(o);
  const auto model = resolve_model(o, cfg);
  log_config("flops", {{"model", model}});
  const auto r = count_flops(model);
  write_flops_csv(r, out_file(o, "flops.csv"));
  std::printf("gamma %s (M = %zu)\n", model.gamma().str().c_str(), model.codeword);
  std::printf("total   %.3fM MACs  %.3fM FLOPs\n", r.total_macs() / 1e6, r.total_flops() / 1e6);
  std::printf("encoder %.3fM MACs  %.3fM FLOPs  share %.2f%%\n", r.encoder_macs() / 1e6,
              r.flops_under("encoder/") / 1e6, 100 * r.encoder_share());
  std::printf("decoder %.3fM MACs  %.3fM FLOPs\n", r.decoder_macs() / 1e6, r.flops_under("decoder/") / 1e6);
  return 0;
}

int run_se_curve(const Options& o) {
  require(o.checkpoint, "--checkpoint");
  require(o.dataset, "--dataset");
  const auto snr = parse_snr_list(o.snr_list);
  const auto model = load_model(o.checkpoint);
  log_config("se-curve", {{"model", model.config()}, {"checkpoint", o.checkpoint}, {"dataset", o.dataset},
                          {"snr_db", snr}, {"users", o.users}, {"seed", o.seed}});
  const auto ds = data::read_container(o.dataset, data::Dims{model.config().n_c, model.config().n_t});
  const auto scenario = precoding_scenario(model, ds, o.users, o.seed);
  const auto estimated = csi::zf_spectral_efficiency(scenario, snr);
  const auto perfect = csi::zf_spectral_efficiency({scenario.true_channels, scenario.true_channels}, snr);
  const std::string gamma = model.config().gamma().str();
  auto rows = se_rows(estimated.curve, "stnet", gamma);
  for (const auto& r : se_rows(perfect.curve, "perfect", gamma)) rows.push_back(r);
  write_se_csv(rows, out_file(o, "se.csv"));
  std::vector<Series> series(2);
  series[0].label = "STNet gamma " + gamma;
  series[1].label = "perfect CSI";
  for (std::size_t i = 0; i < snr.size(); ++i) {
    series[0].x.push_back(snr[i]);
    series[0].y.push_back(estimated.curve[i].se);
    series[1].x.push_back(snr[i]);
    series[1].y.push_back(perfect.curve[i].se);
  }
  write_svg_plot(series, "ZF spectral efficiency", "SNR (dB)", "bits/s/Hz", out_file(o, "se.svg"));
  if (estimated.pinv_fallback) std::printf("note: some estimates were rank deficient; pseudo-inverse used\n");
  for (std::size_t i = 0; i < snr.size(); ++i) {
    std::printf("%6.1f dB  %8.4f  (perfect %8.4f)\n", snr[i], estimated.curve[i].se, perfect.curve[i].se);
  }
  return 0;
}

int run_gradcheck(const Options& o) {
  log_config("gradcheck", {{"ops_only", o.ops_only}, {"eps", 1e-6}});
  bool ok = true;
  auto line = [&](const std::string& name, const char* precision, double err, double tol) {
    ok = ok && err < tol;
    std::printf("%-24s %-8s %.3e %s\n", name.c_str(), precision, err, err < tol ? "ok" : "FAIL");
  };
  auto wide = cases::op_cases<double>();
  auto narrow = cases::op_cases<float>();
  for (std::size_t i = 0; i < wide.size(); ++i) {
    line(wide[i].name, "high", check_gradients<double>(wide[i].f, wide[i].leaves, 1e-6).max_rel_error, 1e-5);
    line(narrow[i].name, "working",
         check_gradients_mixed(narrow[i].f, narrow[i].leaves, wide[i].f, wide[i].leaves, 1e-6).max_rel_error, 1e-3);
  }
  if (!o.ops_only) {
    auto e64 = cases::end_to_end_case<double>();
    auto e80 = cases::end_to_end_case<long double>();
    auto e32 = cases::end_to_end_case<float>();
    const RefinedReference ref{e64.f, e64.leaves, e80.f, e80.leaves};
    line("tiny STNet", "high", check_gradients_refined<double>(e64.f, e64.leaves, ref, 1e-6, 1e-6).max_rel_error,
         1e-5);
    line("tiny STNet", "working",
         check_gradients_refined<float>(e32.f, e32.leaves, ref, 1e-6, 1e-4).max_rel_error, 1e-3);
  }
  if (!ok) {
    std::fprintf(stderr, "stnet-cli: gradient check failed\n");
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"STNet CSI feedback: data, training, evaluation and reports", "stnet-cli"};
  // --help lists every subcommand's flags, not just the global ones.
  app.set_help_flag();
  app.set_help_all_flag("-h,--help", "Print this help message with every subcommand's flags and exit");
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--seed", o.seed, "Seed for data, initialization and shuffling")
      ->each([&](const std::string&) { o.seed_set = true; });
  app.add_option("--config", o.config, "JSON file with model/train/synth sections; flags override it");
  app.add_option("--out", o.out, "Output directory (default .)");

  auto* synth = app.add_subcommand("synth", "Generate synthetic sparse-multipath channels");
  synth->add_option("--samples", o.samples, "Number of samples (default 1000)");

  auto* convert = app.add_subcommand("import", "Convert COST2100 .npy/.csv exports to the container");
  convert->add_option("--source", o.source, "Input .npy or .csv file")->required();
  convert->add_option("--scenario", o.scenario, "indoor or outdoor")->check(CLI::IsMember({"indoor", "outdoor"}));
  convert->add_option("--split", o.split, "Split label stored with the data (default train)");

  auto* train = app.add_subcommand("train", "Train a model; writes checkpoints and history.csv");
  auto* eval = app.add_subcommand("eval", "NMSE of a checkpoint on a dataset; writes eval.csv");
  auto* flops = app.add_subcommand("flops", "Per-sample MAC and FLOP counts; writes flops.csv");
  auto* se = app.add_subcommand("se-curve", "ZF spectral efficiency vs SNR; writes se.csv and se.svg");
  auto* grad = app.add_subcommand("gradcheck", "Gradient checks for every op and a tiny end-to-end model");
  grad->add_flag("--ops-only", o.ops_only, "Skip the end-to-end model");

  for (auto* cmd : {train, flops}) {
    cmd->add_option("--gamma", o.gamma, "Compression ratio as a fraction, e.g. 1/16");
    cmd->add_option("--codeword", o.codeword, "Codeword length M; must agree with --gamma if both are given");
  }
  for (auto* cmd : {train, eval, se}) cmd->add_option("--dataset", o.dataset, "Dataset container (.csib)");
  train->add_option("--validation", o.validation, "Validation container (.csib)");
  for (auto* cmd : {eval, se}) cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint file");
  train->add_option("--steps", o.steps, "Stop after this many Adam steps");
  train->add_option("--epochs", o.epochs, "Epoch budget (default 1000)");
  train->add_option("--batch", o.batch, "Batch size (default 200)");
  train->add_option("--lr", o.lr, "Adam learning rate (default 0.001)");
  se->add_option("--snr-list", o.snr_list, "Comma-separated SNR values in dB");
  se->add_option("--users", o.users, "Number of users (default 4)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "stnet-cli: %s\n", e.what());
    return 1;
  }

  try {
    if (*synth) return run_synth(o);
    if (*convert) return run_import(o);
    if (*train) return run_train(o);
    if (*eval) return run_eval(o);
    if (*flops) return run_flops(o);
    if (*se) return run_se_curve(o);
    if (*grad) return run_gradcheck(o);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "stnet-cli: %s\n", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "stnet-cli: %s\n", e.what());
    return 1;
  } catch (const NumericalError& e) {
    std::string msg = e.what();
    if (!e.last_good_checkpoint().empty()) msg += " (last good checkpoint " + e.last_good_checkpoint() + ")";
    std::fprintf(stderr, "stnet-cli: %s\n", msg.c_str());
    return 3;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "stnet-cli: bad config: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "stnet-cli: %s\n", e.what());
    return 2;
  }
  return 1;
}
