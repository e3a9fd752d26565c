// Command-line surface for the decoder: dataset synthesis, LOSO training,
// checkpoint evaluation, numeric gradient verification, and results
// re-rendering. Every run is deterministic given its seed; output files
// carry no timestamps, so reruns are byte-identical.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cyc/checkpoint.hpp"
#include "cyc/config.hpp"
#include "cyc/data.hpp"
#include "cyc/decoder.hpp"
#include "cyc/error.hpp"
#include "cyc/gradcheck.hpp"
#include "cyc/harness.hpp"
#include "cyc/iue.hpp"
#include "cyc/report.hpp"
#include "cyc/rng.hpp"
#include "cyc/train.hpp"

namespace {

using namespace cyc;

const char* kind_name(Error::Kind k) {
  switch (k) {
    case Error::Kind::shape: return "shape";
    case Error::Kind::config: return "config";
    case Error::Kind::label: return "label";
    case Error::Kind::data: return "data";
    case Error::Kind::format: return "format";
    case Error::Kind::bounds: return "bounds";
    case Error::Kind::contract: return "contract";
    case Error::Kind::determinism: return "determinism";
    case Error::Kind::compatibility: return "compatibility";
  }
  return "unknown";
}

int exit_code(Error::Kind k) {
  switch (k) {
    case Error::Kind::config: return 2;
    case Error::Kind::data: return 3;
    case Error::Kind::format: return 4;
    case Error::Kind::label: return 5;
    case Error::Kind::bounds: return 6;
    case Error::Kind::shape: return 7;
    case Error::Kind::contract: return 8;
    case Error::Kind::determinism: return 9;
    case Error::Kind::compatibility: return 10;
  }
  return 1;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Error::Kind::data, "cannot write '" + path + "'");
  out.write(content.data(),
            static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(Error::Kind::data, "short write to '" + path + "'");
}

// ---- synth ----

struct SynthArgs {
  std::string out;
  SynthConfig cfg;
  std::vector<double> freqs;  // CLI-friendly mirror of cfg.class_freqs
};

void run_synth(const SynthArgs& a) {
  SynthConfig cfg = a.cfg;
  if (!a.freqs.empty()) cfg.class_freqs = a.freqs;
  TrialSet ts = synth_generate(cfg);
  save_trialset(ts, a.out);
  std::cout << "file=" << a.out << "\n"
            << "trials=" << ts.size() << "\n"
            << "subjects=" << ts.distinct_subjects().size() << "\n"
            << "channels=" << ts.channels() << "\n"
            << "samples=" << ts.samples() << "\n"
            << "bytes=" << std::filesystem::file_size(a.out) << "\n";
}

// ---- train ----

void run_train(const std::string& config_path) {
  RunConfig rc = load_run_config(config_path);
  rc.validate();
  if (rc.dataset.empty())
    throw Error(Error::Kind::config,
                "config key 'dataset' must name the trial file to train on");
  if (rc.out_dir.empty())
    throw Error(Error::Kind::config,
                "config key 'out_dir' must name the output directory");

  // Load before creating anything so a missing dataset leaves no outputs.
  TrialSet ts = load_trialset(rc.dataset);
  std::filesystem::create_directories(rc.out_dir);

  RunReport report =
      run_loso(ts, rc, rc.out_dir, [](const FoldResult& f) {
        std::printf(
            "fold subject=%d best_epoch=%zu val=%.6f test=%.6f cycles=%.6f\n",
            f.subject, f.best_epoch, f.val_accuracy, f.test_accuracy,
            f.mean_cycles);
        std::fflush(stdout);
      });

  write_file(rc.out_dir + "/results.txt", results_text(report));
  write_file(rc.out_dir + "/results.csv", results_csv(report));
  std::cout << "\n" << results_table(report);
  std::cout << "results written to " << rc.out_dir << "\n";
}

// ---- eval ----

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;
  int subject = -1;  // -1 = all trials
  std::string predictions_out;
};

void run_eval(const EvalArgs& a) {
  Checkpoint ckpt = load_checkpoint(a.checkpoint);
  RunConfig rc = parse_run_config(ckpt.config);
  TrialSet ts = load_trialset(a.dataset);

  if (rc.channels != ts.channels() || rc.samples != ts.samples() ||
      rc.classes != static_cast<std::size_t>(ts.classes))
    throw Error(Error::Kind::compatibility,
                "checkpoint was trained on " + std::to_string(rc.channels) +
                    " channels x " + std::to_string(rc.samples) +
                    " samples with " + std::to_string(rc.classes) +
                    " classes, but the dataset holds " +
                    std::to_string(ts.channels()) + " x " +
                    std::to_string(ts.samples()) + " with " +
                    std::to_string(ts.classes) + " classes");

  Decoder dec;
  dec.cfg = rc.decoder_config();
  Rng init_rng(0);  // immediately overwritten by the checkpoint weights
  dec.init(ts.channels(), ts.samples(), init_rng);
  restore_params(ckpt, dec.all());

  std::vector<std::size_t> indices;
  if (a.subject < 0) {
    indices = all_indices(ts);
  } else {
    for (std::size_t i = 0; i < ts.size(); ++i)
      if (ts.subjects[i] == a.subject) indices.push_back(i);
    if (indices.empty())
      throw Error(Error::Kind::data,
                  "dataset has no trials for subject " +
                      std::to_string(a.subject));
  }

  EvalResult er = evaluate(dec, ts, indices);
  std::printf("trials=%zu\n", indices.size());
  std::printf("accuracy=%.6f\n", er.accuracy);
  std::printf("mean_cycles=%.6f\n", er.mean_cycles);
  std::printf("checkpoint_epoch=%zu\n", ckpt.epoch);
  std::printf("checkpoint_val_accuracy=%.6f\n", ckpt.val_accuracy);

  if (!a.predictions_out.empty()) {
    std::string csv = "index,subject,label,prediction\n";
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const std::size_t idx = indices[i];
      csv += std::to_string(idx) + ',' + std::to_string(ts.subjects[idx]) +
             ',' + std::to_string(ts.labels[idx]) + ',' +
             std::to_string(er.predictions[i]) + '\n';
    }
    write_file(a.predictions_out, csv);
    std::cout << "predictions written to " << a.predictions_out << "\n";
  }
}

// ---- gradcheck ----

struct GradcheckArgs {
  std::uint64_t seed = 0;
  double step = 1e-5;
  double tol = 1e-4;
};

// Verifies the analytic gradients of the full composite loss (aggregation,
// halting regularizer, reliability supervision) on a small randomized
// instance against central finite differences.
int run_gradcheck(const GradcheckArgs& a) {
  Decoder dec;
  dec.cfg.backbone.temporal_filters = 2;
  dec.cfg.backbone.temporal_kernel = 5;
  dec.cfg.backbone.pool_stride = 4;
  dec.cfg.backbone.activation = Activation::elu;
  dec.cfg.mhsp.windows = {4};
  dec.cfg.mhsp.stride = 2;
  dec.cfg.mhsp.patch_dim = 3;
  dec.cfg.mhsp.hidden_dim = 4;
  dec.cfg.mhsp.max_cycles = 3;
  dec.cfg.variant = Variant::mhsp_iue;
  dec.cfg.classes = 2;
  dec.cfg.tau_ens = 0.8;
  dec.cfg.tau_stop = 2.0;  // never halts: keeps the loss smooth in theta

  Rng rng(derive_seed(a.seed, 0x9cc1));
  dec.init(2, 16, rng);

  Tensor batch({2, 2, 16});
  for (std::size_t i = 0; i < batch.size(); ++i)
    batch[i] = rng.normal() * 0.5;
  const std::vector<int> labels = {0, 1};

  // Search targets are constants during training, so freeze them from a
  // reference forward pass before differentiating.
  Tape ref;
  CycleTrace ref_trace = decoder_forward(ref, dec, batch);
  MctsConfig mc;
  mc.n_simulations = 32;
  mc.max_depth = dec.cfg.mhsp.max_cycles;
  mc.rng_seed = derive_seed(a.seed, 0x3a6);
  const Tensor targets =
      mcts_targets(ref_trace, labels, mc, dec.cfg.tau_ens);

  LossWeights lw;
  lw.iue_enabled = true;
  lw.lambda_halt = 0.05;
  lw.lambda_iue = 0.5;

  GradCheckReport rep = grad_check(
      [&](Tape& tape) -> Value {
        CycleTrace trace = decoder_forward(tape, dec, batch);
        return total_loss(tape, trace, labels, &targets, lw,
                          dec.cfg.tau_ens);
      },
      dec.all(), a.step, a.tol);

  std::cout << rep.to_string();
  std::cout << (rep.passed ? "gradcheck PASS\n" : "gradcheck FAIL\n");
  return rep.passed ? 0 : 1;
}

// ---- report ----

void run_report(const std::string& results_path, bool sample_std) {
  std::ifstream in(results_path, std::ios::binary);
  if (!in)
    throw Error(Error::Kind::data,
                "cannot open results file '" + results_path + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  RunReport report = parse_results_text(text);
  if (sample_std) report.sample_std = true;
  std::cout << results_table(report);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Meta-cognitive hierarchical motor-imagery decoder: synthesize "
      "datasets, train LOSO folds, evaluate checkpoints, verify gradients, "
      "and render result tables."};
  app.require_subcommand(1);
  int rc_code = 0;

  // synth
  auto synth_args = std::make_shared<SynthArgs>();
  CLI::App* synth = app.add_subcommand(
      "synth", "Generate a synthetic multi-subject trial file");
  synth->add_option("--out", synth_args->out, "Output trial file path")
      ->required();
  synth->add_option("--subjects", synth_args->cfg.n_subjects,
                    "Number of subjects")->capture_default_str();
  synth->add_option("--trials-per-class", synth_args->cfg.trials_per_class,
                    "Trials per class per subject")->capture_default_str();
  synth->add_option("--channels", synth_args->cfg.C, "EEG channels")
      ->capture_default_str();
  synth->add_option("--samples", synth_args->cfg.T, "Samples per trial")
      ->capture_default_str();
  synth->add_option("--rate", synth_args->cfg.sample_rate,
                    "Sampling rate in Hz")->capture_default_str();
  synth->add_option("--freqs", synth_args->freqs,
                    "Comma-separated class tone frequencies in Hz")
      ->delimiter(',');
  synth->add_option("--jitter", synth_args->cfg.subject_gain_jitter,
                    "Per-subject gain jitter")->capture_default_str();
  synth->add_option("--noise", synth_args->cfg.noise_std,
                    "White noise standard deviation")->capture_default_str();
  synth->add_option("--seed", synth_args->cfg.rng_seed, "Generator seed")
      ->capture_default_str();
  synth->callback([synth_args]() { run_synth(*synth_args); });

  // train
  auto train_config = std::make_shared<std::string>();
  CLI::App* train = app.add_subcommand(
      "train", "Train one checkpoint per LOSO fold and write results");
  train->add_option("--config", *train_config, "Run configuration file")
      ->required();
  train->callback([train_config]() { run_train(*train_config); });

  // eval
  auto eval_args = std::make_shared<EvalArgs>();
  CLI::App* eval = app.add_subcommand(
      "eval", "Evaluate a checkpoint with batch-size-1 halting inference");
  eval->add_option("--checkpoint", eval_args->checkpoint, "Checkpoint file")
      ->required();
  eval->add_option("--dataset", eval_args->dataset, "Trial file")
      ->required();
  eval->add_option("--subject", eval_args->subject,
                   "Restrict to one subject's trials (default: all)");
  eval->add_option("--predictions", eval_args->predictions_out,
                   "Write per-trial predictions to this CSV file");
  eval->callback([eval_args]() { run_eval(*eval_args); });

  // gradcheck
  auto gc_args = std::make_shared<GradcheckArgs>();
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck",
      "Finite-difference check of the composite loss gradients");
  gradcheck->add_option("--seed", gc_args->seed, "Instance seed")
      ->capture_default_str();
  gradcheck->add_option("--step", gc_args->step,
                        "Finite-difference step size")
      ->capture_default_str();
  gradcheck->add_option("--tol", gc_args->tol, "Relative tolerance")
      ->capture_default_str();
  gradcheck->callback(
      [gc_args, &rc_code]() { rc_code = run_gradcheck(*gc_args); });

  // report
  auto report_path = std::make_shared<std::string>();
  auto report_sample = std::make_shared<bool>(false);
  CLI::App* report = app.add_subcommand(
      "report", "Re-render a results file as a table with mean/std");
  report->add_option("--results", *report_path, "results.txt from a run")
      ->required();
  report->add_flag("--sample-std", *report_sample,
                   "Use the sample (N-1) standard deviation");
  report->callback([report_path, report_sample]() {
    run_report(*report_path, *report_sample);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const cyc::Error& e) {
    std::cerr << "error (" << kind_name(e.kind()) << "): " << e.what()
              << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc_code;
}
