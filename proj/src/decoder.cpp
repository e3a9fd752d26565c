#include "cyc/decoder.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "cyc/error.hpp"
#include "cyc/ops.hpp"

namespace cyc {

Variant variant_from_string(const std::string& name) {
  if (name == "baseline") return Variant::baseline;
  if (name == "mhsp") return Variant::mhsp;
  if (name == "mhsp_iue") return Variant::mhsp_iue;
  throw Error(Error::Kind::config,
              "unknown variant '" + name +
                  "' (expected baseline, mhsp or mhsp_iue)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::baseline:
      return "baseline";
    case Variant::mhsp:
      return "mhsp";
    case Variant::mhsp_iue:
      return "mhsp_iue";
  }
  return "?";
}

void DecoderConfig::validate(std::size_t channels, std::size_t samples) const {
  if (classes < 2) {
    throw Error(Error::Kind::config, "decoder: need at least 2 classes");
  }
  if (tau_ens < 0.0) {
    throw Error(Error::Kind::config, "decoder: tau_ens must be nonnegative");
  }
  backbone.validate(channels, samples);
  if (variant != Variant::baseline) {
    mhsp.validate(backbone.feature_length(samples));
  }
}

void Decoder::init(std::size_t channels_in, std::size_t samples_in, Rng& rng) {
  cfg.validate(channels_in, samples_in);
  channels = channels_in;
  samples = samples_in;
  backbone.init(cfg.backbone, channels, rng);
  const std::size_t features = cfg.backbone.feature_length(samples);
  if (cfg.variant == Variant::baseline) {
    base_weight = Param("base.weight", Tensor({features, cfg.classes}));
    const double a = 1.0 / std::sqrt(static_cast<double>(features));
    for (std::size_t i = 0; i < base_weight.value.size(); ++i) {
      base_weight.value[i] = rng.uniform(-a, a);
    }
    base_bias = Param("base.bias", Tensor::zeros({cfg.classes}));
    return;
  }
  mhsp.cfg = cfg.mhsp;
  mhsp.classes = cfg.classes;
  mhsp.init(rng);
  if (cfg.variant == Variant::mhsp_iue) {
    relhead.init(cfg.mhsp.hidden_dim, cfg.classes, rng);
  }
}

std::vector<Param*> Decoder::all() {
  std::vector<Param*> params = backbone.all();
  if (cfg.variant == Variant::baseline) {
    params.push_back(&base_weight);
    params.push_back(&base_bias);
    return params;
  }
  for (Param* p : mhsp.all()) params.push_back(p);
  if (cfg.variant == Variant::mhsp_iue) {
    for (Param* p : relhead.all()) params.push_back(p);
  }
  return params;
}

CycleTrace decoder_forward(Tape& tape, Decoder& dec, const Tensor& batch) {
  if (batch.rank() != 3 || batch.extent(1) != dec.channels ||
      batch.extent(2) != dec.samples) {
    throw Error(Error::Kind::shape,
                "decoder: batch must be [B x " + std::to_string(dec.channels) +
                    " x " + std::to_string(dec.samples) + "], got " +
                    shape_str(batch.shape()));
  }
  Value z = backbone_forward(tape, tape.constant(batch), dec.cfg.backbone,
                             dec.backbone);

  if (dec.cfg.variant == Variant::baseline) {
    Value logits = add_rowvec(matmul(z, tape.leaf(dec.base_weight)),
                              tape.leaf(dec.base_bias));
    CycleTrace trace;
    trace.outputs.push_back({logits, Value{}, 1});
    trace.executed = 1;
    trace.final_logits = logits;
    return trace;
  }

  Halter halter = nullptr;
  if (dec.cfg.variant == Variant::mhsp_iue) {
    halter = [&dec](Tape& t, CycleTrace& trace, std::size_t cycle) {
      const CycleOutput& out = trace.outputs.back();
      Value r = reliability(t, out.state, out.logits, dec.relhead);
      trace.reliabilities.push_back(r);
      return should_halt(r.val(), cycle, dec.cfg.tau_stop);
    };
  }
  CycleTrace trace =
      run_cycles(tape, z, dec.mhsp, dec.cfg.mhsp.max_cycles, halter);
  if (dec.cfg.variant == Variant::mhsp_iue) {
    trace.final_logits = aggregate(tape, trace, dec.cfg.tau_ens);
  }
  return trace;
}

EvalResult evaluate(Decoder& dec, const TrialSet& ts,
                    const std::vector<std::size_t>& indices) {
  if (indices.empty()) {
    throw Error(Error::Kind::data, "evaluate: no trials selected");
  }
  EvalResult res;
  res.predictions.reserve(indices.size());
  std::size_t correct = 0;
  std::size_t cycles = 0;
  Tensor one({1, ts.channels(), ts.samples()});
  for (std::size_t idx : indices) {
    if (idx >= ts.size()) {
      throw Error(Error::Kind::bounds,
                  "evaluate: trial index " + std::to_string(idx) +
                      " outside the " + std::to_string(ts.size()) +
                      "-trial set");
    }
    for (std::size_t c = 0; c < ts.channels(); ++c) {
      for (std::size_t s = 0; s < ts.samples(); ++s) {
        one(0, c, s) = ts.trials(idx, c, s);
      }
    }
    Tape tape;
    CycleTrace trace = decoder_forward(tape, dec, one);
    const int pred =
        static_cast<int>(fn::argmax_row(trace.final_logits.val(), 0));
    res.predictions.push_back(pred);
    if (pred == ts.labels[idx]) ++correct;
    cycles += trace.executed;
  }
  res.accuracy =
      static_cast<double>(correct) / static_cast<double>(indices.size());
  res.mean_cycles =
      static_cast<double>(cycles) / static_cast<double>(indices.size());
  return res;
}

Tensor gather_trials(const TrialSet& ts, const std::vector<std::size_t>& idx) {
  Tensor out({idx.size(), ts.channels(), ts.samples()});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    if (idx[b] >= ts.size()) {
      throw Error(Error::Kind::bounds,
                  "gather_trials: index " + std::to_string(idx[b]) +
                      " outside the " + std::to_string(ts.size()) +
                      "-trial set");
    }
    for (std::size_t c = 0; c < ts.channels(); ++c) {
      for (std::size_t s = 0; s < ts.samples(); ++s) {
        out(b, c, s) = ts.trials(idx[b], c, s);
      }
    }
  }
  return out;
}

std::vector<int> gather_labels(const TrialSet& ts,
                               const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) {
    if (i >= ts.size()) {
      throw Error(Error::Kind::bounds,
                  "gather_labels: index " + std::to_string(i) +
                      " outside the " + std::to_string(ts.size()) +
                      "-trial set");
    }
    out.push_back(ts.labels[i]);
  }
  return out;
}

TrialSet subset(const TrialSet& ts, const std::vector<std::size_t>& idx) {
  TrialSet out;
  out.classes = ts.classes;
  out.sample_rate = ts.sample_rate;
  out.trials = gather_trials(ts, idx);
  out.labels = gather_labels(ts, idx);
  out.subjects.reserve(idx.size());
  for (std::size_t i : idx) out.subjects.push_back(ts.subjects[i]);
  return out;
}

std::vector<std::size_t> all_indices(const TrialSet& ts) {
  std::vector<std::size_t> idx(ts.size());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace cyc
