#include "cyc/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "cyc/error.hpp"
#include "cyc/rng.hpp"

namespace cyc {

namespace {

constexpr char kMagic[4] = {'M', 'I', 'T', 'R'};
constexpr std::uint32_t kTrialFormatVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v, std::uint64_t& checksum) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
  checksum += v;  // header words enter the checksum by value, not by byte
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_byte(std::ostream& os, unsigned char b, std::uint64_t& checksum) {
  os.write(reinterpret_cast<const char*>(&b), 1);
  checksum += b;
}

void put_f32(std::ostream& os, float f, std::uint64_t& checksum) {
  const std::uint32_t v = std::bit_cast<std::uint32_t>(f);
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
  checksum += b[0];
  checksum += b[1];
  checksum += b[2];
  checksum += b[3];
}

// Reads exactly n bytes or throws a format error naming the byte offset.
void pull(std::istream& is, void* dst, std::size_t n, std::uint64_t& offset) {
  is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw Error(Error::Kind::format,
                "trial file truncated at byte " +
                    std::to_string(offset + static_cast<std::uint64_t>(
                                                is.gcount())));
  }
  offset += n;
}

std::uint32_t pull_u32(std::istream& is, std::uint64_t& offset) {
  unsigned char b[4];
  pull(is, b, 4, offset);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t pull_u64(std::istream& is, std::uint64_t& offset) {
  unsigned char b[8];
  pull(is, b, 8, offset);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

std::size_t TrialSet::channels() const {
  return trials.rank() == 3 ? trials.extent(1) : 0;
}

std::size_t TrialSet::samples() const {
  return trials.rank() == 3 ? trials.extent(2) : 0;
}

std::vector<int> TrialSet::distinct_subjects() const {
  std::vector<int> ids(subjects);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::vector<std::pair<int, std::vector<std::size_t>>> TrialSet::label_histogram()
    const {
  std::map<int, std::vector<std::size_t>> counts;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& row = counts[subjects[i]];
    if (row.empty()) row.assign(classes, 0);
    row[static_cast<std::size_t>(labels[i])] += 1;
  }
  return {counts.begin(), counts.end()};
}

void TrialSet::validate() const {
  if (size() == 0) {
    throw Error(Error::Kind::data, "trial set: empty (N = 0)");
  }
  if (trials.rank() != 3) {
    throw Error(Error::Kind::shape, "trial set: trials must be [N x C x T]");
  }
  const std::size_t n = trials.extent(0);
  if (labels.size() != n || subjects.size() != n) {
    throw Error(Error::Kind::shape,
                "trial set: labels/subjects must parallel the N=" +
                    std::to_string(n) + " trials, got " +
                    std::to_string(labels.size()) + "/" +
                    std::to_string(subjects.size()));
  }
  if (classes == 0) {
    throw Error(Error::Kind::data, "trial set: class count must be positive");
  }
  if (sample_rate == 0) {
    throw Error(Error::Kind::data, "trial set: sample rate must be positive");
  }
  std::vector<bool> seen(classes, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw Error(Error::Kind::label,
                  "trial set: label " + std::to_string(labels[i]) +
                      " at trial " + std::to_string(i) + " outside [0, " +
                      std::to_string(classes) + ")");
    }
    seen[static_cast<std::size_t>(labels[i])] = true;
    if (subjects[i] < 0) {
      throw Error(Error::Kind::data,
                  "trial set: negative subject id at trial " +
                      std::to_string(i));
    }
  }
  for (std::size_t k = 0; k < classes; ++k) {
    if (!seen[k]) {
      throw Error(Error::Kind::data,
                  "trial set: class " + std::to_string(k) +
                      " has no trials");
    }
  }
}

void save_trialset(const TrialSet& ts, const std::string& path) {
  ts.validate();
  const std::size_t n = ts.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (ts.labels[i] > 255 || ts.subjects[i] > 255) {
      throw Error(Error::Kind::data,
                  "trial set: label/subject at trial " + std::to_string(i) +
                      " does not fit the 8-bit on-disk field");
    }
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw Error(Error::Kind::data, "cannot open for writing: " + path);
  }
  std::uint64_t checksum = 0;
  os.write(kMagic, 4);
  put_u32(os, kTrialFormatVersion, checksum);
  put_u32(os, static_cast<std::uint32_t>(n), checksum);
  put_u32(os, static_cast<std::uint32_t>(ts.channels()), checksum);
  put_u32(os, static_cast<std::uint32_t>(ts.samples()), checksum);
  put_u32(os, static_cast<std::uint32_t>(ts.classes), checksum);
  put_u32(os, static_cast<std::uint32_t>(ts.sample_rate), checksum);
  for (std::size_t i = 0; i < n; ++i) {
    put_byte(os, static_cast<unsigned char>(ts.labels[i]), checksum);
  }
  for (std::size_t i = 0; i < n; ++i) {
    put_byte(os, static_cast<unsigned char>(ts.subjects[i]), checksum);
  }
  for (std::size_t i = 0; i < ts.trials.size(); ++i) {
    put_f32(os, static_cast<float>(ts.trials[i]), checksum);
  }
  put_u64(os, checksum);
  os.flush();
  if (!os) {
    throw Error(Error::Kind::data, "write failed: " + path);
  }
}

TrialSet load_trialset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw Error(Error::Kind::data, "cannot open trial file: " + path);
  }
  is.seekg(0, std::ios::end);
  const std::uint64_t file_size = static_cast<std::uint64_t>(is.tellg());
  is.seekg(0, std::ios::beg);
  std::uint64_t offset = 0;
  char magic[4];
  pull(is, magic, 4, offset);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(Error::Kind::format, "bad magic at byte 0 (not a trial file)");
  }
  std::uint64_t checksum = 0;
  const std::uint32_t version = pull_u32(is, offset);
  if (version != kTrialFormatVersion) {
    throw Error(Error::Kind::format,
                "unsupported trial-file version " + std::to_string(version) +
                    " at byte 4");
  }
  const std::uint32_t n = pull_u32(is, offset);
  const std::uint32_t c = pull_u32(is, offset);
  const std::uint32_t t = pull_u32(is, offset);
  const std::uint32_t k = pull_u32(is, offset);
  const std::uint32_t rate = pull_u32(is, offset);
  checksum += version;
  checksum += n;
  checksum += c;
  checksum += t;
  checksum += k;
  checksum += rate;
  if (n == 0) {
    throw Error(Error::Kind::data, "trial file holds an empty set (N = 0)");
  }
  if (c == 0 || t == 0 || k == 0 || rate == 0) {
    throw Error(Error::Kind::format,
                "zero extent in trial-file header (bytes 4..27)");
  }
  // Size the whole file from the header before allocating anything, so a
  // corrupt count cannot trigger a giant allocation. 128-bit arithmetic
  // keeps the check overflow-proof for arbitrary header values.
  const unsigned __int128 expected =
      static_cast<unsigned __int128>(28) + 2 * static_cast<unsigned __int128>(n) +
      4 * static_cast<unsigned __int128>(n) * c * t + 8;
  if (expected != static_cast<unsigned __int128>(file_size)) {
    throw Error(Error::Kind::format,
                "trial file is " + std::to_string(file_size) +
                    " bytes but the header implies a different size");
  }

  TrialSet ts;
  ts.classes = k;
  ts.sample_rate = rate;
  ts.labels.resize(n);
  ts.subjects.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint64_t at = offset;
    unsigned char b;
    pull(is, &b, 1, offset);
    checksum += b;
    if (b >= k) {
      throw Error(Error::Kind::format,
                  "label " + std::to_string(b) + " out of range [0, " +
                      std::to_string(k) + ") at byte " + std::to_string(at));
    }
    ts.labels[i] = b;
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    unsigned char b;
    pull(is, &b, 1, offset);
    checksum += b;
    ts.subjects[i] = b;
  }

  ts.trials = Tensor::zeros({n, c, t});
  const std::size_t total = ts.trials.size();
  constexpr std::size_t kChunkFloats = 1 << 16;
  std::vector<unsigned char> buf(kChunkFloats * 4);
  std::size_t done = 0;
  while (done < total) {
    const std::size_t batch = std::min(kChunkFloats, total - done);
    pull(is, buf.data(), batch * 4, offset);
    for (std::size_t i = 0; i < batch; ++i) {
      const unsigned char* b = &buf[i * 4];
      checksum += b[0];
      checksum += b[1];
      checksum += b[2];
      checksum += b[3];
      const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                                 (static_cast<std::uint32_t>(b[1]) << 8) |
                                 (static_cast<std::uint32_t>(b[2]) << 16) |
                                 (static_cast<std::uint32_t>(b[3]) << 24);
      ts.trials[done + i] =
          static_cast<double>(std::bit_cast<float>(bits));
    }
    done += batch;
  }

  const std::uint64_t checksum_at = offset;
  const std::uint64_t stored = pull_u64(is, offset);
  if (stored != checksum) {
    throw Error(Error::Kind::format,
                "checksum mismatch at byte " + std::to_string(checksum_at) +
                    ": stored " + std::to_string(stored) + ", computed " +
                    std::to_string(checksum));
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw Error(Error::Kind::format,
                "trailing bytes after checksum at byte " +
                    std::to_string(offset));
  }
  ts.validate();
  return ts;
}

Tensor extract_mi_window(const Tensor& trial, std::size_t cue_sample,
                         std::size_t sample_rate, double seconds) {
  if (trial.rank() != 2) {
    throw Error(Error::Kind::shape,
                "extract_mi_window: trial must be [C x T], got rank " +
                    std::to_string(trial.rank()));
  }
  if (sample_rate == 0 || !(seconds > 0.0)) {
    throw Error(Error::Kind::config,
                "extract_mi_window: rate and duration must be positive");
  }
  const std::size_t n = static_cast<std::size_t>(
      std::llround(seconds * static_cast<double>(sample_rate)));
  const std::size_t channels = trial.extent(0);
  const std::size_t t_full = trial.extent(1);
  if (n == 0 || cue_sample + n > t_full) {
    throw Error(Error::Kind::bounds,
                "extract_mi_window: window [" + std::to_string(cue_sample) +
                    ", " + std::to_string(cue_sample + n) +
                    ") exceeds the " + std::to_string(t_full) +
                    "-sample recording");
  }
  Tensor out = Tensor::zeros({channels, n});
  for (std::size_t ch = 0; ch < channels; ++ch) {
    for (std::size_t s = 0; s < n; ++s) {
      out(ch, s) = trial(ch, cue_sample + s);
    }
  }
  return out;
}

SplitPlan loso_splits(const TrialSet& ts, std::uint64_t seed,
                      double val_fraction) {
  ts.validate();
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw Error(Error::Kind::config,
                "loso_splits: val_fraction must lie in [0, 1)");
  }
  const std::vector<int> ids = ts.distinct_subjects();
  if (ids.size() < 2) {
    throw Error(Error::Kind::data,
                "loso_splits: need at least 2 subjects, got " +
                    std::to_string(ids.size()));
  }
  SplitPlan plan;
  plan.folds.reserve(ids.size());
  for (int held_out : ids) {
    Fold fold;
    fold.test_subject = held_out;
    // Pool indices per class, ascending, so the seeded shuffle alone decides
    // the draw.
    std::vector<std::vector<std::size_t>> by_class(ts.classes);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      if (ts.subjects[i] == held_out) {
        fold.test_indices.push_back(i);
      } else {
        by_class[static_cast<std::size_t>(ts.labels[i])].push_back(i);
      }
    }
    for (std::size_t k = 0; k < ts.classes; ++k) {
      auto& pool = by_class[k];
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(held_out), k));
      rng.shuffle(pool);
      std::size_t n_val = static_cast<std::size_t>(std::llround(
          val_fraction * static_cast<double>(pool.size())));
      if (!pool.empty() && n_val >= pool.size()) n_val = pool.size() - 1;
      fold.val_indices.insert(fold.val_indices.end(), pool.begin(),
                              pool.begin() + static_cast<std::ptrdiff_t>(n_val));
      fold.train_indices.insert(fold.train_indices.end(),
                                pool.begin() + static_cast<std::ptrdiff_t>(n_val),
                                pool.end());
    }
    std::sort(fold.train_indices.begin(), fold.train_indices.end());
    std::sort(fold.val_indices.begin(), fold.val_indices.end());
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

void SynthConfig::validate() const {
  if (n_subjects == 0 || trials_per_class == 0 || C == 0 || T == 0 ||
      sample_rate == 0) {
    throw Error(Error::Kind::config,
                "synth: subjects, trials, C, T and rate must be positive");
  }
  if (class_freqs.empty()) {
    throw Error(Error::Kind::config, "synth: need at least one class frequency");
  }
  if (class_freqs.size() > C) {
    throw Error(Error::Kind::config,
                "synth: more classes than channels (" +
                    std::to_string(class_freqs.size()) + " > " +
                    std::to_string(C) + ")");
  }
  const double nyquist = static_cast<double>(sample_rate) / 2.0;
  for (std::size_t a = 0; a < class_freqs.size(); ++a) {
    if (!(class_freqs[a] > 0.0) || class_freqs[a] >= nyquist) {
      throw Error(Error::Kind::config,
                  "synth: class frequency " + std::to_string(class_freqs[a]) +
                      " Hz outside (0, Nyquist " + std::to_string(nyquist) +
                      ")");
    }
    for (std::size_t b = a + 1; b < class_freqs.size(); ++b) {
      if (class_freqs[a] == class_freqs[b]) {
        throw Error(Error::Kind::config,
                    "synth: class frequencies must be pairwise distinct");
      }
    }
  }
  if (subject_gain_jitter < 0.0 || noise_std < 0.0) {
    throw Error(Error::Kind::config,
                "synth: jitter and noise std must be nonnegative");
  }
}

TrialSet synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t k_classes = cfg.class_freqs.size();
  const std::size_t n = cfg.n_subjects * k_classes * cfg.trials_per_class;

  TrialSet ts;
  ts.classes = k_classes;
  ts.sample_rate = cfg.sample_rate;
  ts.trials = Tensor::zeros({n, cfg.C, cfg.T});
  ts.labels.resize(n);
  ts.subjects.resize(n);

  // Dedicated stream so the gains depend on the seed and subject count only.
  Rng gain_rng(derive_seed(cfg.rng_seed, 0x6a1b5));
  std::vector<double> gains(cfg.n_subjects);
  for (std::size_t j = 0; j < cfg.n_subjects; ++j) {
    gains[j] = 1.0 + cfg.subject_gain_jitter * gain_rng.normal();
  }

  const double two_pi = 2.0 * M_PI;
  std::size_t idx = 0;
  for (std::size_t j = 0; j < cfg.n_subjects; ++j) {
    Rng rng(derive_seed(cfg.rng_seed, 1, j));
    for (std::size_t k = 0; k < k_classes; ++k) {
      const double omega =
          two_pi * cfg.class_freqs[k] / static_cast<double>(cfg.sample_rate);
      for (std::size_t rep = 0; rep < cfg.trials_per_class; ++rep) {
        const double phase = rng.uniform(0.0, two_pi);
        for (std::size_t ch = 0; ch < cfg.C; ++ch) {
          const bool active = (ch % k_classes) == k;
          for (std::size_t s = 0; s < cfg.T; ++s) {
            double x = cfg.noise_std > 0.0 ? cfg.noise_std * rng.normal() : 0.0;
            if (active) {
              x += gains[j] *
                   std::sin(omega * static_cast<double>(s) + phase);
            }
            // Quantize to the on-disk precision so save->load is bit-exact.
            ts.trials(idx, ch, s) =
                static_cast<double>(static_cast<float>(x));
          }
        }
        ts.labels[idx] = static_cast<int>(k);
        ts.subjects[idx] = static_cast<int>(j);
        ++idx;
      }
    }
  }
  return ts;
}

}  // namespace cyc
