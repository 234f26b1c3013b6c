#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include "ddcm/bitstream.hpp"
#include "ddcm/codec_config.hpp"
#include "ddcm/sampler.hpp"
#include "ddcm/selection.hpp"

namespace ddcm {

struct PursuitResult {
  Vec noise;
  std::vector<std::uint32_t> indices;
  std::vector<std::uint32_t> coefficients;

  StepSymbols symbols() const { return {indices, coefficients}; }
};

// Greedy matching pursuit over C_i. Round 1 is the compression argmax. Each
// further round picks the (k, gamma) whose std-normalised combination
// gamma z + (1 - gamma) C_i(k) correlates best with the residual; gamma = 1
// keeps z, so no round lowers the correlation of the normalised noise.
// Ties go to the lowest k, then the lowest gamma. Objectives within a relative
// 1e-12 count as ties, since distinct (k, gamma) pairs can describe the same
// vector, for example re-adding the entry z already points along.
inline constexpr double kPursuitTieTolerance = 1e-12;

inline PursuitResult mp_refine(VecView residual, const Codebook& book, int i, std::uint32_t depth,
                               std::span<const double> gammas) {
  if (depth < 1) throw InvalidArgument("pursuit depth must be >= 1");
  if (depth > 1 && gammas.empty()) throw InvalidArgument("pursuit needs a coefficient set");
  require_same_dim(residual.size(), book.dim(), "pursuit residual");
  if (!all_finite(residual)) throw NumericError("pursuit residual is not finite");

  PursuitResult out;
  out.indices.push_back(select_compression(residual, book, i).index);
  const auto first = book.entry(i, out.indices.front());
  out.noise.assign(first.begin(), first.end());
  if (depth == 1) return out;

  const std::uint32_t k = book.size(i);
  const std::size_t d = book.dim();
  const double n = static_cast<double>(d);
  const auto entries = book.entries(i);
  std::vector<double> proj(k), sums(k), sqnorms(k), cross(k);
  for (std::uint32_t idx = 0; idx < k; ++idx) {
    const double* row = entries.data() + idx * d;
    double p = 0.0, s = 0.0, q = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      p += row[j] * residual[j];
      s += row[j];
      q += row[j] * row[j];
    }
    proj[idx] = p;
    sums[idx] = s;
    sqnorms[idx] = q;
  }

  Vec& z = out.noise;
  for (std::uint32_t round = 1; round < depth; ++round) {
    double z_proj = 0.0, z_sum = 0.0, z_sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      z_proj += z[j] * residual[j];
      z_sum += z[j];
      z_sq += z[j] * z[j];
    }
    for (std::uint32_t idx = 0; idx < k; ++idx) {
      const double* row = entries.data() + idx * d;
      double c = 0.0;
      for (std::size_t j = 0; j < d; ++j) c += z[j] * row[j];
      cross[idx] = c;
    }
    double best = -std::numeric_limits<double>::infinity();
    std::uint32_t best_k = 0;
    std::uint32_t best_c = 0;
    for (std::uint32_t idx = 0; idx < k; ++idx) {
      for (std::uint32_t c = 0; c < gammas.size(); ++c) {
        const double g = gammas[c];
        const double h = 1.0 - g;
        const double inner = g * z_proj + h * proj[idx];
        const double mean = (g * z_sum + h * sums[idx]) / n;
        const double sq = g * g * z_sq + 2.0 * g * h * cross[idx] + h * h * sqnorms[idx];
        const double var = sq / n - mean * mean;
        if (!(var > 0.0)) continue;
        const double objective = inner / std::sqrt(var);
        if (best_k == 0 || objective > best + kPursuitTieTolerance * std::abs(best)) {
          best = objective;
          best_k = idx + 1;
          best_c = c + 1;
        }
      }
    }
    if (best_k == 0) throw NumericError("matching-pursuit noise has zero empirical std");
    out.indices.push_back(best_k);
    out.coefficients.push_back(best_c);
    pursuit_update(z, book.entry(i, best_k), gammas[best_c - 1]);
  }
  return out;
}

// Compression selection (M = 1) or its matching-pursuit refinement (M > 1),
// guided by x0 - x0_hat_{0|i}.
class CompressionPolicy final : public NoisePolicy {
 public:
  CompressionPolicy(VecView target, std::uint32_t depth, std::vector<double> gammas)
      : target_(target.begin(), target.end()), depth_(depth), gammas_(std::move(gammas)) {}

  std::uint32_t init_index(std::uint32_t k_init) override {
    if (k_init != 1) throw InvalidArgument("compression pins the initial codebook to K = 1");
    return 1;
  }

  StepSymbols choose(const StepState& s) override {
    const Vec x0_hat = model_x0(s.model, s.x, s.step, s.schedule, s.condition);
    const Vec residual = subtract(target_, x0_hat);
    if (depth_ == 1) return {{select_compression(residual, s.book, s.step).index}, {}};
    return mp_refine(residual, s.book, s.step, depth_, gammas_).symbols();
  }

 private:
  Vec target_;
  std::uint32_t depth_;
  std::vector<double> gammas_;
};

namespace detail {

inline void check_model_matches(const StreamHeader& h, const ScoreModel& model) {
  if (h.model_id != model.model_id()) throw ModelMismatch("stream was encoded against a different score model");
  if (h.dim != model.dim()) throw ModelMismatch("stream dimension differs from model dimension");
  if (!(model.schedule().descriptor() == h.config.base_schedule)) {
    throw ModelMismatch("stream schedule differs from model schedule");
  }
}

inline BitStream pack(const StreamHeader& header, const Trajectory& traj) {
  const auto& c = header.config;
  const auto& ks = c.k_schedule;
  const unsigned coeff_bits = c.pursuit_depth > 1 ? bits_for(c.coefficient_count) : 0;
  BitWriter w;
  w.put(traj.init_index - 1, bits_for(ks.init_size()));
  for (int i = ks.steps(); i >= 2; --i) {
    const std::uint32_t k = ks.size(i);
    if (k == 1) continue;
    const StepSymbols& sym = traj.at_step(i);
    if (sym.indices.size() != c.pursuit_depth) throw InvalidArgument("step carries the wrong number of indices");
    const unsigned kb = bits_for(k);
    w.put(sym.indices[0] - 1, kb);
    for (std::size_t m = 1; m < sym.indices.size(); ++m) {
      w.put(sym.indices[m] - 1, kb);
      w.put(sym.coefficients[m - 1] - 1, coeff_bits);
    }
  }
  BitStream stream;
  stream.header = header;
  stream.payload_bit_count = w.bit_count();
  stream.payload = w.take();
  return stream;
}

struct Unpacked {
  std::uint32_t init_index = 1;
  std::vector<StepSymbols> symbols;
};

inline Unpacked unpack(const BitStream& stream) {
  const auto& c = stream.header.config;
  const auto& ks = c.k_schedule;
  const std::uint64_t expected = payload_bits(c);
  if (stream.payload_bit_count < expected || stream.payload.size() * 8 < expected) {
    throw TruncatedStream("payload truncated: expected " + std::to_string(expected) + " bits");
  }
  if (stream.payload_bit_count > expected) throw CorruptStream("payload longer than its configuration allows");
  const unsigned coeff_bits = c.pursuit_depth > 1 ? bits_for(c.coefficient_count) : 0;
  BitReader r(stream.payload, stream.payload_bit_count);
  Unpacked out;
  out.init_index = static_cast<std::uint32_t>(r.get(bits_for(ks.init_size()))) + 1;
  if (out.init_index > ks.init_size()) throw CorruptStream("initial index out of range");
  for (int i = ks.steps(); i >= 2; --i) {
    const std::uint32_t k = ks.size(i);
    StepSymbols sym;
    if (k == 1) {
      sym.indices = {1};
    } else {
      const unsigned kb = bits_for(k);
      for (std::uint32_t m = 0; m < c.pursuit_depth; ++m) {
        const auto idx = static_cast<std::uint32_t>(r.get(kb)) + 1;
        if (idx > k) throw CorruptStream("codebook index out of range");
        sym.indices.push_back(idx);
        if (m > 0) {
          const auto coeff = static_cast<std::uint32_t>(r.get(coeff_bits)) + 1;
          if (coeff > c.coefficient_count) throw CorruptStream("coefficient index out of range");
          sym.coefficients.push_back(coeff);
        }
      }
    }
    out.symbols.push_back(std::move(sym));
  }
  return out;
}

}  // namespace detail

struct CompressResult {
  BitStream stream;
  Vec reconstruction;
  Trajectory trajectory;
};

// Binds a configuration to a score model and memoises the codebooks so
// repeated jobs under one configuration share them.
class Codec {
 public:
  Codec(CodecConfig config, const ScoreModel& model)
      : config_(std::move(config)), model_(model), schedule_(config_.sampler_schedule()),
        book_(std::make_shared<Codebook>(config_.codebook_spec(model.dim()))), gammas_(config_.coefficients()) {
    config_.validate();
    if (!(model.schedule().descriptor() == config_.base_schedule)) {
      throw ModelMismatch("configuration schedule differs from the model's schedule");
    }
  }

  const CodecConfig& config() const { return config_; }
  const Schedule& schedule() const { return schedule_; }
  const Codebook& codebook() const { return *book_; }
  const ScoreModel& model() const { return model_; }
  std::span<const double> gammas() const { return gammas_; }

  StreamHeader header() const {
    return {kStreamVersion, static_cast<std::uint32_t>(model_.dim()), config_, model_.model_id()};
  }

  CompressResult compress(VecView x0, const Condition& condition = std::nullopt) const {
    require_same_dim(x0.size(), model_.dim(), "signal");
    if (!all_finite(x0)) throw InvalidArgument("signal is not finite");
    CompressionPolicy policy(x0, config_.pursuit_depth, gammas_);
    return generate(policy, constant_condition(condition));
  }

  // Runs any policy and seals the trajectory as a stream.
  CompressResult generate(NoisePolicy& policy, const ConditionPlan& conditions = constant_condition()) const {
    Trajectory traj = run_ddcm(model_, schedule_, *book_, policy, gammas_, conditions);
    BitStream stream = detail::pack(header(), traj);
    Vec recon = traj.output;
    return {std::move(stream), std::move(recon), std::move(traj)};
  }

  Vec decompress(const BitStream& stream, const ConditionPlan& conditions = constant_condition()) const {
    if (!(stream.header == header())) {
      detail::check_model_matches(stream.header, model_);
      throw ModelMismatch("stream configuration differs from this codec's configuration");
    }
    const auto unpacked = detail::unpack(stream);
    ReplayPolicy replay(unpacked.init_index, unpacked.symbols);
    return run_ddcm(model_, schedule_, *book_, replay, gammas_, conditions).output;
  }

 private:
  CodecConfig config_;
  const ScoreModel& model_;
  Schedule schedule_;
  std::shared_ptr<Codebook> book_;
  std::vector<double> gammas_;
};

inline CompressResult compress(VecView x0, const CodecConfig& config, const ScoreModel& model,
                               const Condition& condition = std::nullopt) {
  return Codec(config, model).compress(x0, condition);
}

// Decodes with nothing but the stream and the model.
inline Vec decompress(const BitStream& stream, const ScoreModel& model,
                      const ConditionPlan& conditions = constant_condition()) {
  if (stream.header.version != kStreamVersion) {
    throw UnsupportedVersion("unsupported stream version " + std::to_string(stream.header.version));
  }
  detail::check_model_matches(stream.header, model);
  return Codec(stream.header.config, model).decompress(stream, conditions);
}

struct EditRequest {
  BitStream stream;
  Condition source;
  Condition target;
  // Steps i > switch_step decode under `source`, steps i <= switch_step
  // under `target`.
  int switch_step = 0;
};

inline Vec edit_decode(const EditRequest& req, const ScoreModel& model) {
  const int steps = req.stream.header.config.sampler_steps();
  if (req.switch_step <= 1 || req.switch_step > steps) throw InvalidArgument("T_edit must lie in (1, T]");
  const int switch_step = req.switch_step;
  const Condition source = req.source;
  const Condition target = req.target;
  return decompress(req.stream, model, [=](int i) { return i > switch_step ? source : target; });
}

// Naive sub-sampling keeps `kept` evenly spaced base steps; adapted keeps
// every step but pins K_i = 1 outside [lo, hi].
struct SubsampledSchedule {
  Schedule schedule;
  KSchedule k_schedule;
  std::vector<int> retained_steps;
};

inline SubsampledSchedule subsample_skip(const Schedule& base, int kept, std::uint32_t k, std::uint32_t k_init = 1) {
  auto retained = evenly_spaced_steps(base.steps(), kept);
  Schedule sched = subsample(base, retained);
  if (kept == base.steps()) retained.clear();
  return {std::move(sched), KSchedule::uniform(kept, k, k_init), std::move(retained)};
}

inline SubsampledSchedule subsample_adapted(const Schedule& base, std::uint32_t k, int lo, int hi,
                                            std::uint32_t k_init = 1) {
  return {base, KSchedule::adapted(base.steps(), k, lo, hi, k_init), {}};
}

}  // namespace ddcm
