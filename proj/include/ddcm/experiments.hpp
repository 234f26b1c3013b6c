#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <thread>
#include <tuple>

#include "ddcm/codec.hpp"
#include "ddcm/conditional.hpp"
#include "ddcm/gmm.hpp"
#include "ddcm/metrics.hpp"

namespace ddcm {

enum class ExperimentKind { kGenerationVsK, kRateDistortion, kPosteriorInpainting, kRestoration, kGuidance, kEditing };

inline std::string_view experiment_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kGenerationVsK: return "generation_vs_K";
    case ExperimentKind::kRateDistortion: return "rate_distortion";
    case ExperimentKind::kPosteriorInpainting: return "posterior_inpainting";
    case ExperimentKind::kRestoration: return "restoration";
    case ExperimentKind::kGuidance: return "guidance";
    case ExperimentKind::kEditing: return "editing";
  }
  return "unknown";
}

inline ExperimentKind parse_experiment(std::string_view name) {
  for (auto k : {ExperimentKind::kGenerationVsK, ExperimentKind::kRateDistortion, ExperimentKind::kPosteriorInpainting,
                 ExperimentKind::kRestoration, ExperimentKind::kGuidance, ExperimentKind::kEditing}) {
    if (experiment_name(k) == name) return k;
  }
  if (name == "generation") return ExperimentKind::kGenerationVsK;
  throw InvalidArgument("unknown experiment '" + std::string(name) + "'");
}

enum class GuidanceRule { kCcg, kCcfg };

// One configuration of a sweep. `baseline` marks the DDPM row (K = inf).
struct GridPoint {
  int T = 0;
  std::uint32_t K = 0;
  std::uint32_t M = 1;
  std::uint32_t C = 2;
  std::uint32_t ktilde = 0;
  double lambda = 0.0;
  bool baseline = false;

  std::string key() const {
    std::ostringstream s;
    s << "T=" << T << ";K=";
    if (baseline) {
      s << "inf";
    } else {
      s << K;
    }
    s << ";M=" << M << ";C=" << C << ";ktilde=" << ktilde << ";lambda=" << lambda;
    return s.str();
  }

  auto order() const {
    return std::make_tuple(T, baseline ? std::numeric_limits<std::uint32_t>::max() : K, M, C, ktilde, lambda);
  }
};

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::kRateDistortion;
  std::vector<GridPoint> grid;
  std::uint32_t samples = 100;
  std::uint64_t seed = 0;
  std::uint32_t projections = kDefaultProjections;
  double psnr_range = 1.0;
  // generation_vs_K: append a DDPM baseline per distinct T.
  bool include_baseline = true;
  // Observation for inpainting / restoration.
  std::vector<std::size_t> observed;
  double noise_std = 0.0;
  // Guidance and editing.
  GuidanceRule guidance = GuidanceRule::kCcg;
  std::optional<int> source_label;
  int target_label = 0;
  double edit_fraction = 0.6;
  unsigned threads = 0;

  void validate(const GmmModel& model) const {
    if (grid.empty()) throw InvalidArgument("experiment grid is empty");
    if (samples < 1) throw InvalidArgument("sample count must be >= 1");
    if (samples < 2) throw InvalidArgument("sliced Wasserstein needs >= 2 samples");
    for (const auto& g : grid) {
      if (g.T < 2 || g.T > model.schedule().steps()) throw InvalidArgument("grid T outside [2, model T]");
      if (g.K < 1) throw InvalidArgument("grid K must be >= 1");
    }
    const bool needs_mask = kind == ExperimentKind::kPosteriorInpainting || kind == ExperimentKind::kRestoration;
    if (needs_mask && observed.empty()) throw InvalidArgument("experiment needs observed coordinates");
    if (kind == ExperimentKind::kGuidance || kind == ExperimentKind::kEditing) {
      if (!model.params().labelled()) throw InvalidArgument("experiment needs a labelled mixture");
    }
    if (kind == ExperimentKind::kEditing && !source_label) throw InvalidArgument("editing needs a source label");
  }
};

struct MetricRow {
  GridPoint point;
  std::uint64_t payload_bits = 0;
  double mse = 0.0;
  double mse_std = 0.0;
  double psnr = 0.0;
  double sliced_wasserstein = 0.0;
  std::optional<double> target_prob;
  double wall_time = 0.0;
};

struct MetricReport {
  ExperimentKind kind = ExperimentKind::kRateDistortion;
  double psnr_range = 1.0;
  std::vector<MetricRow> rows;
};

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> columns = {
      "experiment", "config", "T",    "K",    "M",           "C",    "ktilde",  "lambda",
      "payload_bits", "mse",  "mse_std", "psnr", "psnr_range", "sliced_wasserstein", "target_prob", "wall_time"};
  return columns;
}

inline std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\r\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string to_csv(const MetricReport& report, bool include_wall_time = true) {
  std::string out;
  const auto& cols = csv_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) out += (c ? "," : "") + cols[c];
  out += "\r\n";
  for (const auto& r : report.rows) {
    const auto& g = r.point;
    std::vector<std::string> f = {std::string(experiment_name(report.kind)),
                                  csv_field(g.key()),
                                  std::to_string(g.T),
                                  g.baseline ? "inf" : std::to_string(g.K),
                                  std::to_string(g.M),
                                  std::to_string(g.C),
                                  std::to_string(g.ktilde),
                                  format_double(g.lambda),
                                  std::to_string(r.payload_bits),
                                  format_double(r.mse),
                                  format_double(r.mse_std),
                                  format_double(r.psnr),
                                  format_double(report.psnr_range),
                                  format_double(r.sliced_wasserstein),
                                  r.target_prob ? format_double(*r.target_prob) : "",
                                  include_wall_time ? format_double(r.wall_time) : ""};
    for (std::size_t c = 0; c < f.size(); ++c) out += (c ? "," : "") + f[c];
    out += "\r\n";
  }
  return out;
}

namespace detail {

inline std::uint64_t point_seed(std::uint64_t seed, const std::string& key) {
  ByteWriter w;
  w.put_le(seed);
  w.put_bytes(key);
  return truncated_hash64(w.bytes());
}

// Sampler configuration of a grid point over the model's base schedule.
inline CodecConfig point_config(const GmmModel& model, const GridPoint& g, std::uint32_t k_init, std::uint64_t seed) {
  CodecConfig c;
  c.base_schedule = model.schedule().descriptor();
  const auto sub = subsample_skip(model.schedule(), g.T, g.K, k_init);
  c.retained_steps = sub.retained_steps;
  c.k_schedule = sub.k_schedule;
  c.pursuit_depth = g.M;
  c.coefficient_count = g.C;
  c.seed = seed;
  return c;
}

inline std::vector<Vec> prior_samples(const GmmModel& model, std::uint32_t n, std::uint64_t seed,
                                      const Condition& cond = std::nullopt) {
  RandomStream rng(seed, "reference");
  std::vector<Vec> out;
  out.reserve(n);
  for (std::uint32_t s = 0; s < n; ++s) out.push_back(model.sample_prior(rng, cond));
  return out;
}

inline Condition label_condition(int label) { return std::to_string(label); }

struct PointResult {
  std::uint64_t payload_bits = 0;
  std::vector<Vec> outputs;
  std::vector<double> errors;
  std::vector<double> target_probs;
};

inline LinearObservation observe(const GmmModel& model, const ExperimentSpec& spec, VecView x0, RandomStream& rng) {
  LinearObservation obs{LinearOperator::mask(model.dim(), spec.observed), {}, spec.noise_std};
  obs.y = obs.op.apply(x0);
  for (auto& v : obs.y) v += spec.noise_std * rng.normal();
  return obs;
}

inline PointResult run_point(const GmmModel& model, const ExperimentSpec& spec, const GridPoint& g,
                             std::uint64_t seed) {
  PointResult res;
  RandomStream rng(seed, "experiment");
  const std::uint32_t n = spec.samples;

  if (g.baseline) {
    const Schedule sched = subsample_skip(model.schedule(), g.T, 1).schedule;
    for (std::uint32_t s = 0; s < n; ++s) res.outputs.push_back(run_ddpm(model, sched, rng));
    return res;
  }

  switch (spec.kind) {
    case ExperimentKind::kGenerationVsK: {
      const Codec codec(point_config(model, g, g.K, spec.seed), model);
      res.payload_bits = payload_bits(codec.config());
      for (std::uint32_t s = 0; s < n; ++s) {
        RandomPolicy policy(rng);
        res.outputs.push_back(run_ddcm(model, codec.schedule(), codec.codebook(), policy, codec.gammas()).output);
      }
      break;
    }
    case ExperimentKind::kRateDistortion: {
      const Codec codec(point_config(model, g, 1, spec.seed), model);
      res.payload_bits = payload_bits(codec.config());
      for (std::uint32_t s = 0; s < n; ++s) {
        const Vec x0 = model.sample_prior(rng);
        auto out = codec.compress(x0);
        res.errors.push_back(mse(out.reconstruction, x0));
        res.outputs.push_back(std::move(out.reconstruction));
      }
      break;
    }
    case ExperimentKind::kPosteriorInpainting:
    case ExperimentKind::kRestoration: {
      const Codec codec(point_config(model, g, g.K, spec.seed), model);
      res.payload_bits = payload_bits(codec.config());
      for (std::uint32_t s = 0; s < n; ++s) {
        const Vec x0 = model.sample_prior(rng);
        const LinearObservation obs = observe(model, spec, x0, rng);
        CompressResult out;
        if (spec.kind == ExperimentKind::kPosteriorInpainting) {
          if (spec.noise_std == 0.0) {
            LinearInversePolicy policy(obs, rng);
            out = codec.generate(policy);
          } else {
            PosteriorLossPolicy policy(gmm_observation_gradient(model, obs), rng,
                                       g.ktilde ? std::optional(g.ktilde) : std::nullopt);
            out = codec.generate(policy);
          }
        } else {
          const double inv_d = 1.0 / static_cast<double>(model.dim());
          QualityMeasure quality = [&model, inv_d](VecView x) { return -model.log_density(x, 0) * inv_d; };
          RestorationPolicy policy(model.mmse_restore(obs), g.lambda, quality, rng);
          out = codec.generate(policy);
        }
        res.errors.push_back(mse(out.reconstruction, x0));
        res.outputs.push_back(std::move(out.reconstruction));
      }
      break;
    }
    case ExperimentKind::kGuidance: {
      const Codec codec(point_config(model, g, g.K, spec.seed), model);
      res.payload_bits = payload_bits(codec.config());
      const Condition target = label_condition(spec.target_label);
      const std::uint32_t subset = g.ktilde ? g.ktilde : g.K;
      for (std::uint32_t s = 0; s < n; ++s) {
        CompressResult out;
        if (spec.guidance == GuidanceRule::kCcg) {
          CcgPolicy policy(gmm_classifier(model, codec.schedule(), spec.target_label), subset, rng);
          out = codec.generate(policy);
        } else {
          CcfgPolicy policy(target, subset, rng);
          out = codec.generate(policy);
        }
        res.target_probs.push_back(std::exp(model.class_logprob(out.reconstruction, 0, spec.target_label)));
        res.outputs.push_back(std::move(out.reconstruction));
      }
      break;
    }
    case ExperimentKind::kEditing: {
      const Codec codec(point_config(model, g, 1, spec.seed), model);
      res.payload_bits = payload_bits(codec.config());
      const Condition source = label_condition(*spec.source_label);
      const Condition target = label_condition(spec.target_label);
      const int t_edit = std::max(2, static_cast<int>(std::lround(spec.edit_fraction * g.T)));
      for (std::uint32_t s = 0; s < n; ++s) {
        const Vec x0 = model.sample_prior(rng, source);
        auto out = codec.compress(x0, source);
        const Vec edited = edit_decode({out.stream, source, target, t_edit}, model);
        res.errors.push_back(mse(edited, out.reconstruction));
        res.target_probs.push_back(std::exp(model.class_logprob(edited, 0, spec.target_label)));
        res.outputs.push_back(edited);
      }
      break;
    }
  }
  return res;
}

}  // namespace detail

// Runs every grid point (in parallel when threads allow) and returns rows
// sorted by configuration. Output is a function of (spec, model) only,
// wall_time aside.
inline MetricReport run_experiment(const GmmModel& model, ExperimentSpec spec) {
  spec.validate(model);
  std::vector<GridPoint> points = spec.grid;
  if (spec.kind == ExperimentKind::kGenerationVsK && spec.include_baseline) {
    std::vector<int> ts;
    for (const auto& g : spec.grid) {
      if (std::find(ts.begin(), ts.end(), g.T) == ts.end()) ts.push_back(g.T);
    }
    for (int t : ts) points.push_back(GridPoint{t, 0, 1, 2, 0, 0.0, true});
  }
  std::sort(points.begin(), points.end(), [](const GridPoint& a, const GridPoint& b) { return a.order() < b.order(); });

  Condition reference_cond;
  if (spec.kind == ExperimentKind::kGuidance || spec.kind == ExperimentKind::kEditing) {
    reference_cond = detail::label_condition(spec.target_label);
  }
  const auto reference = detail::prior_samples(model, spec.samples, spec.seed, reference_cond);

  MetricReport report{spec.kind, spec.psnr_range, std::vector<MetricRow>(points.size())};
  std::vector<std::exception_ptr> failures(points.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t p = next++; p < points.size(); p = next++) {
      try {
        const auto start = std::chrono::steady_clock::now();
        const GridPoint& g = points[p];
        auto res = detail::run_point(model, spec, g, detail::point_seed(spec.seed, g.key()));
        MetricRow& row = report.rows[p];
        row.point = g;
        row.payload_bits = res.payload_bits;
        if (!res.errors.empty()) {
          const auto ms = mean_std(res.errors);
          row.mse = ms.mean;
          row.mse_std = ms.std;
        } else {
          // Generation rows: squared error of the sample mean against the
          // reference mean, per coordinate.
          Vec m_out(model.dim(), 0.0);
          Vec m_ref(model.dim(), 0.0);
          for (const auto& v : res.outputs) m_out = add_scaled(m_out, 1.0 / res.outputs.size(), v);
          for (const auto& v : reference) m_ref = add_scaled(m_ref, 1.0 / reference.size(), v);
          row.mse = mse(m_out, m_ref);
        }
        row.psnr = psnr(row.mse, spec.psnr_range);
        row.sliced_wasserstein = sliced_wasserstein(res.outputs, reference, spec.projections, spec.seed);
        if (!res.target_probs.empty()) row.target_prob = mean_std(res.target_probs).mean;
        row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      } catch (...) {
        failures[p] = std::current_exception();
      }
    }
  };
  unsigned threads = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(points.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  return report;
}

}  // namespace ddcm
