// ddcm command-line front end. Every flag may also be given as a line
// `name=value` in the file passed to --config; command-line flags win.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ddcm.hpp"

namespace {

using namespace ddcm;

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kBadConfig = 3,
  kModelMismatch = 4,
  kIo = 5,
  kProtocol = 6,
  kBadStream = 7,
  kNumeric = 8,
};

struct Options {
  std::string model;
  std::vector<int> T;
  std::vector<std::uint32_t> K;
  std::string k_schedule;
  std::uint32_t k_init = 0;
  std::vector<std::uint32_t> M;
  std::vector<std::uint32_t> C;
  std::uint64_t seed = 0;
  std::string in;
  std::string out;
  std::string rule;
  std::vector<double> lambda;
  std::vector<std::uint32_t> ktilde;
  int t_edit = 0;
  std::vector<std::size_t> mask;
  double noise_std = 0.0;
  std::string condition;
  std::string source_condition;
  std::string emit_recon;
  std::string stream;
  double pixels = 0.0;
  std::uint32_t n = 1;
  std::size_t index = 0;
  std::string experiment;
  std::uint32_t projections = kDefaultProjections;
  double psnr_range = 1.0;
  double edit_fraction = 0.6;
  unsigned threads = 0;
  // Remote models only.
  std::size_t dim = 0;
  int base_T = 0;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int timeout_ms = 10000;
};

// A loaded score model: either an analytic GMM or a remote endpoint.
struct LoadedModel {
  std::optional<GmmModel> gmm;
  std::unique_ptr<wire::ChildProcess> child;
  std::unique_ptr<wire::TcpConnection> tcp;
  std::unique_ptr<wire::RemoteDenoiser> remote;

  const ScoreModel& get() const {
    if (gmm) return *gmm;
    return *remote;
  }
  const GmmModel& analytic(const std::string& why) const {
    if (!gmm) throw InvalidArgument(why + " needs an analytic model file");
    return *gmm;
  }
};

std::vector<std::string> split_command(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string word; in >> word;) out.push_back(word);
  return out;
}

// --model is a model file, `exec:<command line>` or `tcp:<host>:<port>`.
// Remote endpoints need the schedule they were trained on; decompress and
// edit take it from the stream header when the flags are absent.
LoadedModel load_model(const Options& o, const std::optional<StreamHeader>& header = std::nullopt) {
  if (o.model.empty()) throw InvalidArgument("--model is required");
  LoadedModel m;
  const bool exec = o.model.rfind("exec:", 0) == 0;
  const bool tcp = o.model.rfind("tcp:", 0) == 0;
  if (!exec && !tcp) {
    m.gmm.emplace(read_gmm_model(o.model));
    return m;
  }
  std::size_t dim = o.dim;
  ScheduleDescriptor desc{o.base_T, o.beta_start, o.beta_end};
  if (header) {
    if (dim == 0) dim = header->dim;
    if (o.base_T == 0) desc = header->config.base_schedule;
  }
  if (dim == 0 || desc.steps == 0) throw InvalidArgument("remote models need --dim and --base-T");
  Schedule sched = build_schedule(desc.steps, desc.beta_start, desc.beta_end);
  std::unique_ptr<wire::Channel> channel;
  if (exec) {
    m.child = std::make_unique<wire::ChildProcess>(split_command(o.model.substr(5)), o.timeout_ms);
    channel = m.child->channel();
  } else {
    const std::string rest = o.model.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw InvalidArgument("tcp endpoint must be tcp:<host>:<port>");
    const int port = std::stoi(rest.substr(colon + 1));
    if (port <= 0 || port > 65535) throw InvalidArgument("bad port");
    m.tcp = std::make_unique<wire::TcpConnection>(rest.substr(0, colon), static_cast<std::uint16_t>(port),
                                                  o.timeout_ms);
    channel = m.tcp->channel();
  }
  m.remote = std::make_unique<wire::RemoteDenoiser>(std::move(channel), dim, std::move(sched));
  return m;
}

template <typename T>
T single(const std::vector<T>& values, const char* flag, std::optional<T> fallback = std::nullopt) {
  if (values.empty()) {
    if (fallback) return *fallback;
    throw InvalidArgument(std::string("--") + flag + " is required");
  }
  if (values.size() != 1) throw InvalidArgument(std::string("--") + flag + " takes one value here");
  return values.front();
}

KSchedule read_k_schedule_file(const std::string& path, int steps) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint32_t> sizes;
  for (long long v; in >> v;) {
    if (v < 1 || v > std::numeric_limits<std::uint32_t>::max()) throw InvalidArgument("codebook size out of range");
    sizes.push_back(static_cast<std::uint32_t>(v));
  }
  if (!in.eof()) throw InvalidArgument("K schedule file must hold integers only");
  if (static_cast<int>(sizes.size()) != steps) {
    throw InvalidArgument("K schedule file lists " + std::to_string(sizes.size()) + " sizes, expected " +
                          std::to_string(steps) + " (steps 2..T, then K_init)");
  }
  return KSchedule::explicit_sizes(std::move(sizes));
}

// Codec configuration from the flags. `default_k_init` applies when
// --k-init is absent.
CodecConfig make_config(const Options& o, const ScoreModel& model, std::uint32_t default_k_init) {
  CodecConfig c;
  c.base_schedule = model.schedule().descriptor();
  const int T = single(o.T, "T", std::optional<int>(model.schedule().steps()));
  if (T < 2 || T > model.schedule().steps()) throw InvalidArgument("--T must lie in [2, model T]");
  const std::uint32_t k_init = o.k_init ? o.k_init : default_k_init;
  if (!o.k_schedule.empty()) {
    if (!o.K.empty()) throw InvalidArgument("--K and --k-schedule are exclusive");
    c.k_schedule = read_k_schedule_file(o.k_schedule, T);
  } else {
    const std::uint32_t K = single(o.K, "K");
    c.k_schedule = KSchedule::uniform(T, K, k_init == 0 ? K : k_init);
  }
  auto sub = subsample_skip(model.schedule(), T, 1);
  c.retained_steps = std::move(sub.retained_steps);
  c.pursuit_depth = single(o.M, "M", std::optional<std::uint32_t>(1));
  c.coefficient_count = single(o.C, "C", std::optional<std::uint32_t>(2));
  c.seed = o.seed;
  c.validate();
  return c;
}

Condition to_condition(const std::string& text) {
  if (text.empty()) return std::nullopt;
  return text;
}

void report_rate(const CodecConfig& config, const Options& o) {
  const std::uint64_t bits = payload_bits(config);
  std::cout << "payload_bits=" << bits;
  if (o.pixels > 0) std::cout << " bpp=" << format_double(static_cast<double>(bits) / o.pixels);
  std::cout << "\n";
}

void require_out(const Options& o) {
  if (o.out.empty()) throw InvalidArgument("--out is required");
}

int cmd_sample(const Options& o) {
  require_out(o);
  const LoadedModel lm = load_model(o);
  const ScoreModel& model = lm.get();
  const Codec codec(make_config(o, model, 0), model);
  const std::string rule = o.rule.empty() ? "random" : o.rule;
  if (!o.stream.empty() && o.n != 1) throw InvalidArgument("--stream needs --n 1");
  RandomStream rng(o.seed);
  const std::uint32_t ktilde = single(o.ktilde, "ktilde", std::optional<std::uint32_t>(0));
  std::vector<Vec> outputs;
  for (std::uint32_t s = 0; s < o.n; ++s) {
    CompressResult res;
    if (rule == "random") {
      RandomPolicy policy(rng);
      res = codec.generate(policy, constant_condition(to_condition(o.condition)));
    } else if (rule == "ccg" || rule == "ccfg") {
      if (o.condition.empty()) throw InvalidArgument("--rule " + rule + " needs --condition");
      if (ktilde == 0) throw InvalidArgument("--rule " + rule + " needs --ktilde");
      if (rule == "ccg") {
        const GmmModel& gmm = lm.analytic("ccg");
        std::size_t used = 0;
        const int label = std::stoi(o.condition, &used);
        if (used != o.condition.size()) throw InvalidArgument("--condition must be an integer class label");
        CcgPolicy policy(gmm_classifier(gmm, codec.schedule(), label), ktilde, rng);
        res = codec.generate(policy);
      } else {
        CcfgPolicy policy(o.condition, ktilde, rng);
        res = codec.generate(policy);
      }
    } else {
      throw InvalidArgument("sample supports --rule random|ccg|ccfg");
    }
    if (!o.stream.empty()) write_stream_file(o.stream, res.stream);
    outputs.push_back(std::move(res.reconstruction));
  }
  write_vectors(o.out, outputs);
  report_rate(codec.config(), o);
  return kOk;
}

Vec input_vector(const Options& o) {
  if (o.in.empty()) throw InvalidArgument("--in is required");
  const auto vectors = read_vectors(o.in);
  if (o.index >= vectors.size()) throw InvalidArgument("--index past the end of the input file");
  return vectors[o.index];
}

int cmd_compress(const Options& o) {
  require_out(o);
  if (!o.rule.empty() && o.rule != "compression") throw InvalidArgument("compress supports --rule compression");
  const Vec x0 = input_vector(o);
  const LoadedModel lm = load_model(o);
  const ScoreModel& model = lm.get();
  const Codec codec(make_config(o, model, 1), model);
  const auto res = codec.compress(x0, to_condition(o.condition));
  write_stream_file(o.out, res.stream);
  if (!o.emit_recon.empty()) write_vectors(o.emit_recon, {res.reconstruction});
  report_rate(codec.config(), o);
  return kOk;
}

int cmd_decompress(const Options& o) {
  require_out(o);
  if (o.in.empty()) throw InvalidArgument("--in is required");
  const BitStream stream = read_stream_file(o.in);
  const LoadedModel lm = load_model(o, stream.header);
  write_vectors(o.out, {decompress(stream, lm.get(), constant_condition(to_condition(o.condition)))});
  return kOk;
}

int cmd_restore(const Options& o) {
  require_out(o);
  const Vec y = input_vector(o);
  const LoadedModel lm = load_model(o);
  const ScoreModel& model = lm.get();
  const Codec codec(make_config(o, model, 0), model);
  LinearObservation obs{o.mask.empty() ? LinearOperator::identity(model.dim())
                                       : LinearOperator::mask(model.dim(), o.mask),
                        y, o.noise_std};
  obs.validate(model.dim());
  const Condition cond = to_condition(o.condition);
  const std::string rule = o.rule.empty() ? "inverse" : o.rule;
  if (!o.stream.empty() && o.n != 1) throw InvalidArgument("--stream needs --n 1");
  RandomStream rng(o.seed);
  std::vector<Vec> outputs;
  for (std::uint32_t s = 0; s < o.n; ++s) {
    CompressResult res;
    if (rule == "inverse") {
      LinearInversePolicy policy(obs, rng);
      res = codec.generate(policy, constant_condition(cond));
    } else if (rule == "posterior") {
      const GmmModel& gmm = lm.analytic("--rule posterior");
      const std::uint32_t ktilde = single(o.ktilde, "ktilde", std::optional<std::uint32_t>(0));
      PosteriorLossPolicy policy(gmm_observation_gradient(gmm, obs), rng,
                                 ktilde ? std::optional(ktilde) : std::nullopt);
      res = codec.generate(policy, constant_condition(cond));
    } else if (rule == "restoration") {
      const GmmModel& gmm = lm.analytic("--rule restoration");
      const double lambda = single(o.lambda, "lambda", std::optional<double>(0.0));
      const double inv_d = 1.0 / static_cast<double>(gmm.dim());
      QualityMeasure quality = [&gmm, inv_d](VecView x) { return -gmm.log_density(x, 0) * inv_d; };
      RestorationPolicy policy(gmm.mmse_restore(obs, cond), lambda, quality, rng);
      res = codec.generate(policy, constant_condition(cond));
    } else {
      throw InvalidArgument("restore supports --rule inverse|posterior|restoration");
    }
    if (!o.stream.empty()) write_stream_file(o.stream, res.stream);
    outputs.push_back(std::move(res.reconstruction));
  }
  write_vectors(o.out, outputs);
  report_rate(codec.config(), o);
  return kOk;
}

int cmd_edit(const Options& o) {
  require_out(o);
  if (o.in.empty()) throw InvalidArgument("--in is required");
  if (o.condition.empty()) throw InvalidArgument("edit needs the target --condition");
  if (o.t_edit == 0) throw InvalidArgument("edit needs --t-edit");
  const BitStream stream = read_stream_file(o.in);
  const LoadedModel lm = load_model(o, stream.header);
  const Vec out = edit_decode({stream, to_condition(o.source_condition), to_condition(o.condition), o.t_edit}, lm.get());
  write_vectors(o.out, {out});
  return kOk;
}

int cmd_eval(const Options& o) {
  require_out(o);
  if (o.experiment.empty()) throw InvalidArgument("eval needs --experiment");
  const LoadedModel lm = load_model(o);
  const GmmModel& model = lm.analytic("eval");
  ExperimentSpec spec;
  spec.kind = parse_experiment(o.experiment);
  spec.samples = o.n;
  spec.seed = o.seed;
  spec.projections = o.projections;
  spec.psnr_range = o.psnr_range;
  spec.observed = o.mask;
  spec.noise_std = o.noise_std;
  spec.edit_fraction = o.edit_fraction;
  spec.threads = o.threads;
  if (o.rule == "ccfg") spec.guidance = GuidanceRule::kCcfg;
  auto label = [](const std::string& text) {
    std::size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used != text.size()) throw InvalidArgument("class labels must be integers");
    return v;
  };
  if (!o.condition.empty()) spec.target_label = label(o.condition);
  if (!o.source_condition.empty()) spec.source_label = label(o.source_condition);

  const std::vector<int> Ts = o.T.empty() ? std::vector<int>{model.schedule().steps()} : o.T;
  if (o.K.empty()) throw InvalidArgument("eval needs --K");
  const std::vector<std::uint32_t> Ms = o.M.empty() ? std::vector<std::uint32_t>{1} : o.M;
  const std::vector<std::uint32_t> Cs = o.C.empty() ? std::vector<std::uint32_t>{2} : o.C;
  const std::vector<std::uint32_t> kts = o.ktilde.empty() ? std::vector<std::uint32_t>{0} : o.ktilde;
  const std::vector<double> lambdas = o.lambda.empty() ? std::vector<double>{0.0} : o.lambda;
  for (int t : Ts)
    for (auto k : o.K)
      for (auto m : Ms)
        for (auto c : Cs)
          for (auto kt : kts)
            for (double l : lambdas) spec.grid.push_back(GridPoint{t, k, m, c, kt, l, false});

  const MetricReport report = run_experiment(model, spec);
  const std::string csv = to_csv(report);
  write_bytes_file(o.out, std::span(reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()));
  return kOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Denoising diffusion codebook models: compression and compressed conditional generation"};
  app.set_config("--config", "", "flat key=value file mirroring the flags; flags override it");
  app.require_subcommand(1);
  app.fallthrough();

  Options o;
  app.add_option("--model", o.model, "model file, exec:<command> or tcp:<host>:<port>");
  app.add_option("--T", o.T, "sampling steps (comma list for eval)")->delimiter(',');
  app.add_option("--K", o.K, "codebook size (comma list for eval)")->delimiter(',');
  app.add_option("--k-schedule", o.k_schedule, "file with K_2..K_T then K_init");
  app.add_option("--k-init", o.k_init, "initial codebook size K_{T+1}");
  app.add_option("--M", o.M, "matching-pursuit depth")->delimiter(',');
  app.add_option("--C", o.C, "coefficient alphabet size")->delimiter(',');
  app.add_option("--seed", o.seed, "codebook and selection seed");
  app.add_option("--in", o.in, "input file");
  app.add_option("--out", o.out, "output file");
  app.add_option("--rule", o.rule, "random|compression|posterior|inverse|restoration|ccg|ccfg")
      ->check(CLI::IsMember({"random", "compression", "posterior", "inverse", "restoration", "ccg", "ccfg"}));
  app.add_option("--lambda", o.lambda, "perception weight")->delimiter(',');
  app.add_option("--ktilde", o.ktilde, "candidate subset size")->delimiter(',');
  app.add_option("--t-edit", o.t_edit, "step at which editing switches condition");
  app.add_option("--mask", o.mask, "observed coordinates")->delimiter(',');
  app.add_option("--noise-std", o.noise_std, "observation noise std");
  app.add_option("--condition", o.condition, "condition (class label)");
  app.add_option("--source-condition", o.source_condition, "condition used before --t-edit");
  app.add_option("--emit-recon", o.emit_recon, "also write the encoder reconstruction");
  app.add_option("--stream", o.stream, "also write the bit-stream (needs --n 1)");
  app.add_option("--pixels", o.pixels, "pixel count for bpp reporting");
  app.add_option("--n", o.n, "number of samples")->check(CLI::PositiveNumber);
  app.add_option("--index", o.index, "vector to read from --in");
  app.add_option("--experiment", o.experiment,
                 "generation_vs_K|rate_distortion|posterior_inpainting|restoration|guidance|editing");
  app.add_option("--projections", o.projections, "sliced-Wasserstein projections");
  app.add_option("--psnr-range", o.psnr_range, "signal range used for PSNR");
  app.add_option("--edit-fraction", o.edit_fraction, "T_edit / T for the editing experiment");
  app.add_option("--threads", o.threads, "worker threads for eval");
  app.add_option("--dim", o.dim, "remote model dimension");
  app.add_option("--base-T", o.base_T, "remote model's base step count");
  app.add_option("--beta-start", o.beta_start, "remote model's first beta");
  app.add_option("--beta-end", o.beta_end, "remote model's last beta");
  app.add_option("--timeout-ms", o.timeout_ms, "remote request timeout");

  std::function<int(const Options&)> action;
  auto sub = [&](const char* name, const char* help, int (*fn)(const Options&)) {
    app.add_subcommand(name, help)->fallthrough()->callback([&action, fn] { action = fn; });
  };
  sub("sample", "generate samples", cmd_sample);
  sub("compress", "encode a signal as a bit-stream", cmd_compress);
  sub("decompress", "decode a bit-stream", cmd_decompress);
  sub("restore", "posterior sampling / restoration from an observation", cmd_restore);
  sub("edit", "decode a stream with a switched condition", cmd_edit);
  sub("eval", "run an experiment sweep and write CSV", cmd_eval);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    return action(o);
  } catch (const ModelMismatch& e) {
    std::cerr << "model mismatch: " << e.what() << "\n";
    return kModelMismatch;
  } catch (const ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return kProtocol;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const TruncatedStream& e) {
    std::cerr << "bad stream: " << e.what() << "\n";
    return kBadStream;
  } catch (const CorruptStream& e) {
    std::cerr << "bad stream: " << e.what() << "\n";
    return kBadStream;
  } catch (const UnsupportedVersion& e) {
    std::cerr << "bad stream: " << e.what() << "\n";
    return kBadStream;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const InvalidArgument& e) {
    std::cerr << "bad config: " << e.what() << "\n";
    return kBadConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "bad config: " << e.what() << "\n";
    return kBadConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
