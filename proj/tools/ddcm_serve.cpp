// Reference denoiser server: serves an analytic model file over the wire
// protocol on stdin/stdout, or on a loopback TCP port.
//
// --fault makes the server misbehave after the handshake, for client tests:
//   wrong-dim  answers with one value too few
//   stall      never answers
//   garbage    answers with a frame that is not a valid response

#include <CLI11.hpp>

#include <iostream>
#include <thread>

#include "ddcm.hpp"

namespace {

using namespace ddcm;

// Wraps a model and corrupts its responses at the frame level.
void serve_faulty(const ScoreModel& model, wire::Channel& channel, const std::string& fault) {
  wire::Bytes frame;
  if (!channel.read_frame(frame)) return;
  channel.write_frame(wire::handshake_reply(model.model_id()));
  while (channel.read_frame(frame)) {
    if (fault == "stall") {
      std::this_thread::sleep_for(std::chrono::hours(1));
    } else if (fault == "wrong-dim") {
      channel.write_frame(wire::ok_body(Vec(model.dim() - 1, 0.0)));
    } else {
      const wire::Bytes junk = {0, 1, 2};
      channel.write_frame(junk);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DDCM reference denoiser server"};
  std::string model_path;
  int port = 0;
  std::string fault;
  app.add_option("--model", model_path, "model file")->required();
  app.add_option("--tcp", port, "listen on 127.0.0.1:<port> instead of stdio")->check(CLI::Range(1, 65535));
  app.add_option("--fault", fault, "misbehave for client tests")
      ->check(CLI::IsMember({"wrong-dim", "stall", "garbage"}));
  CLI11_PARSE(app, argc, argv);

  try {
    const GmmModel model = read_gmm_model(model_path);
    if (port != 0) {
      wire::serve_tcp(model, static_cast<std::uint16_t>(port));
      return 0;
    }
    wire::Channel channel(STDIN_FILENO, STDOUT_FILENO, -1);
    if (fault.empty()) {
      wire::serve(model, channel);
    } else {
      serve_faulty(model, channel, fault);
    }
  } catch (const std::exception& e) {
    std::cerr << "ddcm-serve: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
