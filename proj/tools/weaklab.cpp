// weaklab command-line driver.
//
//   weaklab <label|aggregate|train|eval|report|run|validate> --config FILE [--seed N] [--out DIR]
//   weaklab serve-mock --spec FILE [--host H] [--port P]
//
// Exit status: 0 success, 1 invalid input or config, 2 runtime failure.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <httplib.h>

#include "weaklab/backend.hpp"
#include "weaklab/pipeline.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRuntime = 2;

struct StageArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_stage_options(CLI::App* cmd, StageArgs& args) {
  cmd->add_option("-c,--config", args.config, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("-s,--seed", args.seed, "override the config seed");
  cmd->add_option("-o,--out", args.out, "override the output directory");
}

weaklab::PipelineConfig prepare(const StageArgs& args) {
  auto config = weaklab::load_config(args.config);
  if (args.seed) weaklab::set_seed(config, *args.seed);
  if (args.out) config.output_dir = *args.out;
  weaklab::validate_config(config);
  return config;
}

int serve_mock(const std::string& spec_path, const std::string& host, int port, const std::string& marker) {
  weaklab::MockBackend backend(weaklab::load_mock_spec(spec_path), marker);
  httplib::Server server;
  auto handler = [&backend](const httplib::Request& req, httplib::Response& res) {
    auto reply = weaklab::handle_backend_request(backend, req.path, req.body);
    res.status = reply.status;
    res.set_content(reply.body, "application/json");
  };
  server.Post("/v1/entail", handler);
  server.Post("/v1/mask_fill", handler);
  std::cerr << "mock backend listening on " << host << ":" << port << "\n";
  if (!server.listen(host, port)) {
    std::cerr << "error: cannot listen on " << host << ":" << port << "\n";
    return kRuntime;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weaklab: prompt-based weak supervision pipeline"};
  app.require_subcommand(1);

  StageArgs args;
  std::string command;
  for (const char* stage : weaklab::kStages) {
    auto* cmd = app.add_subcommand(stage, std::string("run the '") + stage + "' stage from persisted artifacts");
    add_stage_options(cmd, args);
    cmd->callback([&command, stage] { command = stage; });
  }
  auto* run = app.add_subcommand("run", "run every stage in order");
  add_stage_options(run, args);
  run->callback([&command] { command = "run"; });
  auto* check = app.add_subcommand("validate", "check the config and every file it references");
  add_stage_options(check, args);
  check->callback([&command] { command = "validate"; });

  std::string spec_path;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string marker = "<mask>";
  auto* serve = app.add_subcommand("serve-mock", "serve a keyword-table backend over HTTP");
  serve->add_option("--spec", spec_path, "mock backend spec (JSON)")->required()->check(CLI::ExistingFile);
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port");
  serve->add_option("--mask-marker", marker, "mask marker expected in cloze queries");
  serve->callback([&command] { command = "serve-mock"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (command == "serve-mock") return serve_mock(spec_path, host, port, marker);
    auto config = prepare(args);
    if (command == "validate") {
      std::cout << "config ok: " << config.sources.size() << " sources\n";
    } else if (command == "run") {
      weaklab::run_pipeline(config);
      std::cout << "artifacts written to " << config.output_dir.string() << "\n";
    } else {
      weaklab::run_stage(command, config);
      if (command == "report") {
        std::ifstream in(config.output_dir / "summary.md");
        std::cout << in.rdbuf();
      }
    }
  } catch (const weaklab::ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kInvalid;
  } catch (const weaklab::ParseError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kOk;
}
