#include <csignal>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "rage/service.hpp"

int main(int argc, char** argv) {
  CLI::App app{"HTTP+JSON explanation service."};
  app.name("rage-server");
  std::string config_path;
  std::optional<std::string> host;
  std::optional<int> port;
  app.add_option("--config", config_path, "JSON service config file");
  app.add_option("--host", host, "listen address (overrides config and environment)");
  app.add_option("--port", port, "listen port, 0 picks a free one");
  CLI11_PARSE(app, argc, argv);

  // Block termination signals before any thread starts so only the waiter sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  try {
    rage::service::ServiceConfig config =
        config_path.empty() ? rage::service::ServiceConfig{}
                            : rage::service::ServiceConfig::FromFile(config_path);
    config = config.WithEnvironment();
    if (host) config.host = *host;
    if (port) config.port = *port;

    rage::service::ExplanationService service(config);
    rage::service::ApiServer server(service);
    const int bound = server.Bind(config.host, config.port);
    std::cout << "listening on " << config.host << ":" << bound << std::endl;

    std::thread waiter([&] {
      int sig = 0;
      sigwait(&signals, &sig);
      server.Stop();
    });
    server.Run();
    // Run() also returns on listener failure; wake the waiter in that case.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    return 0;
  } catch (const rage::Error& e) {
    std::cerr << "error: " << rage::ErrorCodeName(e.code()) << ": " << e.what() << '\n';
    return 1;
  }
}
