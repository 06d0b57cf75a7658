#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "papillon/pipeline.hpp"

namespace papillon {

struct ProxyOptions {
    std::string host = "127.0.0.1";
    int port = 8188;           // 0: pick an ephemeral port
    int concurrency_limit = 8;  // simultaneous delegation runs before 429
    bool tracing = false;
    std::filesystem::path run_dir;  // traces land here when tracing is on
};

/// Chat-completions-compatible front end: POST /v1/chat/completions runs the
/// delegation pipeline on the inbound user content and returns the final
/// output; the inbound body itself never goes upstream. GET /healthz reports
/// liveness.
class ProxyServer {
public:
    ProxyServer(std::shared_ptr<Pipeline> pipeline, ProxyOptions options);
    ~ProxyServer();

    ProxyServer(const ProxyServer&) = delete;
    ProxyServer& operator=(const ProxyServer&) = delete;

    /// Binds and serves on a background thread. Returns the bound port.
    int start();
    void stop();

    /// Serves on the calling thread until stop() (CLI entry point).
    void run();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace papillon
