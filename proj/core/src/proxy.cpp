#include "papillon/proxy.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "papillon/errors.hpp"
#include "papillon/util.hpp"

namespace papillon {

using nlohmann::json;

struct ProxyServer::Impl {
    std::shared_ptr<Pipeline> pipeline;
    ProxyOptions options;
    httplib::Server server;
    std::thread thread;
    std::atomic<int> in_flight{0};
    std::mutex trace_mutex;
    int bound_port = 0;

    void persist_trace(const PipelineTrace& trace) {
        if (!options.tracing || options.run_dir.empty()) return;
        std::lock_guard lock(trace_mutex);
        std::error_code ec;
        std::filesystem::create_directories(options.run_dir, ec);
        std::ofstream out(options.run_dir / "proxy-traces.jsonl",
                          std::ios::app | std::ios::binary);
        out << trace_to_json(trace) << "\n";
    }
};

namespace {

void reply_error(httplib::Response& res, int status, const std::string& message) {
    res.status = status;
    res.set_content(json{{"error", {{"message", message}, {"code", status}}}}.dump(),
                    "application/json");
}

}  // namespace

ProxyServer::ProxyServer(std::shared_ptr<Pipeline> pipeline, ProxyOptions options)
    : impl_(std::make_unique<Impl>()) {
    impl_->pipeline = std::move(pipeline);
    impl_->options = std::move(options);

    impl_->server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(json{{"status", "ok"}}.dump(), "application/json");
    });

    impl_->server.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                      httplib::Response& res) {
        Impl& impl = *impl_;

        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::exception&) {
            reply_error(res, 400, "request body is not valid JSON");
            return;
        }
        if (!body.contains("messages") || !body["messages"].is_array() ||
            body["messages"].empty()) {
            reply_error(res, 400, "messages must be a non-empty array");
            return;
        }

        // Single-turn scope: a request carrying assistant turns is a
        // conversation, which this service does not delegate.
        std::string query;
        for (const auto& m : body["messages"]) {
            const std::string role = m.value("role", "");
            if (role == "assistant") {
                reply_error(res, 400,
                            "multi-turn conversations are not supported; send a single-turn "
                            "user query");
                return;
            }
            if (role == "user" && m.contains("content") && m["content"].is_string()) {
                if (!query.empty()) query += "\n";
                query += m["content"].get<std::string>();
            }
        }
        if (util::trim(query).empty()) {
            reply_error(res, 400, "request contains no user content");
            return;
        }

        if (impl.in_flight.fetch_add(1) >= impl.options.concurrency_limit) {
            impl.in_flight.fetch_sub(1);
            reply_error(res, 429, "concurrency limit reached, retry later");
            return;
        }

        try {
            const std::string query_id = util::fnv1a64_hex(query);
            const PipelineTrace trace = impl.pipeline->run(query_id, query);
            impl.persist_trace(trace);

            std::vector<TokenUsage> usages;
            for (const auto& [stage, usage] : trace.usage_by_stage) usages.push_back(usage);
            const TokenUsage total = accumulate_usage(usages);

            json out;
            out["id"] = "chatcmpl-" + query_id;
            out["object"] = "chat.completion";
            out["created"] = static_cast<std::int64_t>(
                std::chrono::duration_cast<std::chrono::seconds>(
                    std::chrono::system_clock::now().time_since_epoch())
                    .count());
            out["model"] = body.value("model", "papillon");
            out["choices"] = json::array({{{"index", 0},
                                           {"message", {{"role", "assistant"},
                                                        {"content", trace.final_output}}},
                                           {"finish_reason", "stop"}}});
            out["usage"] = {{"prompt_tokens", total.prompt_tokens},
                            {"completion_tokens", total.completion_tokens},
                            {"total_tokens", total.prompt_tokens + total.completion_tokens}};
            // Auditable without logging content: operators can match this
            // digest against their own record of the created prompt.
            res.set_header("X-Created-Prompt-Digest",
                           util::fnv1a64_hex(trace.created_prompt));
            res.set_content(out.dump(), "application/json");
        } catch (const StageError& e) {
            reply_error(res, 502, e.what());
        } catch (const Error& e) {
            reply_error(res, 502, e.what());
        }
        impl.in_flight.fetch_sub(1);
    });
}

ProxyServer::~ProxyServer() {
    stop();
}

int ProxyServer::start() {
    Impl& impl = *impl_;
    if (impl.options.port == 0) {
        impl.bound_port = impl.server.bind_to_any_port(impl.options.host);
    } else {
        if (!impl.server.bind_to_port(impl.options.host, impl.options.port)) {
            throw IoError("cannot bind to port " + std::to_string(impl.options.port));
        }
        impl.bound_port = impl.options.port;
    }
    impl.thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl.server.wait_until_ready();
    return impl.bound_port;
}

void ProxyServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) {
        impl_->thread.join();
    }
}

void ProxyServer::run() {
    Impl& impl = *impl_;
    if (impl.options.port == 0) {
        throw ConfigError("serve needs an explicit port");
    }
    if (!impl.server.bind_to_port(impl.options.host, impl.options.port)) {
        throw IoError("cannot bind to port " + std::to_string(impl.options.port));
    }
    impl.bound_port = impl.options.port;
    impl.server.listen_after_bind();
}

}  // namespace papillon
