#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <thread>

#include "phenoeval/model_client.hpp"

namespace phenoeval {
namespace {

// A completion server that misbehaves on demand.
class FaultServer {
 public:
  FaultServer() {
    server_.Post("/api/generate", [this](const httplib::Request& req, httplib::Response& res) {
      const int n = ++calls_;
      last_body_ = req.body;
      last_ordinal_ = req.get_header_value("X-Request-Ordinal");
      const int now = ++inflight_;
      int p = peak_.load();
      while (now > p && !peak_.compare_exchange_weak(p, now)) {
      }
      if (n <= hang_first_) std::this_thread::sleep_for(std::chrono::milliseconds(400));
      if (delay_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
      --inflight_;
      if (status_ != 200) {
        res.status = status_;
        res.set_content("overloaded", "text/plain");
        return;
      }
      res.set_content(nlohmann::json{{"response", "Q4: YES"}, {"done", true}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FaultServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/api/generate"; }

  int hang_first_ = 0;
  int delay_ms_ = 0;
  int status_ = 200;
  std::atomic<int> calls_{0};
  std::atomic<int> inflight_{0};
  std::atomic<int> peak_{0};
  std::string last_body_;
  std::string last_ordinal_;

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

ModelConfig config(const std::string& url, int retries, std::chrono::milliseconds timeout = std::chrono::seconds(5)) {
  ModelConfig c;
  c.model_name = "phi";
  c.endpoint_url = url;
  c.max_retries = retries;
  c.request_timeout = timeout;
  return c;
}

TEST(HttpClient, SendsPayloadAndOrdinal) {
  FaultServer server;
  HttpModelClient client(config(server.url(), 0));
  const auto c = client.complete(PromptText{"classify this"}, 42);
  EXPECT_EQ(c.raw_text, "Q4: YES");
  EXPECT_EQ(c.attempt_count, 1);
  const auto body = nlohmann::json::parse(server.last_body_);
  EXPECT_EQ(body["prompt"], "classify this");
  EXPECT_EQ(body["model"], "phi");
  EXPECT_EQ(body["stream"], false);
  EXPECT_EQ(server.last_ordinal_, "42");
}

TEST(HttpClient, RetriesTimeoutsThenSucceeds) {
  FaultServer server;
  server.hang_first_ = 2;
  HttpModelClient client(config(server.url(), 3, std::chrono::milliseconds(150)));
  const auto c = client.complete(PromptText{"p"}, 1);
  EXPECT_EQ(c.attempt_count, 3);
  EXPECT_EQ(c.raw_text, "Q4: YES");
  EXPECT_LT(c.latency, std::chrono::milliseconds(150));
}

TEST(HttpClient, UnreachableServerIsATransportError) {
  // Grab a free port and release it so nothing listens there.
  int port = 0;
  {
    httplib::Server tmp;
    port = tmp.bind_to_any_port("127.0.0.1");
  }
  HttpModelClient client(config("http://127.0.0.1:" + std::to_string(port) + "/api/generate", 0));
  try {
    client.complete(PromptText{"p"}, 1);
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_EQ(e.attempt_log().size(), 1u);
  }
}

TEST(HttpClient, ServerErrorIsNotRetried) {
  FaultServer server;
  server.status_ = 503;
  HttpModelClient client(config(server.url(), 3));
  try {
    client.complete(PromptText{"p"}, 1);
    FAIL();
  } catch (const ServerError& e) {
    EXPECT_EQ(e.status(), 503);
  }
  EXPECT_EQ(server.calls_.load(), 1);
}

TEST(HttpClient, MaxInflightBoundsConcurrentRequests) {
  FaultServer server;
  server.delay_ms_ = 30;
  ModelConfig c = config(server.url(), 0);
  c.max_inflight = 2;
  HttpModelClient client(c);
  {
    std::vector<std::jthread> threads;
    for (int i = 0; i < 8; ++i) threads.emplace_back([&, i] { client.complete(PromptText{"p"}, i + 1); });
  }
  EXPECT_EQ(server.calls_.load(), 8);
  EXPECT_LE(server.peak_.load(), 2);
  EXPECT_EQ(server.peak_.load(), 2);
}

}  // namespace
}  // namespace phenoeval
