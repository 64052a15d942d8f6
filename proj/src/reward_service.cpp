#include "qbench/reward_service.hpp"

#include "qbench/errors.hpp"

#include "httplib.h"
#include "nlohmann/json.hpp"

namespace qbench {

namespace {

using ojson = nlohmann::ordered_json;

ojson error_body(const std::string& message) {
  ojson doc;
  doc["schema_version"] = 1;
  doc["error"] = message;
  return doc;
}

}  // namespace

struct RewardService::Impl {
  httplib::Server server;
};

RewardService::RewardService(RewardServiceConfig config)
    : config_(std::move(config)),
      executor_(make_executor(config_.profile)),
      impl_(std::make_unique<Impl>()) {
  if (config_.max_concurrency < 1) {
    throw ConfigError("reward service max_concurrency must be >= 1");
  }
  auto& server = impl_->server;
  const int pool_size = config_.max_concurrency;
  server.new_task_queue = [pool_size] { return new httplib::ThreadPool(pool_size); };
  // SO_REUSEADDR only: the library default also sets SO_REUSEPORT, which would
  // let a second service bind an occupied port instead of reporting contention.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR,
               reinterpret_cast<const void*>(&yes), sizeof(yes));
  });

  server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    const bool available = interpreter_available(config_.profile);
    ojson doc;
    doc["schema_version"] = 1;
    doc["status"] = available ? "ok" : "degraded";
    doc["profile"] = config_.profile.name;
    doc["interpreter_available"] = available;
    res.status = 200;
    res.set_content(doc.dump(), "application/json");
  });

  server.Post("/v1/reward", [this](const httplib::Request& req, httplib::Response& res) {
    ojson body;
    try {
      body = ojson::parse(req.body);
    } catch (const nlohmann::json::parse_error& e) {
      res.status = 400;
      res.set_content(error_body(std::string("malformed JSON body: ") + e.what()).dump(),
                      "application/json");
      return;
    }
    try {
      if (body.contains("profile") && body.at("profile").get<std::string>() !=
                                          config_.profile.name) {
        res.status = 400;
        res.set_content(error_body("this service grades profile '" + config_.profile.name +
                                   "', not '" + body.at("profile").get<std::string>() + "'")
                            .dump(),
                        "application/json");
        return;
      }

      RewardConfig reward_config;
      reward_config.scheme = config_.default_scheme;
      reward_config.perfect_bonus = config_.default_bonus;
      if (body.contains("scheme")) {
        reward_config.scheme = reward_scheme_from_string(body.at("scheme").get<std::string>());
      }
      if (body.contains("bonus")) {
        reward_config.perfect_bonus = body.at("bonus").get<double>();
      }

      if (!body.contains("cases") || !body.at("cases").is_array() || body.at("cases").empty()) {
        res.status = 400;
        res.set_content(error_body("body needs a non-empty 'cases' array").dump(),
                        "application/json");
        return;
      }
      std::vector<TestCase> cases;
      int next_index = 1;
      for (const auto& item : body.at("cases")) {
        TestCase tc;
        tc.index = item.value("index", next_index);
        next_index = tc.index + 1;
        if (item.contains("target_invocation")) {
          tc.target_invocation = item.at("target_invocation").get<std::string>();
        } else if (item.contains("invocation")) {
          tc.target_invocation = item.at("invocation").get<std::string>();
        } else {
          res.status = 400;
          res.set_content(error_body("every case needs 'target_invocation'").dump(),
                          "application/json");
          return;
        }
        if (!item.contains("expected_output")) {
          res.status = 400;
          res.set_content(error_body("every case needs 'expected_output'").dump(),
                          "application/json");
          return;
        }
        tc.expected_output = item.at("expected_output").get<std::string>();
        cases.push_back(std::move(tc));
      }

      std::string code;
      bool parse_failure = false;
      if (body.contains("code")) {
        code = body.at("code").get<std::string>();
      } else if (body.contains("raw_completion")) {
        const std::string raw = body.at("raw_completion").get<std::string>();
        const std::string mode_text = body.value("mode", "reasoning");
        AnswerMode mode;
        if (mode_text == "reasoning") {
          mode = AnswerMode::Reasoning;
        } else if (mode_text == "plain") {
          mode = AnswerMode::Plain;
        } else {
          res.status = 400;
          res.set_content(error_body("mode must be 'reasoning' or 'plain'").dump(),
                          "application/json");
          return;
        }
        auto extracted = extract_answer(raw, mode);
        if (!extracted) {
          parse_failure = true;
        } else {
          code = *extracted;
        }
      } else {
        res.status = 400;
        res.set_content(error_body("body needs 'code' or 'raw_completion'").dump(),
                        "application/json");
        return;
      }

      ojson doc;
      doc["schema_version"] = 1;
      if (parse_failure) {
        doc["reward"] = 0.0;
        doc["parse_failure"] = true;
        doc["per_case"] = ojson::array();
        doc["passed"] = 0;
        doc["total"] = static_cast<int>(cases.size());
        doc["all_passed"] = false;
        res.status = 200;
        res.set_content(doc.dump(), "application/json");
        return;
      }

      Verdict verdict =
          grade_candidate(code, cases, config_.profile, *executor_, nullptr, "", "reward-request");
      doc["reward"] = compute_reward(verdict, reward_config);
      doc["parse_failure"] = false;
      ojson per_case = ojson::array();
      for (const auto& cr : verdict.per_case) {
        ojson entry;
        entry["index"] = cr.index;
        entry["outcome"] = to_string(cr.outcome);
        entry["detail"] = cr.detail;
        per_case.push_back(std::move(entry));
      }
      doc["per_case"] = std::move(per_case);
      doc["passed"] = verdict.passed;
      doc["total"] = verdict.total;
      doc["all_passed"] = verdict.all_passed;
      res.status = 200;
      res.set_content(doc.dump(), "application/json");
    } catch (const EnvironmentError& e) {
      res.status = 503;
      res.set_content(error_body(e.what()).dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(error_body(e.what()).dump(), "application/json");
    }
  });
}

RewardService::~RewardService() {
  stop();
  wait();
}

bool RewardService::start() {
  auto& server = impl_->server;
  if (config_.port == 0) {
    port_ = server.bind_to_any_port(config_.host);
    if (port_ < 0) {
      return false;
    }
  } else {
    if (!server.bind_to_port(config_.host, config_.port)) {
      return false;
    }
    port_ = config_.port;
  }
  running_ = true;
  serve_thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  // listen_after_bind spins up asynchronously; wait until it answers.
  server.wait_until_ready();
  return true;
}

void RewardService::stop() {
  if (running_.exchange(false)) {
    impl_->server.stop();
  }
}

void RewardService::wait() {
  if (serve_thread_.joinable()) {
    serve_thread_.join();
  }
}

}  // namespace qbench
