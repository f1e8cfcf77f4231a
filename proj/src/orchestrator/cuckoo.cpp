#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "httplib.h"
#include "json.hpp"
#include "maldistill/orchestrator/backend.hpp"

namespace maldistill::orchestrator {

namespace {

std::string with_id(std::string path, long long id) {
  const auto at = path.find("{id}");
  if (at != std::string::npos) path.replace(at, 4, std::to_string(id));
  return path;
}

}  // namespace

struct CuckooRestBackend::Client {
  httplib::Client http;
  Client(const CuckooConfig& c) : http(c.host, c.port) {
    http.set_connection_timeout(c.timeout_seconds, 0);
    http.set_read_timeout(c.timeout_seconds, 0);
    if (!c.api_token.empty()) http.set_bearer_token_auth(c.api_token);
  }
};

CuckooRestBackend::CuckooRestBackend(CuckooConfig config, SamplePath sample_path)
    : config_(std::move(config)),
      sample_path_(std::move(sample_path)),
      client_(std::make_unique<Client>(config_)) {}

CuckooRestBackend::~CuckooRestBackend() = default;

void CuckooRestBackend::start(const AnalysisJob& job, WorkerId worker) {
  const std::string path = sample_path_(job);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read sample " + path);
  std::ostringstream body;
  body << in.rdbuf();
  const httplib::MultipartFormDataItems items = {
      {"file", body.str(), std::filesystem::path(path).filename().string(), "application/octet-stream"}};
  auto res = client_->http.Post(config_.submit_path, items);
  if (!res || res->status != 200) {
    throw std::runtime_error("sandbox submission failed for " + job.sample_id + ": " +
                             (res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error())));
  }
  const auto reply = nlohmann::json::parse(res->body);
  tasks_[reply.at("task_id").get<long long>()] = {worker, job.id, job.attempts, job.sample_id};
}

std::vector<BackendEvent> CuckooRestBackend::poll(double now) {
  std::vector<BackendEvent> out;
  for (auto it = tasks_.begin(); it != tasks_.end();) {
    const auto& [task_id, t] = *it;
    auto res = client_->http.Get(with_id(config_.status_path, task_id));
    if (!res || res->status != 200) {
      // No answer: no heartbeat, so the monitor's timeout decides.
      ++it;
      continue;
    }
    const auto status = nlohmann::json::parse(res->body).at("task").value("status", "");
    if (status == "reported") {
      auto report = client_->http.Get(with_id(config_.report_path, task_id));
      if (!report || report->status != 200) {
        ++it;
        continue;
      }
      std::filesystem::create_directories(config_.report_dir);
      const auto file = (std::filesystem::path(config_.report_dir) / (t.sample_id + ".json")).string();
      std::ofstream(file) << report->body;
      out.push_back({BackendEvent::Kind::completed, t.worker, now, t.job, t.attempt, file});
      it = tasks_.erase(it);
    } else if (status == "failed_analysis" || status == "failed_processing") {
      out.push_back({BackendEvent::Kind::crashed, t.worker, now, t.job, t.attempt, ""});
      it = tasks_.erase(it);
    } else {
      out.push_back({BackendEvent::Kind::heartbeat, t.worker, now, t.job, t.attempt, ""});
      ++it;
    }
  }
  return out;
}

}  // namespace maldistill::orchestrator
