#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "maldistill/orchestrator/orchestrator.hpp"

namespace maldistill::orchestrator {

/// Contract between the orchestrator and a sandbox. start() acknowledges an
/// execution; poll() drains the reports gathered since the last call.
class SandboxBackend {
 public:
  virtual ~SandboxBackend() = default;
  virtual void start(const AnalysisJob& job, WorkerId worker) = 0;
  virtual std::vector<BackendEvent> poll(double now) = 0;
};

struct CuckooConfig {
  std::string host = "127.0.0.1";
  int port = 8090;
  std::string api_token;  // sent as "Authorization: Bearer <token>" when set
  std::string submit_path = "/tasks/create/file";
  std::string status_path = "/tasks/view/{id}";
  std::string report_path = "/tasks/report/{id}";
  std::string report_dir = "reports";
  int timeout_seconds = 30;
};

/// Client for the Cuckoo REST API: uploads the sample as a multipart file,
/// polls task status, and stores finished reports as JSON under report_dir.
/// A task that answers a status query counts as a heartbeat for its worker;
/// "failed_analysis" and "failed_processing" map to a crash.
class CuckooRestBackend final : public SandboxBackend {
 public:
  using SamplePath = std::function<std::string(const AnalysisJob&)>;

  CuckooRestBackend(CuckooConfig config, SamplePath sample_path);
  ~CuckooRestBackend() override;

  void start(const AnalysisJob& job, WorkerId worker) override;
  std::vector<BackendEvent> poll(double now) override;

 private:
  struct Task {
    WorkerId worker;
    JobId job;
    std::size_t attempt;
    std::string sample_id;
  };
  struct Client;

  CuckooConfig config_;
  SamplePath sample_path_;
  std::unique_ptr<Client> client_;
  std::map<long long, Task> tasks_;
};

}  // namespace maldistill::orchestrator
