#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "simbil/pipeline.hpp"

namespace httplib {
class Server;
}

namespace simbil {

struct ServiceOptions {
    std::filesystem::path data_dir = "simbil-data";
    int workers = 1;
    int progress_every = 25; // inpaint iterations between persisted progress updates
    int max_side = 2048;
    PipelineConfig defaults{};
    std::vector<std::string> extra_predicates{"left of", "right of", "front of", "behind"};
};

// SIMBIL_DATA / SIMBIL_WORKERS override the given values when set.
ServiceOptions options_from_env(ServiceOptions base);

struct Session {
    std::string id;
    std::string image_ref;
    SceneGraph original;
    SceneGraph current;
    std::vector<EditOp> history;
    std::size_t submitted = 0; // history prefix already handed to jobs
    std::string created;
    std::string updated;
};

enum class JobStatus { queued, running, failed, done };

std::string to_string(JobStatus s);
JobStatus job_status_from_string(const std::string& s);

struct JobProgress {
    int step = 0;
    int steps = 0;
    std::string step_name;
    int iteration = 0;
    int iterations = 0;
    std::optional<double> loss;
};

struct Job {
    std::string id;
    std::string session_id;
    std::vector<EditOp> ops; // full session history up to submission
    PipelineConfig config;
    JobStatus status = JobStatus::queued;
    JobProgress progress;
    std::string error;
    int failed_step = 0; // 1-based; 0 when not failed
    std::string created;
    std::string updated;
};

nlohmann::json serialize(const Session& s);
Session parse_session(const nlohmann::json& j);
nlohmann::json serialize(const Job& j);
Job parse_job(const nlohmann::json& j);

// Session and job store with a bounded worker pool. Every mutation is
// persisted under data_dir before it becomes visible, so a restarted
// service sees the same sessions, jobs and artifacts.
class Service {
public:
    explicit Service(ServiceOptions options);
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    const ServiceOptions& options() const { return options_; }

    // Transport-independent API; errors are simbil::Error subclasses.
    Session create_session(std::span<const std::uint8_t> png, const nlohmann::json& graph);
    Session get_session(const std::string& id) const;
    Session append_ops(const std::string& session_id, const nlohmann::json& ops);
    Job submit_job(const std::string& session_id, const nlohmann::json& spec);
    Job get_job(const std::string& id) const;
    std::vector<std::string> job_ids() const;
    std::vector<std::string> session_ids() const;
    std::filesystem::path job_dir(const std::string& id) const;
    std::filesystem::path session_image(const std::string& id) const;

    nlohmann::json session_view(const Session& s) const;
    nlohmann::json job_view(const Job& j) const;
    nlohmann::json result_view(const std::string& job_id) const;
    nlohmann::json step_view(const std::string& job_id, int step) const;

    void start();
    void stop();
    // Blocks until no job is queued or running, or the timeout passes.
    bool wait_idle(double timeout_seconds);

    void register_routes(httplib::Server& server);

private:
    void load();
    void save_index();
    void save_session(const Session& s);
    void save_job(const Job& j);
    void worker_loop();
    void run_job(const std::string& id);
    std::string next_id(const char* prefix);

    ServiceOptions options_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable idle_cv_;
    std::map<std::string, Session> sessions_;
    std::map<std::string, Job> jobs_;
    std::deque<std::string> queue_;
    std::uint64_t counter_ = 0;
    int active_ = 0;
    bool stopping_ = false;
    std::vector<std::thread> threads_;
};

// Blocking HTTP server on host:port until stop is requested from another thread.
class HttpService {
public:
    explicit HttpService(ServiceOptions options);
    ~HttpService();

    Service& service() { return *service_; }
    // Binds; returns the bound port (useful with port 0).
    int bind(const std::string& host, int port);
    void listen();
    void stop();

private:
    std::unique_ptr<Service> service_;
    std::unique_ptr<httplib::Server> server_;
};

} // namespace simbil
