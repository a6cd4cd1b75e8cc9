#include "simbil/service.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <set>

#include "httplib.h"
#include "simbil/error.hpp"
#include "simbil/kernels.hpp"

namespace simbil {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string now_iso()
{
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Write-then-rename so readers never see a half-written document.
void write_atomic(const fs::path& path, const std::string& text)
{
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    write_text(tmp, text);
    fs::rename(tmp, path);
}

int env_int(const char* name, int fallback)
{
    const char* v = std::getenv(name);
    if (!v || !*v) return fallback;
    try {
        return std::stoi(v);
    } catch (const std::exception&) {
        throw ConfigError(std::string(name) + " must be an integer, got '" + v + "'");
    }
}

} // namespace

ServiceOptions options_from_env(ServiceOptions base)
{
    if (const char* d = std::getenv("SIMBIL_DATA"); d && *d) base.data_dir = d;
    base.workers = env_int("SIMBIL_WORKERS", base.workers);
    if (base.workers < 1) throw ConfigError("worker count must be at least 1");
    return base;
}

std::string to_string(JobStatus s)
{
    switch (s) {
    case JobStatus::queued: return "queued";
    case JobStatus::running: return "running";
    case JobStatus::failed: return "failed";
    case JobStatus::done: return "done";
    }
    return "unknown";
}

JobStatus job_status_from_string(const std::string& s)
{
    if (s == "queued") return JobStatus::queued;
    if (s == "running") return JobStatus::running;
    if (s == "failed") return JobStatus::failed;
    if (s == "done") return JobStatus::done;
    throw ParseError("/status", "unknown job status '" + s + "'");
}

json serialize(const Session& s)
{
    return {{"id", s.id},
            {"image_ref", s.image_ref},
            {"original", serialize(s.original)},
            {"current", serialize(s.current)},
            {"history", serialize(s.history)},
            {"submitted", s.submitted},
            {"created", s.created},
            {"updated", s.updated}};
}

Session parse_session(const json& j)
{
    Session s;
    s.id = j.at("id").get<std::string>();
    s.image_ref = j.at("image_ref").get<std::string>();
    s.original = parse_scene_graph(j.at("original"));
    s.current = parse_scene_graph(j.at("current"));
    s.history = parse_edit_ops(j.at("history"));
    s.submitted = j.at("submitted").get<std::size_t>();
    s.created = j.at("created").get<std::string>();
    s.updated = j.at("updated").get<std::string>();
    return s;
}

json serialize(const Job& j)
{
    json progress{{"step", j.progress.step},
                  {"steps", j.progress.steps},
                  {"step_name", j.progress.step_name},
                  {"iteration", j.progress.iteration},
                  {"iterations", j.progress.iterations},
                  {"loss", j.progress.loss ? json(*j.progress.loss) : json(nullptr)}};
    return {{"id", j.id},
            {"session_id", j.session_id},
            {"ops", serialize(j.ops)},
            {"config", serialize(j.config)},
            {"status", to_string(j.status)},
            {"progress", progress},
            {"error", j.error},
            {"failed_step", j.failed_step},
            {"created", j.created},
            {"updated", j.updated}};
}

Job parse_job(const json& j)
{
    Job job;
    job.id = j.at("id").get<std::string>();
    job.session_id = j.at("session_id").get<std::string>();
    job.ops = parse_edit_ops(j.at("ops"));
    job.config = parse_pipeline_config(j.at("config"));
    job.status = job_status_from_string(j.at("status").get<std::string>());
    const json& p = j.at("progress");
    job.progress.step = p.at("step").get<int>();
    job.progress.steps = p.at("steps").get<int>();
    job.progress.step_name = p.at("step_name").get<std::string>();
    job.progress.iteration = p.at("iteration").get<int>();
    job.progress.iterations = p.at("iterations").get<int>();
    if (!p.at("loss").is_null()) job.progress.loss = p.at("loss").get<double>();
    job.error = j.at("error").get<std::string>();
    job.failed_step = j.at("failed_step").get<int>();
    job.created = j.at("created").get<std::string>();
    job.updated = j.at("updated").get<std::string>();
    return job;
}

Service::Service(ServiceOptions options) : options_(std::move(options))
{
    if (options_.workers < 1) throw ConfigError("worker count must be at least 1");
    fs::create_directories(options_.data_dir / "sessions");
    fs::create_directories(options_.data_dir / "jobs");
    load();
}

Service::~Service() { stop(); }

void Service::load()
{
    const fs::path index = options_.data_dir / "index.json";
    if (!fs::exists(index)) return;
    const json j = json::parse(read_text(index));
    counter_ = j.at("counter").get<std::uint64_t>();
    for (const auto& id : j.at("sessions").get<std::vector<std::string>>())
        sessions_[id] = parse_session(json::parse(read_text(options_.data_dir / "sessions" / id / "session.json")));
    for (const auto& id : j.at("jobs").get<std::vector<std::string>>())
        jobs_[id] = parse_job(json::parse(read_text(job_dir(id) / "status.json")));
    // Interrupted jobs first, then the queue in submission order.
    for (const auto& [id, job] : jobs_)
        if (job.status == JobStatus::running) queue_.push_back(id);
    for (const auto& [id, job] : jobs_)
        if (job.status == JobStatus::queued) queue_.push_back(id);
}

void Service::save_index()
{
    json sessions = json::array(), jobs = json::array();
    for (const auto& [id, s] : sessions_) sessions.push_back(id);
    for (const auto& [id, j] : jobs_) jobs.push_back(id);
    write_atomic(options_.data_dir / "index.json",
                 json{{"counter", counter_}, {"sessions", sessions}, {"jobs", jobs}}.dump(2) + "\n");
}

void Service::save_session(const Session& s)
{
    write_atomic(options_.data_dir / "sessions" / s.id / "session.json", serialize(s).dump(2) + "\n");
}

void Service::save_job(const Job& j) { write_atomic(job_dir(j.id) / "status.json", serialize(j).dump(2) + "\n"); }

std::string Service::next_id(const char* prefix)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%06llu", prefix, static_cast<unsigned long long>(++counter_));
    return buf;
}

fs::path Service::job_dir(const std::string& id) const { return options_.data_dir / "jobs" / id; }

fs::path Service::session_image(const std::string& id) const
{
    return options_.data_dir / "sessions" / id / "image.png";
}

Session Service::create_session(std::span<const std::uint8_t> png, const json& graph_doc)
{
    const Image image = decode_png(png);
    if (image.width() > options_.max_side || image.height() > options_.max_side)
        throw ValidationError("image " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                              " exceeds the " + std::to_string(options_.max_side) + "x" +
                              std::to_string(options_.max_side) + " limit");
    SceneGraph g = parse_scene_graph(graph_doc);
    if (g.width != image.width() || g.height != image.height())
        throw ParseError("/width", "graph size " + std::to_string(g.width) + "x" + std::to_string(g.height) +
                                       " does not match the image");
    std::lock_guard lock(mutex_);
    Session s;
    s.id = next_id("s");
    s.image_ref = g.image_ref;
    s.original = g;
    s.current = g;
    s.created = s.updated = now_iso();
    write_file(session_image(s.id), png);
    save_session(s);
    sessions_[s.id] = s;
    save_index();
    return s;
}

Session Service::get_session(const std::string& id) const
{
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFoundError("no session '" + id + "'");
    return it->second;
}

Session Service::append_ops(const std::string& session_id, const json& doc)
{
    const std::vector<EditOp> ops = parse_edit_ops(doc);
    if (ops.empty()) throw ParseError("", "no ops given");
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw NotFoundError("no session '" + session_id + "'");
    Session s = it->second;
    for (std::size_t i = 0; i < ops.size(); ++i) {
        try {
            s.current = apply_edit(s.current, ops[i]);
        } catch (const ParseError&) {
            throw;
        } catch (const Error& e) {
            if (e.kind() == Error::Kind::not_found || e.kind() == Error::Kind::validation ||
                e.kind() == Error::Kind::conflict)
                throw ParseError(ops.size() > 1 ? "/" + std::to_string(i) : "", e.what());
            throw;
        }
        s.history.push_back(ops[i]);
    }
    s.updated = now_iso();
    save_session(s);
    it->second = s;
    return s;
}

Job Service::submit_job(const std::string& session_id, const json& spec)
{
    const PipelineConfig config =
        spec.is_null() || (spec.is_object() && spec.empty()) ? options_.defaults
                                                              : parse_pipeline_config(spec, options_.defaults);
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw NotFoundError("no session '" + session_id + "'");
    Session& s = it->second;
    if (s.submitted >= s.history.size()) throw ConflictError("session '" + session_id + "' has no pending ops");
    // Validate the batch before queueing so the client sees conflicts now.
    plan(s.original, s.history);
    Job job;
    job.id = next_id("j");
    job.session_id = session_id;
    job.ops = s.history;
    job.config = config;
    job.created = job.updated = now_iso();
    save_job(job);
    s.submitted = s.history.size();
    s.updated = job.created;
    save_session(s);
    jobs_[job.id] = job;
    save_index();
    queue_.push_back(job.id);
    cv_.notify_one();
    return job;
}

Job Service::get_job(const std::string& id) const
{
    std::lock_guard lock(mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) throw NotFoundError("no job '" + id + "'");
    return it->second;
}

std::vector<std::string> Service::job_ids() const
{
    std::lock_guard lock(mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, j] : jobs_) ids.push_back(id);
    return ids;
}

std::vector<std::string> Service::session_ids() const
{
    std::lock_guard lock(mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, s] : sessions_) ids.push_back(id);
    return ids;
}

json Service::session_view(const Session& s) const
{
    std::set<std::string> predicates(options_.extra_predicates.begin(), options_.extra_predicates.end());
    for (const auto& e : s.original.edges) predicates.insert(e.predicate);
    for (const auto& e : s.current.edges) predicates.insert(e.predicate);
    json jobs = json::array();
    {
        std::lock_guard lock(mutex_);
        for (const auto& [id, j] : jobs_)
            if (j.session_id == s.id) jobs.push_back(id);
    }
    return {{"id", s.id},
            {"image_ref", s.image_ref},
            {"graph", serialize(s.current)},
            {"original_graph", serialize(s.original)},
            {"history", serialize(s.history)},
            {"pending", s.history.size() - s.submitted},
            {"predicates", std::vector<std::string>(predicates.begin(), predicates.end())},
            {"jobs", jobs},
            {"created", s.created},
            {"updated", s.updated}};
}

json Service::job_view(const Job& j) const
{
    json v = serialize(j);
    v.erase("config");
    v.erase("ops");
    v["op_count"] = j.ops.size();
    return v;
}

json Service::result_view(const std::string& job_id) const
{
    const Job job = get_job(job_id);
    if (job.status != JobStatus::done)
        throw ConflictError("job '" + job_id + "' is " + to_string(job.status) + ", not done");
    const fs::path dir = job_dir(job_id);
    const json metrics = json::parse(read_text(dir / "metrics.json"));
    const auto png = read_file(dir / "result.png");
    json steps = json::array();
    std::vector<fs::path> step_dirs;
    for (const auto& e : fs::directory_iterator(dir / "steps"))
        if (e.is_directory()) step_dirs.push_back(e.path());
    std::sort(step_dirs.begin(), step_dirs.end());
    for (std::size_t i = 0; i < step_dirs.size(); ++i) steps.push_back(step_view(job_id, static_cast<int>(i) + 1));
    return {{"job_id", job_id},
            {"metrics", metrics},
            {"roi", metrics.at("roi")},
            {"image", {{"content_type", "image/png"}, {"base64", base64_encode(png)}}},
            {"graph_after", json::parse(read_text(dir / "graph_after.json"))},
            {"artifacts", {{"root", {"config.json", "graph_before.json", "graph_after.json", "ops.json",
                                     "result.png", "metrics.json", "log.txt"}},
                           {"steps", steps}}}};
}

json Service::step_view(const std::string& job_id, int step) const
{
    get_job(job_id);
    const fs::path steps_dir = job_dir(job_id) / "steps";
    std::vector<fs::path> dirs;
    if (fs::exists(steps_dir))
        for (const auto& e : fs::directory_iterator(steps_dir))
            if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    if (step < 1 || step > static_cast<int>(dirs.size()))
        throw NotFoundError("job '" + job_id + "' has no step " + std::to_string(step));
    const fs::path d = dirs[static_cast<std::size_t>(step - 1)];
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(d))
        if (e.is_regular_file() && e.path().filename().string().rfind("state", 0) != 0 &&
            e.path().filename() != "complete")
            files.push_back(e.path().filename().string());
    std::sort(files.begin(), files.end());
    const std::string name = d.filename().string();
    return {{"index", step},
            {"name", name.substr(name.find('_') + 1)},
            {"dir", "steps/" + name},
            {"complete", fs::exists(d / "complete")},
            {"files", files}};
}

void Service::start()
{
    std::lock_guard lock(mutex_);
    if (!threads_.empty()) return;
    stopping_ = false;
    for (int i = 0; i < options_.workers; ++i) threads_.emplace_back([this] { worker_loop(); });
}

void Service::stop()
{
    {
        std::lock_guard lock(mutex_);
        stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
    threads_.clear();
}

bool Service::wait_idle(double timeout_seconds)
{
    std::unique_lock lock(mutex_);
    return idle_cv_.wait_for(lock, std::chrono::duration<double>(timeout_seconds),
                             [&] { return queue_.empty() && active_ == 0; });
}

void Service::worker_loop()
{
    for (;;) {
        std::string id;
        {
            std::unique_lock lock(mutex_);
            cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
            if (stopping_) return;
            id = queue_.front();
            queue_.pop_front();
            ++active_;
        }
        run_job(id);
        {
            std::lock_guard lock(mutex_);
            --active_;
        }
        idle_cv_.notify_all();
    }
}

void Service::run_job(const std::string& id)
{
    Job job;
    Session session;
    {
        std::lock_guard lock(mutex_);
        Job& j = jobs_.at(id);
        j.status = JobStatus::running;
        j.updated = now_iso();
        save_job(j);
        job = j;
        session = sessions_.at(j.session_id);
    }
    auto finish = [&](JobStatus status, const std::string& error, int failed_step) {
        std::lock_guard lock(mutex_);
        Job& j = jobs_.at(id);
        j.status = status;
        j.error = error;
        j.failed_step = failed_step;
        j.updated = now_iso();
        save_job(j);
    };
    try {
        const Image image = read_png(session_image(session.id));
        const PipelinePlan p = plan(session.original, job.ops);
        ExecuteOptions eo;
        eo.job_dir = job_dir(id);
        eo.progress = [&](const PipelineProgress& pr) {
            std::lock_guard lock(mutex_);
            Job& j = jobs_.at(id);
            j.progress.step = pr.step + 1;
            j.progress.steps = pr.steps;
            j.progress.step_name = to_string(pr.kind);
            j.progress.iteration = pr.iteration;
            j.progress.iterations = pr.iterations;
            if (pr.iterations > 0) j.progress.loss = pr.loss.total;
            const bool boundary = pr.iterations == 0 || pr.iteration == pr.iterations ||
                                  pr.iteration % std::max(1, options_.progress_every) == 0;
            if (boundary) {
                j.updated = now_iso();
                save_job(j);
            }
        };
        execute(p, image, session.original, job.config, eo);
        finish(JobStatus::done, "", 0);
    } catch (const StepError& e) {
        finish(JobStatus::failed, e.what(), e.step());
    } catch (const std::exception& e) {
        finish(JobStatus::failed, e.what(), 0);
    }
}

namespace {

int status_for(const Error& e)
{
    switch (e.kind()) {
    case Error::Kind::not_found: return 404;
    case Error::Kind::conflict: return 409;
    case Error::Kind::validation:
    case Error::Kind::usage: return 422;
    case Error::Kind::runtime: return 500;
    }
    return 500;
}

void send_json(httplib::Response& res, int status, const json& body)
{
    res.status = status;
    res.set_content(body.dump(2), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message, const std::string& path = "")
{
    json body{{"error", message}};
    if (!path.empty()) body["path"] = path;
    send_json(res, status, body);
}

// Wraps a handler so library errors map onto status codes.
template <typename F>
httplib::Server::Handler guarded(F f)
{
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const ParseError& e) {
            send_error(res, 422, e.what(), e.path().empty() ? "/" : e.path());
        } catch (const Error& e) {
            send_error(res, status_for(e), e.what());
        } catch (const json::exception& e) {
            send_error(res, 422, std::string("malformed JSON: ") + e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, e.what());
        }
    };
}

json body_json(const httplib::Request& req)
{
    if (req.body.empty()) return nullptr;
    return json::parse(req.body);
}

std::string content_type_for(const fs::path& p)
{
    const std::string ext = p.extension().string();
    if (ext == ".png") return "image/png";
    if (ext == ".json") return "application/json";
    if (ext == ".csv") return "text/csv";
    return "text/plain";
}

} // namespace

void Service::register_routes(httplib::Server& server)
{
    server.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200,
                  {{"status", "ok"},
                   {"name", "simbil"},
                   {"version", "0.1.0"},
                   {"compiler", __VERSION__},
                   {"threads", kernels::max_threads()},
                   {"workers", options_.workers}});
    }));

    server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
        std::string png;
        json graph;
        if (req.is_multipart_form_data()) {
            if (!req.has_file("image")) throw ParseError("/image", "missing image part");
            if (!req.has_file("graph")) throw ParseError("/graph", "missing graph part");
            png = req.get_file_value("image").content;
            graph = json::parse(req.get_file_value("graph").content);
        } else {
            const json body = body_json(req);
            if (!body.is_object()) throw ParseError("", "expected multipart form or JSON object");
            if (!body.contains("image") || !body["image"].is_string())
                throw ParseError("/image", "expected base64 PNG string");
            if (!body.contains("graph")) throw ParseError("/graph", "missing");
            const auto bytes = base64_decode(body["image"].get<std::string>());
            png.assign(bytes.begin(), bytes.end());
            graph = body["graph"];
        }
        const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(png.data()), png.size());
        Session s;
        try {
            s = create_session(bytes, graph);
        } catch (const ParseError& e) {
            throw ParseError("/graph" + e.path(), std::string(e.what()).substr(e.path().size() + 2));
        }
        send_json(res, 201, {{"session_id", s.id}, {"session", session_view(s)}});
    }));

    server.Get(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
        send_json(res, 200, session_view(get_session(req.matches[1])));
    }));

    server.Get(R"(/sessions/([^/]+)/image)", guarded([this](const httplib::Request& req, httplib::Response& res) {
        get_session(req.matches[1]);
        const auto bytes = read_file(session_image(req.matches[1]));
        res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
    }));

    server.Post(R"(/sessions/([^/]+)/ops)", guarded([this](const httplib::Request& req, httplib::Response& res) {
        const Session s = append_ops(req.matches[1], body_json(req));
        send_json(res, 200, session_view(s));
    }));

    server.Post(R"(/sessions/([^/]+)/jobs)", guarded([this](const httplib::Request& req, httplib::Response& res) {
        const json body = body_json(req);
        const json spec = body.is_object() && body.contains("spec") ? body["spec"] : body;
        const Job j = submit_job(req.matches[1], spec);
        send_json(res, 202, {{"job_id", j.id}, {"status", to_string(j.status)}});
    }));

    server.Get(R"(/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
        send_json(res, 200, job_view(get_job(req.matches[1])));
    }));

    server.Get(R"(/jobs/([^/]+)/result)", guarded([this](const httplib::Request& req, httplib::Response& res) {
        send_json(res, 200, result_view(req.matches[1]));
    }));

    server.Get(R"(/jobs/([^/]+)/steps/(\d+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        const int n = std::stoi(req.matches[2]);
        const json view = step_view(id, n);
        if (!req.has_param("file")) {
            send_json(res, 200, view);
            return;
        }
        const std::string file = req.get_param_value("file");
        const auto& files = view["files"];
        if (std::find(files.begin(), files.end(), file) == files.end())
            throw NotFoundError("step " + std::to_string(n) + " has no file '" + file + "'");
        const fs::path path = job_dir(id) / view["dir"].get<std::string>() / file;
        const auto bytes = read_file(path);
        res.set_content(std::string(bytes.begin(), bytes.end()), content_type_for(path));
    }));
}

HttpService::HttpService(ServiceOptions options)
    : service_(std::make_unique<Service>(std::move(options))), server_(std::make_unique<httplib::Server>())
{
    server_->set_payload_max_length(64u << 20);
    service_->register_routes(*server_);
}

HttpService::~HttpService()
{
    stop();
    service_->stop();
}

int HttpService::bind(const std::string& host, int port)
{
    if (port == 0) {
        const int p = server_->bind_to_any_port(host);
        if (p < 0) throw RuntimeError("could not bind " + host);
        return p;
    }
    if (!server_->bind_to_port(host, port))
        throw RuntimeError("could not bind " + host + ":" + std::to_string(port));
    return port;
}

void HttpService::listen()
{
    service_->start();
    server_->listen_after_bind();
}

void HttpService::stop()
{
    if (server_) server_->stop();
}

} // namespace simbil
