#pragma once

#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>

#include <httplib.h>

#include "clinmcq/eval/review.hpp"

namespace clinmcq {

/// Thread-safe annotation store over a bundle. When `path` is set, the bundle
/// (with annotations) is rewritten after every accepted annotation.
class ReviewStore {
 public:
  explicit ReviewStore(ReviewBundle bundle, std::string path = {}) : b_(std::move(bundle)), path_(std::move(path)) {
    for (const auto& a : b_.annotations) {
      if (!b_.find(a.item_id)) throw DataError("annotation references unknown item '" + a.item_id + "'");
      if (!seen_.emplace(a.item_id, a.evaluator_id).second) {
        throw DataError("duplicate annotation for " + a.item_id + " by " + a.evaluator_id);
      }
    }
  }

  enum class AddResult { Ok, UnknownItem, Duplicate };

  AddResult add(Annotation a) {
    std::lock_guard lock(mu_);
    if (!b_.find(a.item_id)) return AddResult::UnknownItem;
    if (!seen_.emplace(a.item_id, a.evaluator_id).second) return AddResult::Duplicate;
    if (a.timestamp.empty()) a.timestamp = utc_timestamp();
    b_.annotations.push_back(std::move(a));
    persist();
    return AddResult::Ok;
  }

  ReviewBundle snapshot() const {
    std::lock_guard lock(mu_);
    return b_;
  }

  json items(const std::optional<std::string>& evaluator) const {
    std::lock_guard lock(mu_);
    json arr = json::array();
    for (const auto& it : b_.items) {
      json j = client_json(it);
      if (evaluator) j["annotated"] = seen_.count({it.item_id, *evaluator}) > 0;
      arr.push_back(std::move(j));
    }
    return json{{"items", arr}, {"total", b_.items.size()}};
  }

  std::optional<json> item(const std::string& id) const {
    std::lock_guard lock(mu_);
    if (const auto* it = b_.find(id)) return client_json(*it);
    return std::nullopt;
  }

  json progress(const std::optional<std::string>& evaluator) const {
    std::lock_guard lock(mu_);
    const auto total = b_.items.size();
    if (evaluator) {
      std::size_t done = 0;
      for (const auto& [item, ev] : seen_) done += ev == *evaluator;
      return json{{"evaluator_id", *evaluator}, {"completed", done}, {"total", total}};
    }
    json per = json::object();
    std::set<std::string> fully;
    for (const auto& [item, ev] : seen_) {
      if (!per.contains(ev)) per[ev] = {{"completed", 0}, {"total", total}};
      per[ev]["completed"] = per[ev]["completed"].get<std::size_t>() + 1;
    }
    std::set<std::string> items_done;
    for (const auto& [item, ev] : seen_) items_done.insert(item);
    return json{{"total_items", total},
                {"annotations", b_.annotations.size()},
                {"items_with_annotations", items_done.size()},
                {"evaluators", per}};
  }

 private:
  void persist() const {
    if (path_.empty()) return;
    const auto tmp = path_ + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot write " + tmp);
      out << to_json(b_).dump(2) << '\n';
    }
    std::rename(tmp.c_str(), path_.c_str());
  }

  ReviewBundle b_;
  std::string path_;
  mutable std::mutex mu_;
  std::set<std::pair<std::string, std::string>> seen_;
};

/// JSON API for the review UI: GET /items, GET /items/{id},
/// POST /annotations, GET /progress. Optionally serves static assets at /.
class ReviewServer {
 public:
  explicit ReviewServer(ReviewStore& store, std::string static_dir = {}) : store_(store) {
    auto reply = [](httplib::Response& res, int status, const json& body) {
      res.status = status;
      res.set_content(body.dump(), "application/json");
    };
    auto evaluator = [](const httplib::Request& req) -> std::optional<std::string> {
      if (req.has_param("evaluator_id")) return req.get_param_value("evaluator_id");
      return std::nullopt;
    };
    svr_.Get("/items", [this, reply, evaluator](const httplib::Request& req, httplib::Response& res) {
      reply(res, 200, store_.items(evaluator(req)));
    });
    svr_.Get(R"(/items/([^/]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
      const auto item = store_.item(req.matches[1].str());
      if (!item) return reply(res, 404, json{{"error", "unknown item"}, {"item_id", req.matches[1].str()}});
      reply(res, 200, *item);
    });
    svr_.Post("/annotations", [this, reply](const httplib::Request& req, httplib::Response& res) {
      Annotation a;
      try {
        a = annotation_from_json(json::parse(req.body));
      } catch (const json::parse_error&) {
        return reply(res, 400, json{{"error", "body is not JSON"}});
      } catch (const Error& e) {
        return reply(res, 400, json{{"error", e.what()}});
      }
      a.timestamp.clear();
      switch (store_.add(a)) {
        case ReviewStore::AddResult::UnknownItem:
          return reply(res, 404, json{{"error", "unknown item"}, {"item_id", a.item_id}});
        case ReviewStore::AddResult::Duplicate:
          return reply(res, 409, json{{"error", "already annotated"}, {"item_id", a.item_id}, {"evaluator_id", a.evaluator_id}});
        case ReviewStore::AddResult::Ok:
          break;
      }
      reply(res, 201, json{{"ok", true}, {"item_id", a.item_id}, {"evaluator_id", a.evaluator_id}});
    });
    svr_.Get("/progress", [this, reply, evaluator](const httplib::Request& req, httplib::Response& res) {
      reply(res, 200, store_.progress(evaluator(req)));
    });
    if (!static_dir.empty() && !svr_.set_mount_point("/", static_dir)) {
      throw IoError("static asset directory not found: " + static_dir);
    }
  }

  ~ReviewServer() { stop(); }

  /// Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    port_ = port == 0 ? svr_.bind_to_any_port(host) : (svr_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw IoError("cannot bind review server to " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { svr_.listen_after_bind(); });
    svr_.wait_until_ready();
    return port_;
  }

  /// Serves on the calling thread until stop().
  void run(const std::string& host, int port) {
    if (!svr_.listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
  }

  void stop() {
    svr_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }

 private:
  ReviewStore& store_;
  httplib::Server svr_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace clinmcq
