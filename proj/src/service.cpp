// SPDX-License-Identifier: Apache-2.0
#include "fact/service.hpp"

#include "fact/error.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdio>

namespace fact {

using nlohmann::json;

struct SessionService::Entry {
  Entry(std::string session_id, AcquisitionSession s, double now_wall, Clock::time_point now_steady)
      : id(std::move(session_id)), session(std::move(s)), created(now_wall), updated(now_wall),
        last_used(now_steady) {}

  std::mutex mutex;
  std::string id;
  AcquisitionSession session;
  double created;
  double updated;
  Clock::time_point last_used;
  bool deleted = false;
};

namespace {

double wall_seconds() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

Response error_response(int status, std::string code, const std::string& message) {
  return {status, {{"schema_version", kSchemaVersion}, {"error", {{"code", std::move(code)}, {"message", message}}}}};
}

Response from_error(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kNotFound:
      return error_response(404, "not_found", e.what());
    case ErrorCode::kAlreadyKnown:
    case ErrorCode::kConflict:
    case ErrorCode::kNoUnknownFeatures:
      return error_response(409, "conflict", e.what());
    default:
      return error_response(400, "validation_error", e.what());
  }
}

template <typename Fn>
Response guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    return from_error(e);
  } catch (const json::exception& e) {
    return error_response(400, "validation_error", e.what());
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void reject_unknown_fields(const json& body, std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : body.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw Error(ErrorCode::kInvalidArgument, "unexpected field '" + key + "'");
    }
  }
}

/// Resolves a unit by unit name, feature name, or integer unit id.
std::size_t resolve_unit(const CostSchedule& costs, const json& key) {
  if (key.is_number_integer()) {
    const auto u = key.get<long long>();
    if (u < 0 || static_cast<std::size_t>(u) >= costs.num_units()) {
      throw Error(ErrorCode::kInvalidArgument, "unit id " + std::to_string(u) + " out of range");
    }
    return static_cast<std::size_t>(u);
  }
  if (!key.is_string()) throw Error(ErrorCode::kInvalidArgument, "feature id must be a name or an integer");
  const auto name = key.get<std::string>();
  if (auto u = costs.find_unit(name)) return *u;
  const auto& names = costs.feature_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error(ErrorCode::kInvalidArgument, "unknown feature '" + name + "'");
  const std::size_t unit = costs.unit_of_feature(static_cast<std::size_t>(it - names.begin()));
  if (costs.units()[unit].members.size() != 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "feature '" + name + "' belongs to group '" + costs.units()[unit].name + "'; post the group");
  }
  return unit;
}

/// Raw JSON value(s) for a unit -> normalized member values.
std::vector<double> normalize_unit_values(const ModelBundle& bundle, std::size_t unit, const json& value,
                                          json& warnings) {
  const auto& spec = bundle.costs.units()[unit];
  std::vector<double> raw;
  if (value.is_string()) {
    // A categorical level: one-hot over members named "<group>=<level>".
    const std::string wanted = spec.name + "=" + value.get<std::string>();
    bool found = false;
    for (std::size_t m : spec.members) {
      const bool hit = bundle.costs.feature_names().at(m) == wanted;
      found = found || hit;
      raw.push_back(hit ? 1.0 : 0.0);
    }
    if (!found) {
      throw Error(ErrorCode::kInvalidArgument, "'" + value.get<std::string>() + "' is not a level of '" + spec.name + "'");
    }
  } else if (value.is_number()) {
    raw.push_back(value.get<double>());
  } else if (value.is_array()) {
    for (const auto& v : value) {
      if (!v.is_number()) throw Error(ErrorCode::kInvalidArgument, "values must be numbers");
      raw.push_back(v.get<double>());
    }
  } else {
    throw Error(ErrorCode::kInvalidArgument, "value for '" + spec.name + "' must be a number, array or level");
  }
  if (raw.size() != spec.members.size()) {
    throw Error(ErrorCode::kInvalidArgument, "'" + spec.name + "' needs " + std::to_string(spec.members.size()) +
                                                 " values, got " + std::to_string(raw.size()));
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const std::size_t j = spec.members[i];
    bool clamped = false;
    out.push_back(bundle.normalization.normalize_value(j, raw[i], &clamped));
    if (clamped) {
      warnings.push_back({{"code", "clamped"},
                          {"feature", bundle.costs.feature_names().at(j)},
                          {"raw", raw[i]},
                          {"normalized", out.back()}});
    }
  }
  return out;
}

}  // namespace

SessionService::SessionService(const ModelBundle& bundle, ServiceConfig config)
    : bundle_(&bundle), config_(std::move(config)), now_([] { return Clock::now(); }),
      id_rng_(config_.id_seed ? *config_.id_seed : std::random_device{}()) {
  if (!bundle.trained()) throw Error(ErrorCode::kInvalidArgument, "service needs a trained bundle");
  if (config_.event_log) {
    log_.open(*config_.event_log, std::ios::app);
    if (!log_) throw Error(ErrorCode::kIo, "cannot open event log " + config_.event_log->string());
  }
}

SessionService::~SessionService() = default;

std::string SessionService::new_id() {
  std::lock_guard lock(id_mutex_);
  return hex64(id_rng_()) + hex64(id_rng_());
}

void SessionService::log_event(const json& event) {
  if (!log_.is_open()) return;
  std::lock_guard lock(log_mutex_);
  log_ << event.dump() << '\n';
  log_.flush();
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) {
  std::shared_ptr<Entry> entry;
  {
    std::shared_lock lock(sessions_mutex_);
    const auto it = sessions_.find(id);
    if (it != sessions_.end()) entry = it->second;
  }
  if (!entry) throw Error(ErrorCode::kNotFound, "no session '" + id + "'");
  return entry;
}

std::size_t SessionService::evict_idle() {
  const auto now = now_();
  std::unique_lock lock(sessions_mutex_);
  std::size_t evicted = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    std::unique_lock entry_lock(it->second->mutex, std::try_to_lock);
    if (entry_lock.owns_lock() && now - it->second->last_used > config_.idle_timeout) {
      it->second->deleted = true;
      it = sessions_.erase(it);
      ++evicted;
    } else {
      ++it;
    }
  }
  return evicted;
}

std::size_t SessionService::session_count() const {
  std::shared_lock lock(sessions_mutex_);
  return sessions_.size();
}

json SessionService::prediction_json(const AcquisitionSession& session) const {
  const auto& p = session.prediction();
  const std::size_t cls = session.predicted_class();
  json probs = json::array();
  for (Eigen::Index i = 0; i < p.size(); ++i) probs.push_back(p[i]);
  json out = {{"probabilities", probs}, {"class_index", cls}, {"top_probability", p.maxCoeff()}};
  out["class"] = cls < bundle_->class_names.size() ? json(bundle_->class_names[cls]) : json(nullptr);
  return out;
}

json SessionService::suggestion_json(const AcquisitionSession& session) const {
  json out = {{"exhausted", session.exhausted()}, {"candidates", json::array()}};
  if (session.exhausted()) return out;
  auto scores = score_features(*bundle_, session);
  std::stable_sort(scores.begin(), scores.end(), [](const AcquisitionScore& a, const AcquisitionScore& b) {
    return a.score > b.score || (a.score == b.score && a.unit < b.unit);
  });
  const std::size_t n = std::min(scores.size(), kMaxSuggestions);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& s = scores[r];
    out["candidates"].push_back({{"rank", r + 1},
                                 {"id", bundle_->costs.units()[s.unit].name},
                                 {"unit", s.unit},
                                 {"score", s.score},
                                 {"numerator", s.numerator},
                                 {"cost", s.cost}});
  }
  return out;
}

json SessionService::state_json(const Entry& entry) const {
  const auto& s = entry.session;
  const auto& names = bundle_->costs.feature_names();
  json values = json::object();
  json initial = json::array();
  for (std::size_t j = 0; j < s.known().size(); ++j) {
    if (s.known()[j]) {
      values[names[j]] = bundle_->normalization.denormalize_value(j, s.values()[static_cast<Eigen::Index>(j)]);
    }
    if (s.initial_known()[j]) initial.push_back(names[j]);
  }
  json history = json::array();
  for (const auto& e : s.history()) {
    const auto& unit = bundle_->costs.units()[e.unit];
    json raw = json::array();
    for (std::size_t i = 0; i < unit.members.size(); ++i) {
      raw.push_back(bundle_->normalization.denormalize_value(unit.members[i], e.values[i]));
    }
    history.push_back({{"step", e.step},
                       {"id", unit.name},
                       {"unit", e.unit},
                       {"score", e.score},
                       {"cost", unit.cost},
                       {"values", raw},
                       {"normalized_values", e.values},
                       {"total_cost", e.total_cost}});
  }
  return {{"schema_version", kSchemaVersion},
          {"id", entry.id},
          {"created", entry.created},
          {"updated", entry.updated},
          {"model_fingerprint", hex64(bundle_->dataset_fingerprint)},
          {"step", s.step()},
          {"total_cost", s.total_cost()},
          {"initially_known", initial},
          {"values", values},
          {"history", history},
          {"exhausted", s.exhausted()},
          {"prediction", prediction_json(s)}};
}

Response SessionService::health() const {
  return {200, {{"schema_version", kSchemaVersion}, {"status", "ok"}, {"sessions", session_count()}}};
}

Response SessionService::model() const {
  json body = bundle_manifest(*bundle_);
  body["schema_version"] = kSchemaVersion;
  json units = json::array();
  for (std::size_t u = 0; u < bundle_->costs.num_units(); ++u) {
    const auto& unit = bundle_->costs.units()[u];
    json members = json::array();
    for (std::size_t m : unit.members) members.push_back(bundle_->costs.feature_names().at(m));
    units.push_back({{"unit", u}, {"id", unit.name}, {"cost", unit.cost}, {"members", members}});
  }
  body["units"] = units;
  body["total_cost"] = bundle_->costs.total_cost();
  return {200, body};
}

Response SessionService::list_sessions() {
  evict_idle();
  json ids = json::array();
  {
    std::shared_lock lock(sessions_mutex_);
    for (const auto& [id, entry] : sessions_) ids.push_back(id);
  }
  return {200, {{"schema_version", kSchemaVersion}, {"count", ids.size()}, {"sessions", ids}}};
}

Response SessionService::create_session(const json& body) {
  return guarded([&]() -> Response {
    evict_idle();
    const std::size_t d = bundle_->num_features();
    MaskVector known = all_unknown(d);
    Eigen::VectorXd values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    json warnings = json::array();
    if (!body.is_null()) {
      if (!body.is_object()) throw Error(ErrorCode::kInvalidArgument, "body must be a JSON object");
      reject_unknown_fields(body, {"values"});
      if (body.contains("values")) {
        const auto& given = body.at("values");
        if (!given.is_object()) throw Error(ErrorCode::kInvalidArgument, "'values' must be an object");
        for (const auto& [key, value] : given.items()) {
          const std::size_t unit = resolve_unit(bundle_->costs, json(key));
          const auto& spec = bundle_->costs.units()[unit];
          if (known[spec.members.front()]) {
            throw Error(ErrorCode::kInvalidArgument, "'" + spec.name + "' given more than once");
          }
          const auto normalized = normalize_unit_values(*bundle_, unit, value, warnings);
          for (std::size_t i = 0; i < spec.members.size(); ++i) {
            known[spec.members[i]] = 1;
            values[static_cast<Eigen::Index>(spec.members[i])] = normalized[i];
          }
        }
      }
    }
    AcquisitionSession session(*bundle_, known, values);
    const std::string id = new_id();
    auto entry = std::make_shared<Entry>(id, std::move(session), wall_seconds(), now_());
    {
      std::unique_lock lock(sessions_mutex_);
      sessions_.emplace(id, entry);
    }
    json known_idx = json::array();
    json known_val = json::array();
    for (std::size_t j = 0; j < d; ++j) {
      if (known[j]) {
        known_idx.push_back(j);
        known_val.push_back(values[static_cast<Eigen::Index>(j)]);
      }
    }
    log_event({{"event", "create"}, {"session", id}, {"known", known_idx}, {"values", known_val}});
    std::lock_guard lock(entry->mutex);
    json out = state_json(*entry);
    out["warnings"] = warnings;
    return {201, out};
  });
}

Response SessionService::get_session(const std::string& id) {
  return guarded([&]() -> Response {
    auto entry = find(id);
    std::lock_guard lock(entry->mutex);
    if (entry->deleted) throw Error(ErrorCode::kNotFound, "no session '" + id + "'");
    entry->last_used = now_();
    return {200, state_json(*entry)};
  });
}

Response SessionService::get_suggestion(const std::string& id) {
  return guarded([&]() -> Response {
    auto entry = find(id);
    std::lock_guard lock(entry->mutex);
    if (entry->deleted) throw Error(ErrorCode::kNotFound, "no session '" + id + "'");
    entry->last_used = now_();
    json out = suggestion_json(entry->session);
    out["schema_version"] = kSchemaVersion;
    out["session"] = id;
    out["step"] = entry->session.step();
    out["total_cost"] = entry->session.total_cost();
    out["prediction"] = prediction_json(entry->session);
    return {200, out};
  });
}

Response SessionService::post_feature(const std::string& id, const json& body) {
  return guarded([&]() -> Response {
    auto entry = find(id);
    if (!body.is_object()) throw Error(ErrorCode::kInvalidArgument, "body must be a JSON object");
    const bool by_group = body.contains("group");
    if (by_group == body.contains("id")) {
      throw Error(ErrorCode::kInvalidArgument, "body needs exactly one of 'id' or 'group'");
    }
    const json& key = by_group ? body.at("group") : body.at("id");
    const char* value_field = by_group ? "values" : "value";
    reject_unknown_fields(body, {by_group ? "group" : "id", value_field});
    if (!body.contains(value_field)) {
      throw Error(ErrorCode::kInvalidArgument, std::string("body is missing '") + value_field + "'");
    }
    const std::size_t unit = resolve_unit(bundle_->costs, key);

    std::lock_guard lock(entry->mutex);
    if (entry->deleted) throw Error(ErrorCode::kNotFound, "no session '" + id + "'");
    auto& session = entry->session;
    if (session.unit_known(unit)) {
      throw Error(ErrorCode::kAlreadyKnown, "'" + bundle_->costs.units()[unit].name + "' is already known");
    }
    json warnings = json::array();
    const auto normalized = normalize_unit_values(*bundle_, unit, body.at(value_field), warnings);
    double score = 0.0;
    for (const auto& s : score_features(*bundle_, session)) {
      if (s.unit == unit) score = s.score;
    }
    acquire(session, unit, normalized, score);
    entry->updated = wall_seconds();
    entry->last_used = now_();
    log_event({{"event", "acquire"}, {"session", id}, {"unit", unit}, {"values", normalized}, {"score", score}});

    const auto& spec = bundle_->costs.units()[unit];
    json out = {{"schema_version", kSchemaVersion},
                {"session", id},
                {"step", session.step()},
                {"acquired", {{"id", spec.name}, {"unit", unit}, {"cost", spec.cost}, {"score", score}}},
                {"total_cost", session.total_cost()},
                {"prediction", prediction_json(session)},
                {"suggestion", suggestion_json(session)},
                {"warnings", warnings}};
    return {200, out};
  });
}

Response SessionService::delete_session(const std::string& id) {
  std::shared_ptr<Entry> entry;
  {
    std::unique_lock lock(sessions_mutex_);
    const auto it = sessions_.find(id);
    if (it != sessions_.end()) {
      entry = it->second;
      sessions_.erase(it);
    }
  }
  if (entry) {
    std::lock_guard lock(entry->mutex);
    entry->deleted = true;
    log_event({{"event", "delete"}, {"session", id}});
  }
  return {200, {{"schema_version", kSchemaVersion}, {"id", id}, {"deleted", entry != nullptr}}};
}

std::size_t SessionService::replay(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read event log " + path.string());
  std::map<std::string, std::shared_ptr<Entry>> restored;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json event;
    try {
      event = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParse, "event log line " + std::to_string(line_no) + ": " + e.what());
    }
    const auto type = event.at("event").get<std::string>();
    const auto id = event.at("session").get<std::string>();
    if (type == "create") {
      const std::size_t d = bundle_->num_features();
      MaskVector known = all_unknown(d);
      Eigen::VectorXd values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
      const auto idx = event.at("known").get<std::vector<std::size_t>>();
      const auto val = event.at("values").get<std::vector<double>>();
      if (idx.size() != val.size()) throw Error(ErrorCode::kParse, "event log create: ragged known/values");
      for (std::size_t i = 0; i < idx.size(); ++i) {
        known.at(idx[i]) = 1;
        values[static_cast<Eigen::Index>(idx[i])] = val[i];
      }
      restored[id] = std::make_shared<Entry>(id, AcquisitionSession(*bundle_, known, values), wall_seconds(), now_());
    } else if (type == "acquire") {
      const auto it = restored.find(id);
      if (it == restored.end()) throw Error(ErrorCode::kParse, "event log acquires on unknown session " + id);
      const auto vals = event.at("values").get<std::vector<double>>();
      acquire(it->second->session, event.at("unit").get<std::size_t>(), vals, event.value("score", 0.0));
    } else if (type == "delete") {
      restored.erase(id);
    } else {
      throw Error(ErrorCode::kParse, "unknown event type '" + type + "'");
    }
  }
  std::unique_lock lock(sessions_mutex_);
  for (auto& [id, entry] : restored) sessions_[id] = std::move(entry);
  return restored.size();
}

void mount(httplib::Server& server, SessionService& service) {
  const auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  const auto parse_body = [](const httplib::Request& req) {
    if (req.body.empty()) return json();
    return json::parse(req.body);
  };
  const auto bad_json = [](const json::exception& e) {
    return error_response(400, "invalid_json", e.what());
  };

  server.Get("/v1/health", [&service, send](const httplib::Request&, httplib::Response& res) {
    send(res, service.health());
  });
  server.Get("/v1/model", [&service, send](const httplib::Request&, httplib::Response& res) {
    send(res, service.model());
  });
  server.Get("/v1/sessions", [&service, send](const httplib::Request&, httplib::Response& res) {
    send(res, service.list_sessions());
  });
  server.Post("/v1/sessions", [&service, send, parse_body, bad_json](const httplib::Request& req,
                                                                       httplib::Response& res) {
    try {
      send(res, service.create_session(parse_body(req)));
    } catch (const json::exception& e) {
      send(res, bad_json(e));
    }
  });
  server.Get(R"(/v1/sessions/([0-9a-f]+))", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.get_session(req.matches[1]));
  });
  server.Delete(R"(/v1/sessions/([0-9a-f]+))", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.delete_session(req.matches[1]));
  });
  server.Get(R"(/v1/sessions/([0-9a-f]+)/suggestion)",
             [&service, send](const httplib::Request& req, httplib::Response& res) {
               send(res, service.get_suggestion(req.matches[1]));
             });
  server.Post(R"(/v1/sessions/([0-9a-f]+)/features)",
              [&service, send, parse_body, bad_json](const httplib::Request& req, httplib::Response& res) {
                try {
                  send(res, service.post_feature(req.matches[1], parse_body(req)));
                } catch (const json::exception& e) {
                  send(res, bad_json(e));
                }
              });
  server.set_error_handler([send](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 404) send(res, error_response(404, "not_found", "no such route"));
  });
}

}  // namespace fact
