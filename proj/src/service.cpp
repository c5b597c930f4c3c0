#include "prefmo/service.hpp"

namespace prefmo {
namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

// Runs `handler`, translating library errors into JSON error responses.
template <class Handler>
httplib::Server::Handler guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const Error& e) {
      send_json(res, http_status(e.kind()), error_body(e));
    } catch (const nlohmann::json::exception& e) {
      send_json(res, 400, {{"code", "validation"}, {"message", std::string("malformed JSON: ") + e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"code", "internal"}, {"message", e.what()}});
    }
  };
}

nlohmann::json parse_body(const httplib::Request& req) {
  auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::config, "request body is not valid JSON", "body");
  return j;
}

}  // namespace

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::not_found:
      return 404;
    case ErrorKind::conflict:
      return 409;
    case ErrorKind::config:
    case ErrorKind::data:
    case ErrorKind::index:
    case ErrorKind::dimension:
    case ErrorKind::domain:
      return 400;
    default:
      return 500;
  }
}

nlohmann::json error_body(const Error& error) {
  const int status = http_status(error.kind());
  nlohmann::json body{{"code", status == 400 ? "validation" : to_string(error.kind())}, {"message", error.what()}};
  if (!error.field().empty()) body["field"] = error.field();
  return body;
}

void register_routes(httplib::Server& server, SessionManager& sessions,
                     const std::optional<std::filesystem::path>& static_dir) {
  server.Post("/sessions", guarded([&sessions](const httplib::Request& req, httplib::Response& res) {
                const auto config = session_config_from_json(parse_body(req));
                const auto id = sessions.create(config);
                auto body = sessions.query(id);
                send_json(res, 201, body);
              }));
  server.Get(R"(/sessions/([0-9a-f]+)/query)", guarded([&sessions](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, sessions.query(req.matches[1]));
             }));
  server.Post(R"(/sessions/([0-9a-f]+)/response)",
              guarded([&sessions](const httplib::Request& req, httplib::Response& res) {
                const auto body = parse_body(req);
                if (!body.is_object() || !body.contains("winners") || !body["winners"].is_array())
                  throw Error(ErrorKind::data, "body must contain a winners array", "winners");
                Response response;
                for (const auto& w : body["winners"]) {
                  if (!w.is_number_integer()) throw Error(ErrorKind::data, "winners must be integers", "winners");
                  response.winners.push_back(w.get<int>());
                }
                std::optional<int> index;
                if (body.contains("query_index") && !body["query_index"].is_null())
                  index = body["query_index"].get<int>();
                send_json(res, 202, sessions.submit(req.matches[1], response, index));
              }));
  server.Post(R"(/sessions/([0-9a-f]+)/retry)", guarded([&sessions](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 202, sessions.retry(req.matches[1]));
              }));
  server.Get(R"(/sessions/([0-9a-f]+)/front)", guarded([&sessions](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, sessions.front(req.matches[1]));
             }));
  server.Get(R"(/sessions/([0-9a-f]+)/state)", guarded([&sessions](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, sessions.state(req.matches[1]));
             }));
  server.Get(R"(/sessions/([^/]+)/.*)", [](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 404, {{"code", "not_found"}, {"message", "no session with id '" + std::string(req.matches[1]) + "'"}, {"field", "id"}});
  });
  if (static_dir) server.set_mount_point("/", static_dir->string());
}

}  // namespace prefmo
