#pragma once

#include <filesystem>
#include <optional>
#include <string>

// Eigen must come before httplib: resolv.h defines a _res macro.
#include "prefmo/session.hpp"
#include "httplib.h"

namespace prefmo {

/// HTTP status for an error kind: 400 for validation problems, 404, 409,
/// otherwise 500.
int http_status(ErrorKind kind);

/// `{code, message, field?}` body for an error.
nlohmann::json error_body(const Error& error);

/// Registers the session endpoints on `server`. When `static_dir` is set it
/// is mounted at "/" for the UI bundle.
void register_routes(httplib::Server& server, SessionManager& sessions,
                     const std::optional<std::filesystem::path>& static_dir = std::nullopt);

}  // namespace prefmo
