#include "hexfleet/env_server.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include <fmt/format.h>

#include "hexfleet/errors.hpp"

namespace hexfleet {

namespace {

const char* op_name(EnvOp op) {
  switch (op) {
    case EnvOp::Reset:
      return "reset";
    case EnvOp::Step:
      return "step";
    case EnvOp::Close:
      return "close";
  }
  return "?";
}

nlohmann::json error_reply(const std::string& message) {
  return {{"format_version", kEnvProtocolVersion}, {"ok", false}, {"error", message}};
}

template <typename T>
T field(const nlohmann::json& doc, const char* key) {
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError(fmt::format("field '{}' is missing or has the wrong type", key));
  }
}

// Actions supplied by one step request, already validated.
class RequestPolicy final : public PolicyOracle {
 public:
  RequestPolicy(const EnvRequest& request, int drivers) : request_(&request) {
    if (request.driver_actions) {
      targets_.assign(drivers, -1);
      for (const auto& a : *request.driver_actions) targets_[a.driver] = a.destination;
    }
  }

  Decision decide(TimeStep, ZoneId h, int driver, Rng& rng) const override {
    if (request_->zone_actions) return {Action::toward(h, (*request_->zone_actions)[h]), ActionSource::External};
    if (request_->zone_distributions) {
      const auto& row = (*request_->zone_distributions)[h];
      double total = 0.0;
      for (const double p : row) total += p;
      return {Action::toward(h, static_cast<ZoneId>(sample_weighted(rng, row, total))), ActionSource::External};
    }
    const ZoneId g = targets_[driver];
    return {Action::toward(h, g < 0 ? h : g), ActionSource::External};
  }

 private:
  const EnvRequest* request_;
  std::vector<ZoneId> targets_;
};

}  // namespace

EnvRequest parse_request(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ProtocolError("request must be a JSON object");
  if (!doc.contains("format_version")) throw ProtocolError("request lacks format_version");
  const int version = field<int>(doc, "format_version");
  if (version != kEnvProtocolVersion) throw ProtocolError(fmt::format("unsupported format_version {}", version));
  const auto op = field<std::string>(doc, "op");
  EnvRequest r;
  if (op == "reset") {
    r.op = EnvOp::Reset;
    r.seed = field<std::uint64_t>(doc, "seed");
  } else if (op == "step") {
    r.op = EnvOp::Step;
    int forms = 0;
    if (doc.contains("zone_actions")) {
      r.zone_actions = field<std::vector<ZoneId>>(doc, "zone_actions");
      ++forms;
    }
    if (doc.contains("zone_distributions")) {
      r.zone_distributions = field<std::vector<std::vector<double>>>(doc, "zone_distributions");
      ++forms;
    }
    if (doc.contains("driver_actions")) {
      const auto& list = doc.at("driver_actions");
      if (!list.is_array()) throw ProtocolError("driver_actions must be an array");
      std::vector<DriverAction> actions;
      for (const auto& item : list) {
        if (!item.is_object()) throw ProtocolError("driver_actions entries must be objects");
        actions.push_back({field<int>(item, "driver"), field<ZoneId>(item, "destination")});
      }
      r.driver_actions = std::move(actions);
      ++forms;
    }
    if (forms != 1) {
      throw ProtocolError("step needs exactly one of zone_actions, zone_distributions, driver_actions");
    }
  } else if (op == "close") {
    r.op = EnvOp::Close;
  } else {
    throw ProtocolError(fmt::format("unknown op '{}'", op));
  }
  return r;
}

nlohmann::json serialize_request(const EnvRequest& r) {
  nlohmann::json doc{{"format_version", kEnvProtocolVersion}, {"op", op_name(r.op)}};
  if (r.seed) doc["seed"] = *r.seed;
  if (r.zone_actions) doc["zone_actions"] = *r.zone_actions;
  if (r.zone_distributions) doc["zone_distributions"] = *r.zone_distributions;
  if (r.driver_actions) {
    doc["driver_actions"] = nlohmann::json::array();
    for (const auto& a : *r.driver_actions) doc["driver_actions"].push_back({{"driver", a.driver}, {"destination", a.destination}});
  }
  return doc;
}

EnvServer::EnvServer(const Scenario& scenario, int drivers, ObjectiveMode mode, int workers)
    : scenario_(&scenario), drivers_(drivers), mode_(mode), workers_(workers) {
  if (drivers < 1) throw ConfigError("the environment needs at least one driver");
}

nlohmann::json EnvServer::observation() const {
  const auto& mx = scenario_->matrices;
  const TimeStep t = episode_->now();
  std::vector<int> demand(mx.zones(), 0);
  if (!episode_->done()) {
    for (int h = 0; h < mx.zones(); ++h) demand[h] = mx.outgoing_demand(t, h);
  }
  return {{"t", t}, {"supply", episode_->idle_supply()}, {"demand", demand}};
}

nlohmann::json EnvServer::reset(std::uint64_t seed) {
  episode_.emplace(scenario_->matrices, drivers_, mode_, seed, workers_);
  return {{"format_version", kEnvProtocolVersion}, {"ok", true}, {"observation", observation()}, {"done", false}};
}

nlohmann::json EnvServer::step(const EnvRequest& request) {
  if (!episode_) throw ProtocolError("no active episode; send reset first");
  if (episode_->done()) throw ProtocolError("episode is done; send reset to start another");
  const int m = scenario_->matrices.zones();
  auto check_zone = [m](ZoneId g) {
    if (g < 0 || g >= m) throw ProtocolError(fmt::format("destination {} outside [0, {})", g, m));
  };
  if (request.zone_actions) {
    if (static_cast<int>(request.zone_actions->size()) != m) {
      throw ProtocolError(fmt::format("zone_actions needs {} entries", m));
    }
    for (const ZoneId g : *request.zone_actions) check_zone(g);
  }
  if (request.zone_distributions) {
    if (static_cast<int>(request.zone_distributions->size()) != m) {
      throw ProtocolError(fmt::format("zone_distributions needs {} rows", m));
    }
    for (const auto& row : *request.zone_distributions) {
      if (static_cast<int>(row.size()) != m) throw ProtocolError(fmt::format("each distribution needs {} entries", m));
      double total = 0.0;
      for (const double p : row) {
        if (!std::isfinite(p) || p < 0.0) throw ProtocolError("distribution entries must be finite and non-negative");
        total += p;
      }
      if (!(total > 0.0)) throw ProtocolError("distribution rows must have a positive sum");
    }
  }
  if (request.driver_actions) {
    std::vector<bool> seen(drivers_, false);
    for (const auto& a : *request.driver_actions) {
      if (a.driver < 0 || a.driver >= drivers_) throw ProtocolError(fmt::format("driver {} does not exist", a.driver));
      if (seen[a.driver]) throw ProtocolError(fmt::format("driver {} listed twice", a.driver));
      seen[a.driver] = true;
      if (!std::holds_alternative<Idle>(episode_->drivers()[a.driver])) {
        throw ProtocolError(fmt::format("driver {} is busy", a.driver));
      }
      check_zone(a.destination);
    }
  }

  const RequestPolicy policy(request, drivers_);
  const auto rewards = episode_->step(policy);
  return {{"format_version", kEnvProtocolVersion},
          {"ok", true},
          {"observation", observation()},
          {"rewards", rewards},
          {"done", episode_->done()}};
}

nlohmann::json EnvServer::handle(const nlohmann::json& doc) {
  if (closed_) return error_reply("environment is closed");
  try {
    const auto request = parse_request(doc);
    switch (request.op) {
      case EnvOp::Reset:
        return reset(*request.seed);
      case EnvOp::Step:
        return step(request);
      case EnvOp::Close:
        closed_ = true;
        return {{"format_version", kEnvProtocolVersion}, {"ok", true}, {"closed", true}};
    }
  } catch (const ProtocolError& e) {
    return error_reply(e.what());
  }
  return error_reply("unhandled request");
}

int EnvServer::serve(std::istream& in, std::ostream& out) {
  std::string line;
  while (!closed_ && std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json reply;
    try {
      reply = handle(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      reply = error_reply(fmt::format("invalid JSON: {}", e.what()));
    }
    out << reply.dump() << '\n' << std::flush;
  }
  return 0;
}

}  // namespace hexfleet
