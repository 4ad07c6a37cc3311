#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hexfleet/city.hpp"
#include "hexfleet/sim.hpp"

namespace hexfleet {

inline constexpr int kEnvProtocolVersion = 1;

enum class EnvOp : std::uint8_t { Reset, Step, Close };

struct DriverAction {
  int driver = 0;
  ZoneId destination = 0;
  bool operator==(const DriverAction&) const = default;
};

// One request line. A step carries exactly one of the three action forms:
//   zone_actions        destination per zone, followed by every idle driver there
//   zone_distributions  per-zone destination probabilities, sampled per driver
//   driver_actions      explicit (driver, destination) pairs; unlisted idle
//                       drivers wait
struct EnvRequest {
  EnvOp op = EnvOp::Reset;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<ZoneId>> zone_actions;
  std::optional<std::vector<std::vector<double>>> zone_distributions;
  std::optional<std::vector<DriverAction>> driver_actions;

  bool operator==(const EnvRequest&) const = default;
};

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws ProtocolError on malformed input.
EnvRequest parse_request(const nlohmann::json& doc);
nlohmann::json serialize_request(const EnvRequest& request);

// Engine side of the environment protocol: newline-delimited JSON, one reply
// per request. Replies carry "ok"; failures carry "error" and leave the
// episode unchanged.
class EnvServer {
 public:
  EnvServer(const Scenario& scenario, int drivers, ObjectiveMode mode, int workers = 1);

  nlohmann::json handle(const nlohmann::json& request);
  bool closed() const { return closed_; }

  // Reads requests until close or end of input. Returns the process exit
  // code.
  int serve(std::istream& in, std::ostream& out);

 private:
  nlohmann::json reset(std::uint64_t seed);
  nlohmann::json step(const EnvRequest& request);
  nlohmann::json observation() const;

  const Scenario* scenario_;
  int drivers_;
  ObjectiveMode mode_;
  int workers_;
  std::optional<Episode> episode_;
  bool closed_ = false;
};

}  // namespace hexfleet
