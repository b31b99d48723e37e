#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "npst3/stylizer.hpp"

namespace npst3::teleop {

inline constexpr int kProtocolVersion = 1;

// Client -> server frames. Every frame is a JSON object with a "type" field:
//   {"type":"Hello","version":1,"style":"happy"}
//   {"type":"ContentPoint","seq":0,"x":..,"y":..,"z":..}
//   {"type":"End"}
struct ClientMessage
{
  enum class Type
  {
    Hello,
    ContentPoint,
    End,
  };

  Type          type    = Type::End;
  int           version = kProtocolVersion;
  std::string   style;
  std::int64_t  seq = 0;
  Point3        point = Point3::Zero();
};

// Throws FormatError on anything that is not a well-formed client frame.
ClientMessage parse_client_message(std::string_view text);

// Server -> client frames.
nlohmann::json ready_message(StyleLibrary const &library);
nlohmann::json generated_point_message(std::int64_t seq, Point3 const &p, LossBreakdown const &b);
nlohmann::json session_done_message(MotionTrajectory const &content, MotionTrajectory const &generated);
nlohmann::json error_message(std::string_view code, std::string_view text);

// Protocol state of one connection, independent of the transport.
class SessionHandler
{
public:
  explicit SessionHandler(StyleLibrary const &library);

  struct Reply
  {
    std::vector<std::string> frames;
    bool                     close = false;
  };

  // `backlogged` marks a frame that was already waiting while the previous
  // point was processed; such content points are rejected.
  Reply handle(std::string_view text, bool backlogged = false);

  bool active() const
  {
    return session_.has_value() && !done_;
  }

private:
  Reply finish();

  StyleLibrary const          *library_;
  std::optional<OnlineSession> session_;
  std::int64_t                 next_seq_ = 0;
  bool                         done_     = false;
};

struct ServerOptions
{
  std::string    host = "127.0.0.1";
  std::uint16_t  port = 8765;  // 0 picks a free port
  std::string    static_dir;   // UI assets served over plain HTTP; empty disables
};

// WebSocket endpoint plus static file serving on the same port, one thread
// per connection.
class Server
{
public:
  // Binds immediately. Throws AddressInUseError when the port is taken.
  Server(StyleLibrary const &library, ServerOptions options);
  ~Server();

  Server(Server const &)            = delete;
  Server &operator=(Server const &) = delete;

  std::uint16_t port() const;

  // Blocks until stop() or, with `handle_signals`, SIGINT/SIGTERM.
  void run(bool handle_signals = false);
  // Closes the listener and every open connection. Safe from any thread.
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace npst3::teleop
