#include "npst3/teleop.hpp"

#include <sys/socket.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <list>
#include <mutex>
#include <thread>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "npst3/errors.hpp"

namespace npst3::teleop {

namespace asio      = boost::asio;
namespace beast     = boost::beast;
namespace http      = beast::http;
namespace websocket = beast::websocket;
using tcp           = asio::ip::tcp;
using nlohmann::json;

namespace {

json point_rows(MotionTrajectory const &traj)
{
  json rows = json::array();
  for (std::size_t k = 0; k < traj.filled(); ++k)
  {
    rows.push_back({traj[k].x(), traj[k].y(), traj[k].z()});
  }
  return rows;
}

double number_field(json const &j, char const *key)
{
  if (!j.contains(key) || !j[key].is_number())
  {
    throw FormatError(std::string("field '") + key + "' must be a number");
  }
  double const v = j[key].get<double>();
  if (!std::isfinite(v))
  {
    throw FormatError(std::string("field '") + key + "' is not finite");
  }
  return v;
}

}  // namespace

ClientMessage parse_client_message(std::string_view text)
{
  json const j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
  {
    throw FormatError("frame is not a JSON object");
  }
  if (!j.contains("type") || !j["type"].is_string())
  {
    throw FormatError("frame has no string 'type'");
  }
  std::string const type = j["type"].get<std::string>();
  ClientMessage     m;
  if (type == "Hello")
  {
    m.type = ClientMessage::Type::Hello;
    if (!j.contains("style") || !j["style"].is_string())
    {
      throw FormatError("Hello needs a string 'style'");
    }
    m.style = j["style"].get<std::string>();
    if (j.contains("version"))
    {
      if (!j["version"].is_number_integer())
      {
        throw FormatError("'version' must be an integer");
      }
      m.version = j["version"].get<int>();
    }
  }
  else if (type == "ContentPoint")
  {
    m.type = ClientMessage::Type::ContentPoint;
    if (!j.contains("seq") || !j["seq"].is_number_integer())
    {
      throw FormatError("ContentPoint needs an integer 'seq'");
    }
    m.seq   = j["seq"].get<std::int64_t>();
    m.point = Point3(number_field(j, "x"), number_field(j, "y"), number_field(j, "z"));
  }
  else if (type == "End")
  {
    m.type = ClientMessage::Type::End;
  }
  else
  {
    throw FormatError("unknown message type '" + type + "'");
  }
  return m;
}

json ready_message(StyleLibrary const &library)
{
  return {{"type", "Ready"},
          {"version", kProtocolVersion},
          {"styles", library.names()},
          {"horizon", kHorizon},
          {"ar", library.config().ar_mm()}};
}

json generated_point_message(std::int64_t seq, Point3 const &p, LossBreakdown const &b)
{
  return {{"type", "GeneratedPoint"},
          {"seq", seq},
          {"x", p.x()},
          {"y", p.y()},
          {"z", p.z()},
          {"breakdown",
           {{"l_content", b.l_content},
            {"l_style", b.l_style},
            {"l_p", b.l_p},
            {"l_ep", b.l_ep},
            {"l_v", b.l_v},
            {"total", b.total},
            {"reward", b.reward}}}};
}

json session_done_message(MotionTrajectory const &content, MotionTrajectory const &generated)
{
  return {{"type", "SessionDone"}, {"content", point_rows(content)}, {"generated", point_rows(generated)}};
}

json error_message(std::string_view code, std::string_view text)
{
  return {{"type", "Error"}, {"code", code}, {"text", text}};
}

// SessionHandler -----------------------------------------------------------------

SessionHandler::SessionHandler(StyleLibrary const &library)
  : library_(&library)
{}

SessionHandler::Reply SessionHandler::finish()
{
  done_ = true;
  return {{session_done_message(session_->content(), session_->generated()).dump()}, false};
}

SessionHandler::Reply SessionHandler::handle(std::string_view text, bool backlogged)
{
  ClientMessage m;
  try
  {
    m = parse_client_message(text);
  }
  catch (FormatError const &e)
  {
    return {{error_message("malformed", e.what()).dump()}, false};
  }

  switch (m.type)
  {
  case ClientMessage::Type::Hello:
    if (session_)
    {
      return {{error_message("duplicate-hello", "session already started").dump()}, false};
    }
    if (m.version != kProtocolVersion)
    {
      return {{error_message("version", "unsupported protocol version " + std::to_string(m.version)).dump()}, true};
    }
    try
    {
      session_.emplace(*library_, m.style);
    }
    catch (LookupError const &e)
    {
      return {{error_message("unknown-style", e.what()).dump()}, true};
    }
    return {{ready_message(*library_).dump()}, false};

  case ClientMessage::Type::ContentPoint:
  {
    if (!session_)
    {
      return {{error_message("no-session", "send Hello first").dump()}, false};
    }
    if (done_ || session_->complete())
    {
      return {{error_message("session-complete", "session already has 50 points").dump()}, false};
    }
    if (m.seq != next_seq_)
    {
      return {{error_message("out-of-order", "expected seq " + std::to_string(next_seq_) + ", got " +
                                               std::to_string(m.seq))
                 .dump()},
              false};
    }
    if (backlogged)
    {
      return {{error_message("backpressure", "point " + std::to_string(m.seq) +
                                                 " arrived before the previous one was answered; resend it")
                 .dump()},
              false};
    }
    auto const out = session_->push(m.point);
    ++next_seq_;
    Reply r{{generated_point_message(m.seq, out.point, out.breakdown).dump()}, false};
    if (session_->complete())
    {
      r.frames.push_back(finish().frames.front());
    }
    return r;
  }

  case ClientMessage::Type::End:
    if (!session_)
    {
      return {{error_message("no-session", "send Hello first").dump()}, true};
    }
    if (done_)
    {
      return {{}, true};
    }
    {
      Reply r = finish();
      r.close = true;
      return r;
    }
  }
  return {{error_message("malformed", "unhandled message").dump()}, false};
}

// Server -------------------------------------------------------------------------

namespace {

std::string_view mime_type(std::filesystem::path const &path)
{
  std::string const ext = path.extension().string();
  if (ext == ".html" || ext == ".htm")
    return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs")
    return "text/javascript; charset=utf-8";
  if (ext == ".css")
    return "text/css; charset=utf-8";
  if (ext == ".json" || ext == ".map")
    return "application/json";
  if (ext == ".svg")
    return "image/svg+xml";
  if (ext == ".png")
    return "image/png";
  if (ext == ".ico")
    return "image/x-icon";
  if (ext == ".txt" || ext == ".csv")
    return "text/plain; charset=utf-8";
  return "application/octet-stream";
}

http::response<http::string_body> static_response(http::request<http::string_body> const &req,
                                                  std::string const                      &root)
{
  auto reply = [&](http::status status, std::string body, std::string_view type) {
    http::response<http::string_body> res{status, req.version()};
    res.set(http::field::server, "npst3");
    res.set(http::field::content_type, std::string(type));
    res.keep_alive(req.keep_alive());
    res.body() = req.method() == http::verb::head ? std::string() : std::move(body);
    res.content_length(res.body().size());
    return res;
  };

  if (req.method() != http::verb::get && req.method() != http::verb::head)
  {
    return reply(http::status::method_not_allowed, "method not allowed\n", "text/plain");
  }
  std::string target(req.target());
  target = target.substr(0, target.find_first_of("?#"));
  if (target.empty() || target.front() != '/' || target.find("..") != std::string::npos ||
      target.find('\0') != std::string::npos)
  {
    return reply(http::status::bad_request, "bad path\n", "text/plain");
  }
  if (root.empty())
  {
    return reply(http::status::not_found, "no static assets configured\n", "text/plain");
  }
  std::filesystem::path path = std::filesystem::path(root) / target.substr(1);
  if (target.back() == '/')
  {
    path /= "index.html";
  }
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec))
  {
    return reply(http::status::not_found, "not found\n", "text/plain");
  }
  std::ifstream in(path, std::ios::binary);
  std::string   body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return reply(http::status::ok, std::move(body), mime_type(path));
}

}  // namespace

struct Server::Impl
{
  StyleLibrary const &library;
  ServerOptions       options;
  asio::io_context    ioc;
  tcp::acceptor       acceptor{ioc};
  std::atomic<bool>   stopping{false};

  std::mutex                                   mutex;
  std::list<std::shared_ptr<tcp::socket>>      sockets;
  std::list<std::thread>                       threads;

  Impl(StyleLibrary const &lib, ServerOptions opts)
    : library(lib)
    , options(std::move(opts))
  {}

  void accept_next()
  {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec || stopping)
      {
        return;
      }
      auto shared = std::make_shared<tcp::socket>(std::move(socket));
      {
        std::lock_guard<std::mutex> lock(mutex);
        sockets.push_back(shared);
        threads.emplace_back([this, shared] {
          serve(*shared);
          std::lock_guard<std::mutex> inner(mutex);
          sockets.remove(shared);
        });
      }
      accept_next();
    });
  }

  void serve(tcp::socket &socket)
  {
    beast::error_code ec;
    beast::flat_buffer buffer;
    for (;;)
    {
      http::request<http::string_body> req;
      http::read(socket, buffer, req, ec);
      if (ec)
      {
        return;
      }
      if (websocket::is_upgrade(req))
      {
        serve_websocket(socket, std::move(req));
        return;
      }
      auto res = static_response(req, options.static_dir);
      http::write(socket, res, ec);
      if (ec || !res.keep_alive())
      {
        socket.shutdown(tcp::socket::shutdown_send, ec);
        return;
      }
    }
  }

  void serve_websocket(tcp::socket &socket, http::request<http::string_body> req)
  {
    websocket::stream<tcp::socket &> ws(socket);
    beast::error_code                ec;
    ws.set_option(websocket::stream_base::decorator(
      [](websocket::response_type &res) { res.set(http::field::server, "npst3"); }));
    ws.accept(req, ec);
    if (ec)
    {
      return;
    }
    SessionHandler     handler(library);
    beast::flat_buffer buffer;
    bool               backlogged = false;
    for (;;)
    {
      buffer.clear();
      ws.read(buffer, ec);
      if (ec)
      {
        return;
      }
      auto reply = handler.handle(beast::buffers_to_string(buffer.data()), backlogged);
      // Bytes already on the socket before this reply goes out were sent
      // without waiting for it.
      backlogged = socket.available(ec) > 0;
      ws.text(true);
      for (auto const &frame : reply.frames)
      {
        ws.write(asio::buffer(frame), ec);
        if (ec)
        {
          return;
        }
      }
      if (reply.close)
      {
        ws.close(websocket::close_code::normal, ec);
        return;
      }
    }
  }
};

Server::Server(StyleLibrary const &library, ServerOptions options)
  : impl_(std::make_unique<Impl>(library, std::move(options)))
{
  beast::error_code ec;
  auto const        address = asio::ip::make_address(impl_->options.host, ec);
  if (ec)
  {
    throw ConfigError("invalid listen address '" + impl_->options.host + "'");
  }
  tcp::endpoint const endpoint(address, impl_->options.port);
  impl_->acceptor.open(endpoint.protocol(), ec);
  if (!ec)
  {
    impl_->acceptor.set_option(asio::socket_base::reuse_address(true), ec);
    impl_->acceptor.bind(endpoint, ec);
  }
  if (ec == asio::error::address_in_use)
  {
    throw AddressInUseError("port " + std::to_string(impl_->options.port) + " on " + impl_->options.host +
                            " is already in use");
  }
  if (!ec)
  {
    impl_->acceptor.listen(asio::socket_base::max_listen_connections, ec);
  }
  if (ec)
  {
    throw Error("cannot listen on " + impl_->options.host + ":" + std::to_string(impl_->options.port) + ": " +
                ec.message());
  }
}

Server::~Server()
{
  stop();
  std::list<std::thread> threads;
  {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    threads.swap(impl_->threads);
  }
  for (auto &t : threads)
  {
    if (t.joinable())
    {
      t.join();
    }
  }
}

std::uint16_t Server::port() const
{
  beast::error_code ec;
  return impl_->acceptor.local_endpoint(ec).port();
}

void Server::run(bool handle_signals)
{
  std::optional<asio::signal_set> signals;
  if (handle_signals)
  {
    signals.emplace(impl_->ioc, SIGINT, SIGTERM);
    signals->async_wait([this](beast::error_code const &ec, int) {
      if (!ec)
      {
        stop();
      }
    });
  }
  impl_->accept_next();
  impl_->ioc.run();

  std::list<std::thread> threads;
  {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    threads.swap(impl_->threads);
  }
  for (auto &t : threads)
  {
    t.join();
  }
}

void Server::stop()
{
  if (impl_->stopping.exchange(true))
  {
    return;
  }
  asio::post(impl_->ioc, [impl = impl_.get()] {
    beast::error_code ec;
    impl->acceptor.close(ec);
  });
  {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    for (auto const &s : impl_->sockets)
    {
      // Unblocks the connection thread's pending read.
      ::shutdown(s->native_handle(), SHUT_RDWR);
    }
  }
  impl_->ioc.stop();
}

}  // namespace npst3::teleop
