#include <filesystem>
#include <fstream>
#include <thread>

#include <unistd.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <gtest/gtest.h>

#include "npst3/errors.hpp"
#include "npst3/teleop.hpp"
#include "support.hpp"

using namespace npst3;
using namespace npst3::teleop;
namespace ts        = npst3::testing;
namespace fs        = std::filesystem;
namespace asio      = boost::asio;
namespace beast     = boost::beast;
namespace http      = beast::http;
namespace websocket = beast::websocket;
using nlohmann::json;
using tcp = asio::ip::tcp;

namespace {

StyleLibrary const &library()
{
  static StyleLibrary const lib = [] {
    StyleLibrary        l;
    StyleTransferConfig cfg = ts::small_config();
    l.add(PolicyModel(cfg, ts::small_autoencoder(), gen_synthetic_style(StyleKind::Bouncy, 1), "bouncy", 1));
    l.add(PolicyModel(cfg, ts::small_autoencoder(), gen_synthetic_style(StyleKind::Drooping, 2), "drooping", 2));
    return l;
  }();
  return lib;
}

std::string point_frame(std::int64_t seq, Point3 const &p)
{
  return json{{"type", "ContentPoint"}, {"seq", seq}, {"x", p.x()}, {"y", p.y()}, {"z", p.z()}}.dump();
}

json only_frame(SessionHandler::Reply const &r)
{
  EXPECT_EQ(r.frames.size(), 1u);
  return r.frames.empty() ? json() : json::parse(r.frames.front());
}

class RunningServer
{
public:
  explicit RunningServer(std::string static_dir = {})
    : server(library(), ServerOptions{"127.0.0.1", 0, std::move(static_dir)})
    , thread([this] { server.run(); })
  {}
  ~RunningServer()
  {
    server.stop();
    thread.join();
  }

  Server      server;
  std::thread thread;
};

struct WsClient
{
  asio::io_context                ioc;
  websocket::stream<tcp::socket> ws{ioc};

  explicit WsClient(std::uint16_t port)
  {
    tcp::resolver resolver(ioc);
    asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws.handshake("127.0.0.1", "/");
    ws.text(true);
  }

  void send(std::string const &text)
  {
    ws.write(asio::buffer(text));
  }

  json receive()
  {
    beast::flat_buffer buffer;
    ws.read(buffer);
    return json::parse(beast::buffers_to_string(buffer.data()));
  }
};

}  // namespace

TEST(Protocol, ParsesClientFrames)
{
  auto const hello = parse_client_message(R"({"type":"Hello","version":1,"style":"bouncy"})");
  EXPECT_EQ(hello.type, ClientMessage::Type::Hello);
  EXPECT_EQ(hello.style, "bouncy");
  auto const point = parse_client_message(R"({"type":"ContentPoint","seq":3,"x":1.5,"y":-2,"z":0})");
  EXPECT_EQ(point.type, ClientMessage::Type::ContentPoint);
  EXPECT_EQ(point.seq, 3);
  EXPECT_EQ(point.point, Point3(1.5, -2, 0));
  EXPECT_EQ(parse_client_message(R"({"type":"End"})").type, ClientMessage::Type::End);

  for (char const *bad : {"", "[]", "{}", R"({"type":"Bye"})", R"({"type":"Hello"})",
                          R"({"type":"ContentPoint","seq":0,"x":1,"y":2})",
                          R"({"type":"ContentPoint","seq":"0","x":1,"y":2,"z":3})",
                          R"({"type":"ContentPoint","seq":0,"x":"1","y":2,"z":3})",
                          R"({"type":"Hello","style":"a","version":"1"})"})
  {
    EXPECT_THROW(parse_client_message(bad), FormatError) << bad;
  }
}

TEST(Protocol, ServerFrames)
{
  json const ready = ready_message(library());
  EXPECT_EQ(ready["type"], "Ready");
  EXPECT_EQ(ready["styles"], json({"bouncy", "drooping"}));
  EXPECT_EQ(ready["horizon"], 50);
  EXPECT_EQ(ready["ar"], 30.0);

  LossBreakdown b;
  b.l_v         = 0.5;
  json const gp = generated_point_message(4, Point3(1, 2, 3), b);
  EXPECT_EQ(gp["seq"], 4);
  EXPECT_EQ(gp["z"], 3.0);
  EXPECT_EQ(gp["breakdown"]["l_v"], 0.5);
  EXPECT_EQ(error_message("x", "y"), json({{"type", "Error"}, {"code", "x"}, {"text", "y"}}));
}

TEST(SessionHandler, FullSessionMatchesOfflineStylization)
{
  std::mt19937_64        rng(3);
  MotionTrajectory const content  = ts::random_trajectory(rng);
  StylizeResult const    expected = stylize(library(), "drooping", content);

  SessionHandler h(library());
  EXPECT_FALSE(h.active());
  EXPECT_EQ(only_frame(h.handle(R"({"type":"Hello","version":1,"style":"drooping"})"))["type"], "Ready");
  EXPECT_TRUE(h.active());
  for (std::size_t k = 0; k < kHorizon; ++k)
  {
    auto const reply = h.handle(point_frame(static_cast<std::int64_t>(k), content[k]));
    ASSERT_EQ(reply.frames.size(), k + 1 == kHorizon ? 2u : 1u);
    json const gp = json::parse(reply.frames[0]);
    EXPECT_EQ(gp["seq"], k);
    EXPECT_EQ(Point3(gp["x"], gp["y"], gp["z"]), expected.generated[k]);
    EXPECT_EQ(gp["breakdown"]["reward"], expected.breakdowns[k].reward);
  }
  EXPECT_FALSE(h.active());
  EXPECT_EQ(only_frame(h.handle(point_frame(50, Point3::Zero())))["code"], "session-complete");
  auto const end = h.handle(R"({"type":"End"})");
  EXPECT_TRUE(end.close);
  EXPECT_TRUE(end.frames.empty());
}

TEST(SessionHandler, ErrorCodes)
{
  SessionHandler h(library());
  EXPECT_EQ(only_frame(h.handle(point_frame(0, Point3::Zero())))["code"], "no-session");
  EXPECT_EQ(only_frame(h.handle("not json"))["code"], "malformed");

  auto const unknown = h.handle(R"({"type":"Hello","style":"sad"})");
  EXPECT_EQ(only_frame(unknown)["code"], "unknown-style");
  EXPECT_NE(only_frame(unknown)["text"].get<std::string>().find("bouncy"), std::string::npos);
  EXPECT_TRUE(unknown.close);

  SessionHandler v(library());
  auto const     old = v.handle(R"({"type":"Hello","version":0,"style":"bouncy"})");
  EXPECT_EQ(only_frame(old)["code"], "version");
  EXPECT_TRUE(old.close);

  SessionHandler s(library());
  s.handle(R"({"type":"Hello","style":"bouncy"})");
  EXPECT_EQ(only_frame(s.handle(R"({"type":"Hello","style":"bouncy"})"))["code"], "duplicate-hello");
  EXPECT_EQ(only_frame(s.handle(point_frame(1, Point3::Zero())))["code"], "out-of-order");
  EXPECT_EQ(only_frame(s.handle(point_frame(0, Point3::Zero()), true))["code"], "backpressure");
  EXPECT_EQ(only_frame(s.handle(point_frame(0, Point3::Zero())))["type"], "GeneratedPoint");

  auto const end = s.handle(R"({"type":"End"})");
  EXPECT_TRUE(end.close);
  json const done = only_frame(end);
  EXPECT_EQ(done["type"], "SessionDone");
  EXPECT_EQ(done["content"].size(), 1u);
  EXPECT_EQ(done["generated"].size(), 1u);
}

TEST(Server, WebSocketSession)
{
  RunningServer running;
  WsClient      client(running.server.port());
  client.send(R"({"type":"Hello","version":1,"style":"bouncy"})");
  EXPECT_EQ(client.receive()["type"], "Ready");

  std::mt19937_64        rng(9);
  MotionTrajectory const content  = ts::random_trajectory(rng);
  StylizeResult const    expected = stylize(library(), "bouncy", content);
  for (std::size_t k = 0; k < kHorizon; ++k)
  {
    client.send(point_frame(static_cast<std::int64_t>(k), content[k]));
    json const gp = client.receive();
    ASSERT_EQ(gp["type"], "GeneratedPoint") << gp.dump();
    EXPECT_EQ(Point3(gp["x"], gp["y"], gp["z"]), expected.generated[k]);
  }
  json const done = client.receive();
  EXPECT_EQ(done["type"], "SessionDone");
  EXPECT_EQ(done["generated"].size(), kHorizon);
}

TEST(Server, EndClosesConnection)
{
  RunningServer running;
  WsClient      client(running.server.port());
  client.send(R"({"type":"Hello","style":"drooping"})");
  client.receive();
  client.send(point_frame(0, Point3(1, 2, 3)));
  EXPECT_EQ(client.receive()["type"], "GeneratedPoint");
  client.send(R"({"type":"End"})");
  EXPECT_EQ(client.receive()["type"], "SessionDone");
  beast::flat_buffer buffer;
  beast::error_code  ec;
  client.ws.read(buffer, ec);
  EXPECT_EQ(ec, websocket::error::closed);
}

TEST(Server, ServesStaticFiles)
{
  fs::path const dir = fs::temp_directory_path() / ("npst3_static_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  std::ofstream(dir / "index.html") << "<html>ok</html>";
  std::ofstream(dir / "app.js") << "let x = 1;";
  {
    RunningServer running(dir.string());
    auto          get = [&](std::string const &target) {
      asio::io_context ioc;
      tcp::socket      socket(ioc);
      tcp::resolver    resolver(ioc);
      asio::connect(socket, resolver.resolve("127.0.0.1", std::to_string(running.server.port())));
      http::request<http::empty_body> req{http::verb::get, target, 11};
      req.set(http::field::host, "127.0.0.1");
      http::write(socket, req);
      beast::flat_buffer                 buffer;
      http::response<http::string_body> res;
      http::read(socket, buffer, res);
      return res;
    };
    auto const index = get("/");
    EXPECT_EQ(index.result(), http::status::ok);
    EXPECT_EQ(index.body(), "<html>ok</html>");
    EXPECT_EQ(index[http::field::content_type], "text/html; charset=utf-8");
    auto const js = get("/app.js?v=2");
    EXPECT_EQ(js.body(), "let x = 1;");
    EXPECT_EQ(js[http::field::content_type], "text/javascript; charset=utf-8");
    EXPECT_EQ(get("/missing.css").result(), http::status::not_found);
    EXPECT_EQ(get("/../etc/passwd").result(), http::status::bad_request);
  }
  fs::remove_all(dir);
}

TEST(Server, OccupiedPortIsReported)
{
  RunningServer running;
  EXPECT_THROW(Server(library(), ServerOptions{"127.0.0.1", running.server.port(), {}}), AddressInUseError);
  EXPECT_THROW(Server(library(), ServerOptions{"not-an-address", 0, {}}), ConfigError);
}

TEST(Server, StopClosesOpenConnections)
{
  auto     running = std::make_unique<RunningServer>();
  WsClient client(running->server.port());
  client.send(R"({"type":"Hello","style":"bouncy"})");
  client.receive();
  running.reset();
  beast::flat_buffer buffer;
  beast::error_code  ec;
  client.ws.read(buffer, ec);
  EXPECT_TRUE(ec);
}
