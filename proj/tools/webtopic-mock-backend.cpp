// Deterministic backend speaking the webtopic wire protocol, for tests and
// offline pipeline runs.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "webtopic/mock_backend.hpp"
#include "webtopic/protocol.hpp"

int main(int argc, char** argv) {
  CLI::App app{"webtopic mock backend"};
  int http_port = -1;
  std::string keywords = "cannabis";
  std::string reply = "keyword";
  std::size_t embed_dim = 64;
  std::string record;
  app.add_option("--http", http_port, "serve HTTP on this port (0 picks one); default is stdio");
  app.add_option("--keywords", keywords, "comma-separated keywords that make a text relevant");
  app.add_option("--reply", reply, "generate behaviour")->check(CLI::IsMember({"keyword", "yes", "no", "unparseable"}));
  app.add_option("--embed-dim", embed_dim)->check(CLI::Range(1, 4096));
  app.add_option("--record", record, "append each request/response pair to this JSONL file");
  CLI11_PARSE(app, argc, argv);

  webtopic::MockBackend mock;
  mock.embed_dim = embed_dim;
  mock.keywords.clear();
  std::stringstream ks(keywords);
  for (std::string k; std::getline(ks, k, ',');) {
    if (!k.empty()) mock.keywords.push_back(k);
  }
  if (reply == "yes") mock.reply = webtopic::MockBackend::Reply::always_yes;
  if (reply == "no") mock.reply = webtopic::MockBackend::Reply::always_no;
  if (reply == "unparseable") mock.reply = webtopic::MockBackend::Reply::unparseable;

  std::ofstream log;
  if (!record.empty()) log.open(record, std::ios::app);
  webtopic::Handler handler = [&](const webtopic::json& req) {
    webtopic::json res;
    try {
      res = mock(req);
    } catch (const std::exception& e) {
      res = webtopic::error_response(req.value("id", webtopic::json()), e.what());
    }
    if (log) log << webtopic::frame({{"request", req}, {"response", res}}) << std::flush;
    return res;
  };

  if (http_port < 0) {
    webtopic::serve_stdio(handler, std::cin, std::cout);
    return 0;
  }
  httplib::Server server;
  webtopic::mount_http(server, handler);
  const int port = http_port == 0 ? server.bind_to_any_port("127.0.0.1") : (server.bind_to_port("127.0.0.1", http_port) ? http_port : -1);
  if (port < 0) {
    std::cerr << "cannot bind port " << http_port << "\n";
    return 2;
  }
  std::cout << "listening " << port << std::endl;
  server.listen_after_bind();
  return 0;
}
