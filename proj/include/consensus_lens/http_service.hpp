#pragma once

#include "consensus_lens/session.hpp"

#include <boost/asio/io_context.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/http.hpp>

#include <atomic>
#include <list>
#include <memory>
#include <string>
#include <thread>

namespace clens {

namespace http = boost::beast::http;

using http_request = http::request<http::string_body>;
using http_response = http::response<http::string_body>;

struct endpoint {
    std::string host;
    std::uint16_t port = 0;
};

/// "host:port"; throws config_error.
endpoint parse_endpoint(std::string_view text);

/// Builds the JSON response for one API request. Pure; no socket involved.
http_response handle_request(session& s, const http_request& req);

/// JSON REST endpoints plus the WebSocket event stream, one thread per
/// connection.
class http_service {
public:
    http_service(session& s, const endpoint& where);
    ~http_service();

    http_service(const http_service&) = delete;
    http_service& operator=(const http_service&) = delete;

    /// Binds and starts accepting; throws io_error if the address is unusable.
    void start();
    void stop();
    /// Bound port (useful when started on port 0).
    std::uint16_t port() const { return port_; }

private:
    struct connection {
        std::thread thread;
        int fd = -1;
        std::atomic<bool> done{false};
    };

    void accept_next();
    void serve(boost::asio::ip::tcp::socket socket, connection& conn);
    void stream(boost::asio::ip::tcp::socket socket, const http_request& req);
    void reap();

    session& session_;
    endpoint where_;
    boost::asio::io_context ioc_;
    boost::asio::ip::tcp::acceptor acceptor_;
    std::thread accept_thread_;
    std::atomic<bool> stopping_{false};
    std::uint16_t port_ = 0;

    std::mutex conn_mutex_;
    std::list<connection> connections_;
};

} // namespace clens
