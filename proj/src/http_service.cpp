#include "consensus_lens/http_service.hpp"

#include "consensus_lens/config.hpp"

#include <boost/asio/ip/address.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include <charconv>
#include <map>
#include <sys/socket.h>

namespace clens {

namespace beast = boost::beast;
namespace asio = boost::asio;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

endpoint parse_endpoint(std::string_view text)
{
    auto colon = text.rfind(':');
    if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size())
        throw config_error("expected host:port, got '" + std::string(text) + "'");
    endpoint ep;
    ep.host = std::string(text.substr(0, colon));
    if (ep.host.size() > 2 && ep.host.front() == '[' && ep.host.back() == ']') ep.host = ep.host.substr(1, ep.host.size() - 2);
    auto port = text.substr(colon + 1);
    unsigned value = 0;
    auto [p, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
    if (ec != std::errc() || p != port.data() + port.size() || value > 65535)
        throw config_error("invalid port '" + std::string(port) + "'");
    ep.port = static_cast<std::uint16_t>(value);
    return ep;
}

namespace {

class bad_request : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

std::string percent_decode(std::string_view s)
{
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '+') {
            out += ' ';
        } else if (s[i] == '%') {
            unsigned v = 0;
            if (i + 2 >= s.size() || std::from_chars(s.data() + i + 1, s.data() + i + 3, v, 16).ptr != s.data() + i + 3)
                throw bad_request("bad percent-encoding in query");
            out += static_cast<char>(v);
            i += 2;
        } else {
            out += s[i];
        }
    }
    return out;
}

struct target_parts {
    std::string path;
    std::map<std::string, std::string> params;
};

target_parts split_target(std::string_view target)
{
    target_parts t;
    auto q = target.find('?');
    t.path = std::string(target.substr(0, q));
    if (q == std::string_view::npos) return t;
    auto rest = target.substr(q + 1);
    while (!rest.empty()) {
        auto amp = rest.find('&');
        auto pair = rest.substr(0, amp);
        rest = amp == std::string_view::npos ? std::string_view() : rest.substr(amp + 1);
        if (pair.empty()) continue;
        auto eq = pair.find('=');
        auto key = percent_decode(pair.substr(0, eq));
        auto value = eq == std::string_view::npos ? std::string() : percent_decode(pair.substr(eq + 1));
        if (!t.params.emplace(key, value).second) throw bad_request("parameter '" + key + "' given twice");
    }
    return t;
}

template <class Int>
Int parse_int(const std::string& name, const std::string& text)
{
    Int v{};
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc() || p != text.data() + text.size())
        throw bad_request("parameter '" + name + "' must be an integer, got '" + text + "'");
    return v;
}

query_filter parse_filter(const std::map<std::string, std::string>& params)
{
    query_filter f;
    for (const auto& [key, value] : params) {
        if (key == "from_ms") {
            f.from_ms = parse_int<std::int64_t>(key, value);
        } else if (key == "to_ms") {
            f.to_ms = parse_int<std::int64_t>(key, value);
        } else if (key == "slot") {
            f.slot = parse_int<slot_index>(key, value);
        } else if (key == "node") {
            f.node = node_id(parse_int<std::uint32_t>(key, value));
        } else if (key == "kinds") {
            std::set<event_kind> kinds;
            std::string_view rest = value;
            while (!rest.empty()) {
                auto comma = rest.find(',');
                auto name = rest.substr(0, comma);
                rest = comma == std::string_view::npos ? std::string_view() : rest.substr(comma + 1);
                auto k = parse_event_kind(name);
                if (!k) throw bad_request("unknown event kind '" + std::string(name) + "'");
                kinds.insert(*k);
            }
            f.kinds = std::move(kinds);
        } else {
            throw bad_request("unknown parameter '" + key + "'");
        }
    }
    return f;
}

http_response respond(const http_request& req, http::status status, std::string body)
{
    http_response res(status, req.version());
    res.set(http::field::server, "consensus-lens");
    res.set(http::field::content_type, "application/json");
    res.set(http::field::access_control_allow_origin, "*");
    res.keep_alive(req.keep_alive());
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
}

http_response respond_json(const http_request& req, http::status status, const json& body)
{
    return respond(req, status, body.dump());
}

http_response error(const http_request& req, http::status status, const std::string& message)
{
    return respond_json(req, status, json{{"error", message}, {"status", static_cast<int>(status)}});
}

constexpr std::string_view api_prefix = "/api/v1/";

} // namespace

http_response handle_request(session& s, const http_request& req)
{
    try {
        auto t = split_target(std::string_view(req.target().data(), req.target().size()));
        if (req.method() == http::verb::options) {
            auto res = respond(req, http::status::no_content, "");
            res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
            res.set(http::field::access_control_allow_headers, "Content-Type");
            return res;
        }
        if (t.path.rfind(api_prefix, 0) != 0) return error(req, http::status::not_found, "no route for " + t.path);
        const auto route = t.path.substr(api_prefix.size());

        auto only = [&](http::verb verb) {
            if (req.method() != verb)
                throw std::pair(http::status::method_not_allowed,
                                std::string(http::to_string(req.method())) + " not allowed on " + t.path);
        };

        if (route == "events") {
            only(http::verb::get);
            auto lines = s.history().query_lines(parse_filter(t.params));
            std::string body = "{\"count\":" + std::to_string(lines.size()) + ",\"events\":[";
            for (std::size_t i = 0; i < lines.size(); ++i) {
                if (i) body += ',';
                body += lines[i];
            }
            body += "]}";
            return respond(req, http::status::ok, std::move(body));
        }
        if (route.rfind("snapshot/", 0) == 0) {
            only(http::verb::get);
            if (!t.params.empty()) throw bad_request("snapshot takes no parameters");
            auto slot = parse_int<slot_index>("slot", route.substr(9));
            return respond_json(req, http::status::ok, encode(s.history().snapshot(slot)));
        }
        if (route == "meta") {
            only(http::verb::get);
            return respond_json(req, http::status::ok, s.meta());
        }
        if (route == "control") {
            only(http::verb::post);
            json body;
            try {
                body = json::parse(req.body());
            } catch (const json::parse_error&) {
                throw control_error("control body is not valid JSON");
            }
            return respond_json(req, http::status::ok, s.control(control_request::from_json(body)));
        }
        if (route == "stream")
            return error(req, http::status::upgrade_required, "the stream endpoint requires a WebSocket upgrade");
        return error(req, http::status::not_found, "no route for " + t.path);
    } catch (const std::pair<http::status, std::string>& e) {
        return error(req, e.first, e.second);
    } catch (const bad_request& e) {
        return error(req, http::status::bad_request, e.what());
    } catch (const query_error& e) {
        return error(req, http::status::bad_request, e.what());
    } catch (const control_error& e) {
        return error(req, http::status::bad_request, e.what());
    } catch (const unknown_slot& e) {
        return error(req, http::status::not_found, e.what());
    } catch (const control_conflict& e) {
        return error(req, http::status::conflict, e.what());
    } catch (const std::exception& e) {
        spdlog::error("request {} failed: {}", std::string(req.target()), e.what());
        return error(req, http::status::internal_server_error, e.what());
    }
}

// --- server ---------------------------------------------------------------

http_service::http_service(session& s, const endpoint& where) : session_(s), where_(where), acceptor_(ioc_) {}

http_service::~http_service()
{
    stop();
}

void http_service::start()
{
    try {
        tcp::resolver resolver(ioc_);
        auto results = resolver.resolve(where_.host, std::to_string(where_.port));
        tcp::endpoint ep = *results.begin();
        acceptor_.open(ep.protocol());
        acceptor_.set_option(asio::socket_base::reuse_address(true));
        acceptor_.bind(ep);
        acceptor_.listen();
        port_ = acceptor_.local_endpoint().port();
    } catch (const boost::system::system_error& e) {
        throw io_error("cannot listen on " + where_.host + ":" + std::to_string(where_.port) + ": " + e.what());
    }
    spdlog::info("serving on http://{}:{}/api/v1/", where_.host, port_);
    accept_next();
    accept_thread_ = std::thread([this] { ioc_.run(); });
}

void http_service::accept_next()
{
    acceptor_.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
        if (stopping_) return;
        if (!ec) {
            reap();
            std::lock_guard lock(conn_mutex_);
            auto& conn = connections_.emplace_back();
            conn.fd = socket.native_handle();
            conn.thread = std::thread([this, &conn, sock = std::move(socket)]() mutable { serve(std::move(sock), conn); });
        } else {
            spdlog::warn("accept failed: {}", ec.message());
        }
        accept_next();
    });
}

void http_service::reap()
{
    std::lock_guard lock(conn_mutex_);
    for (auto it = connections_.begin(); it != connections_.end();) {
        if (it->done) {
            it->thread.join();
            it = connections_.erase(it);
        } else {
            ++it;
        }
    }
}

void http_service::stop()
{
    if (stopping_.exchange(true)) return;
    asio::post(ioc_, [this] {
        boost::system::error_code ec;
        acceptor_.close(ec);
    });
    if (accept_thread_.joinable()) accept_thread_.join();
    std::list<connection> conns;
    {
        std::lock_guard lock(conn_mutex_);
        for (auto& c : connections_)
            if (!c.done) ::shutdown(c.fd, SHUT_RDWR);
        conns.splice(conns.end(), connections_);
    }
    for (auto& c : conns) c.thread.join();
}

void http_service::serve(tcp::socket socket, connection& conn)
{
    beast::flat_buffer buffer;
    beast::error_code ec;
    for (;;) {
        http_request req;
        http::read(socket, buffer, req, ec);
        if (ec) break;
        spdlog::debug("{} {}", std::string(req.method_string()), std::string(req.target()));
        if (websocket::is_upgrade(req)) {
            auto path = std::string(req.target().substr(0, req.target().find('?')));
            if (path == "/api/v1/stream") {
                stream(std::move(socket), req);
                conn.done = true;
                return;
            }
            auto res = error(req, http::status::not_found, "no stream at " + path);
            http::write(socket, res, ec);
            break;
        }
        auto res = handle_request(session_, req);
        http::write(socket, res, ec);
        if (ec || !res.keep_alive()) break;
    }
    socket.shutdown(tcp::socket::shutdown_send, ec);
    conn.done = true;
}

void http_service::stream(tcp::socket socket, const http_request& req)
{
    std::size_t next = 0;
    try {
        auto t = split_target(std::string_view(req.target().data(), req.target().size()));
        for (const auto& [key, value] : t.params) {
            if (key != "from") throw bad_request("unknown parameter '" + key + "'");
            next = parse_int<std::size_t>(key, value);
        }
    } catch (const bad_request& e) {
        beast::error_code ec;
        auto res = error(req, http::status::bad_request, e.what());
        http::write(socket, res, ec);
        return;
    }

    websocket::stream<tcp::socket> ws(std::move(socket));
    beast::error_code ec;
    ws.set_option(websocket::stream_base::decorator(
        [](websocket::response_type& res) { res.set(http::field::server, "consensus-lens"); }));
    ws.accept(req, ec);
    if (ec) return;
    ws.text(true);

    const auto& store = session_.stream();
    while (!stopping_) {
        auto size = store.wait_for_more(next, std::chrono::milliseconds(250));
        if (size > next) {
            for (const auto& line : store.lines(next, size - next)) {
                ws.write(asio::buffer(line), ec);
                if (ec) return;
            }
            next = size;
        }
        if (store.closed() && next >= store.size()) {
            ws.close(websocket::close_reason(websocket::close_code::normal, "stream complete"), ec);
            // Drain until the peer acknowledges the close.
            beast::flat_buffer sink;
            while (!ec) ws.read(sink, ec);
            return;
        }
    }
}

} // namespace clens
