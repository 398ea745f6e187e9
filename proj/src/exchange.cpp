#include "ba/exchange.hpp"

#include <bit>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <sstream>

#include "ba/errors.hpp"

namespace ba {
namespace {

constexpr char kMagic[4] = {'B', 'A', 'X', 'M'};
constexpr std::uint32_t kRequestKind = 1;
constexpr std::uint32_t kResponseKind = 2;
constexpr char kTextTag[] = "ba-exchange";

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out_.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out_.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void i64(long long v) { u64(static_cast<std::uint64_t>(v)); }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}

  std::uint64_t raw(int width) {
    if (pos_ + width > bytes_.size()) throw ParseError(0, "truncated exchange message");
    std::uint64_t v = 0;
    for (int b = 0; b < width; ++b) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    }
    pos_ += width;
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(raw(4)); }
  std::uint64_t u64() { return raw(8); }
  double f64() { return std::bit_cast<double>(raw(8)); }
  long long i64() { return static_cast<long long>(raw(8)); }
  std::size_t count() {
    const std::uint64_t n = u64();
    if (n > bytes_.size()) throw ParseError(0, "implausible element count");
    return static_cast<std::size_t>(n);
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_;
};

std::string frame(std::uint32_t kind, const std::string& payload) {
  Writer w;
  w.str().append(kMagic, 4);
  w.u32(kExchangeVersion);
  w.u32(kind);
  w.u64(payload.size());
  w.str() += payload;
  return std::move(w.str());
}

// Returns the payload offset after validating the binary header.
std::size_t open_frame(const std::string& bytes, std::uint32_t kind) {
  Reader r(bytes, 4);
  if (r.u32() != kExchangeVersion) throw ParseError(0, "unsupported exchange version");
  if (r.u32() != kind) throw ParseError(0, "unexpected exchange message kind");
  const std::uint64_t length = r.u64();
  if (bytes.size() - r.pos() != length) throw ParseError(0, "exchange payload length mismatch");
  return r.pos();
}

bool is_binary(const std::string& bytes) {
  return bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0;
}

std::string real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Line-oriented text reader.
class TextReader {
 public:
  explicit TextReader(const std::string& text) : in_(text) {}

  std::istringstream& line() {
    std::string s;
    if (!std::getline(in_, s)) throw ParseError(line_, "truncated exchange message");
    ++line_;
    current_.clear();
    current_.str(s);
    return current_;
  }

  template <class T>
  T scalar(const char* key) {
    std::istringstream& ls = line();
    std::string k;
    T v{};
    if (!(ls >> k >> v) || k != key) throw ParseError(line_, std::string("expected ") + key);
    return v;
  }

  void header(const char* kind) {
    std::istringstream& ls = line();
    std::string tag, k;
    std::uint32_t version = 0;
    if (!(ls >> tag >> version >> k) || tag != kTextTag) throw ParseError(line_, "bad header");
    if (version != kExchangeVersion) throw ParseError(line_, "unsupported exchange version");
    if (k != kind) throw ParseError(line_, "unexpected exchange message kind");
  }

  std::size_t line_number() const { return line_; }

 private:
  std::istringstream in_;
  std::istringstream current_;
  std::size_t line_ = 0;
};

double text_real(std::istringstream& ls, std::size_t line) {
  std::string s;
  if (!(ls >> s)) throw ParseError(line, "missing value");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) throw ParseError(line, "bad number '" + s + "'");
  return v;
}

}  // namespace

std::string encode(const WorkerRequest& msg, ExchangeEncoding encoding) {
  if (encoding == ExchangeEncoding::Binary) {
    Writer w;
    w.i64(msg.partition);
    w.i64(msg.iteration);
    w.f64(msg.rho);
    w.u64(msg.point_ids.size());
    for (std::size_t k = 0; k < msg.point_ids.size(); ++k) {
      w.i64(msg.point_ids[k]);
      for (int c = 0; c < 3; ++c) w.f64(msg.anchors[k](c));
    }
    return frame(kRequestKind, w.str());
  }
  std::string out = std::string(kTextTag) + " " + std::to_string(kExchangeVersion) + " request\n";
  out += "partition " + std::to_string(msg.partition) + "\n";
  out += "iteration " + std::to_string(msg.iteration) + "\n";
  out += "rho " + real(msg.rho) + "\n";
  out += "points " + std::to_string(msg.point_ids.size()) + "\n";
  for (std::size_t k = 0; k < msg.point_ids.size(); ++k) {
    out += std::to_string(msg.point_ids[k]);
    for (int c = 0; c < 3; ++c) out += " " + real(msg.anchors[k](c));
    out += "\n";
  }
  return out;
}

std::string encode(const WorkerResponse& msg, ExchangeEncoding encoding) {
  if (encoding == ExchangeEncoding::Binary) {
    Writer w;
    w.i64(msg.partition);
    w.i64(msg.iteration);
    w.u64(msg.camera_ids.size());
    w.u64(msg.camera_block_size);
    for (std::size_t j = 0; j < msg.camera_ids.size(); ++j) {
      w.i64(msg.camera_ids[j]);
      for (int c = 0; c < msg.camera_block_size; ++c) w.f64(msg.cameras[j](c));
    }
    w.u64(msg.point_ids.size());
    for (std::size_t k = 0; k < msg.point_ids.size(); ++k) {
      w.i64(msg.point_ids[k]);
      for (int c = 0; c < 3; ++c) w.f64(msg.points[k](c));
    }
    return frame(kResponseKind, w.str());
  }
  std::string out = std::string(kTextTag) + " " + std::to_string(kExchangeVersion) + " response\n";
  out += "partition " + std::to_string(msg.partition) + "\n";
  out += "iteration " + std::to_string(msg.iteration) + "\n";
  out += "cameras " + std::to_string(msg.camera_ids.size()) + "\n";
  out += "block " + std::to_string(msg.camera_block_size) + "\n";
  for (std::size_t j = 0; j < msg.camera_ids.size(); ++j) {
    out += std::to_string(msg.camera_ids[j]);
    for (int c = 0; c < msg.camera_block_size; ++c) out += " " + real(msg.cameras[j](c));
    out += "\n";
  }
  out += "points " + std::to_string(msg.point_ids.size()) + "\n";
  for (std::size_t k = 0; k < msg.point_ids.size(); ++k) {
    out += std::to_string(msg.point_ids[k]);
    for (int c = 0; c < 3; ++c) out += " " + real(msg.points[k](c));
    out += "\n";
  }
  return out;
}

WorkerRequest decode_request(const std::string& bytes) {
  WorkerRequest msg;
  if (is_binary(bytes)) {
    Reader r(bytes, open_frame(bytes, kRequestKind));
    msg.partition = static_cast<int>(r.i64());
    msg.iteration = static_cast<int>(r.i64());
    msg.rho = r.f64();
    const std::size_t n = r.count();
    msg.point_ids.resize(n);
    msg.anchors.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      msg.point_ids[k] = static_cast<int>(r.i64());
      for (int c = 0; c < 3; ++c) msg.anchors[k](c) = r.f64();
    }
    return msg;
  }
  TextReader t(bytes);
  t.header("request");
  msg.partition = t.scalar<int>("partition");
  msg.iteration = t.scalar<int>("iteration");
  {
    std::istringstream& ls = t.line();
    std::string key;
    if (!(ls >> key) || key != "rho") throw ParseError(t.line_number(), "expected rho");
    msg.rho = text_real(ls, t.line_number());
  }
  const std::size_t n = t.scalar<std::size_t>("points");
  msg.point_ids.resize(n);
  msg.anchors.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::istringstream& ls = t.line();
    if (!(ls >> msg.point_ids[k])) throw ParseError(t.line_number(), "malformed record");
    for (int c = 0; c < 3; ++c) msg.anchors[k](c) = text_real(ls, t.line_number());
  }
  return msg;
}

WorkerResponse decode_response(const std::string& bytes) {
  WorkerResponse msg;
  if (is_binary(bytes)) {
    Reader r(bytes, open_frame(bytes, kResponseKind));
    msg.partition = static_cast<int>(r.i64());
    msg.iteration = static_cast<int>(r.i64());
    const std::size_t m = r.count();
    msg.camera_block_size = static_cast<int>(r.count());
    msg.camera_ids.resize(m);
    msg.cameras.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
      msg.camera_ids[j] = static_cast<int>(r.i64());
      msg.cameras[j].resize(msg.camera_block_size);
      for (int c = 0; c < msg.camera_block_size; ++c) msg.cameras[j](c) = r.f64();
    }
    const std::size_t n = r.count();
    msg.point_ids.resize(n);
    msg.points.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      msg.point_ids[k] = static_cast<int>(r.i64());
      for (int c = 0; c < 3; ++c) msg.points[k](c) = r.f64();
    }
    return msg;
  }
  TextReader t(bytes);
  t.header("response");
  msg.partition = t.scalar<int>("partition");
  msg.iteration = t.scalar<int>("iteration");
  const std::size_t m = t.scalar<std::size_t>("cameras");
  msg.camera_block_size = t.scalar<int>("block");
  msg.camera_ids.resize(m);
  msg.cameras.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    std::istringstream& ls = t.line();
    if (!(ls >> msg.camera_ids[j])) throw ParseError(t.line_number(), "malformed record");
    msg.cameras[j].resize(msg.camera_block_size);
    for (int c = 0; c < msg.camera_block_size; ++c) {
      msg.cameras[j](c) = text_real(ls, t.line_number());
    }
  }
  const std::size_t n = t.scalar<std::size_t>("points");
  msg.point_ids.resize(n);
  msg.points.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::istringstream& ls = t.line();
    if (!(ls >> msg.point_ids[k])) throw ParseError(t.line_number(), "malformed record");
    for (int c = 0; c < 3; ++c) msg.points[k](c) = text_real(ls, t.line_number());
  }
  return msg;
}

}  // namespace ba
