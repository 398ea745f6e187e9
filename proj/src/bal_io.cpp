#include <Eigen/Geometry>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

#include "ba/io.hpp"

namespace ba {
namespace {

// Whitespace tokenizer that remembers the current line number.
class Tokenizer {
 public:
  explicit Tokenizer(std::istream& in) : in_(in) {}

  bool next(std::string& token) {
    token.clear();
    int c;
    while ((c = in_.get()) != EOF) {
      if (c == '\n') ++line_;
      if (!std::isspace(c)) break;
    }
    if (c == EOF) return false;
    token.push_back(static_cast<char>(c));
    while ((c = in_.peek()) != EOF && !std::isspace(c)) token.push_back(static_cast<char>(in_.get()));
    return true;
  }

  std::size_t line() const { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 1;
};

double read_double(Tokenizer& tok, const char* section) {
  std::string s;
  if (!tok.next(s)) throw ParseError(tok.line(), std::string("truncated ") + section + " section");
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(tok.line(), "invalid number '" + s + "' in " + section + " section");
  }
  return value;
}

long read_integer(Tokenizer& tok, const char* section) {
  std::string s;
  if (!tok.next(s)) throw ParseError(tok.line(), std::string("truncated ") + section + " section");
  long value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(tok.line(), "invalid integer '" + s + "' in " + section + " section");
  }
  return value;
}

// Half turn about x; its own inverse.
Eigen::Vector3d flip_rotation(const Eigen::Vector3d& axis_angle) {
  const Eigen::Matrix3d r = Eigen::Vector3d(1.0, -1.0, -1.0).asDiagonal() * rotation_matrix(axis_angle);
  const Eigen::AngleAxisd aa(r);
  return aa.axis() * aa.angle();
}

void flip_camera(CameraParams<double>& cam) {
  cam.pose.rotation = flip_rotation(cam.pose.rotation);
  cam.pose.translation.tail<2>() *= -1.0;
}

}  // namespace

Problem parse_bal(std::istream& in, BalConvention convention) {
  Tokenizer tok(in);
  const long m = read_integer(tok, "header");
  const long n = read_integer(tok, "header");
  const long count = read_integer(tok, "header");
  if (m <= 0 || n <= 0 || count <= 0) throw ParseError(tok.line(), "header counts must be positive");

  std::vector<Observation> observations;
  observations.reserve(count);
  for (long k = 0; k < count; ++k) {
    Observation o;
    const long cam = read_integer(tok, "observations");
    const long pt = read_integer(tok, "observations");
    if (cam < 0 || cam >= m || pt < 0 || pt >= n) {
      throw IndexOutOfRange("observation record " + std::to_string(k) + " (line " +
                            std::to_string(tok.line()) + ") index out of range");
    }
    o.camera = static_cast<int>(cam);
    o.point = static_cast<int>(pt);
    o.pixel.x() = read_double(tok, "observations");
    o.pixel.y() = read_double(tok, "observations");
    if (convention == BalConvention::NegativeZ) o.pixel.y() = -o.pixel.y();
    observations.push_back(o);
  }

  CameraVector cameras(m);
  for (long j = 0; j < m; ++j) {
    Eigen::Matrix<double, 9, 1> v;
    for (int c = 0; c < 9; ++c) v(c) = read_double(tok, "cameras");
    CameraParams<double> cam;
    cam.layout = CameraLayout::Bal9;
    cameras[j] = cam.with_vector(v);
    if (convention == BalConvention::NegativeZ) flip_camera(cameras[j]);
  }
  PointVector points(n);
  for (long i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) points[i](c) = read_double(tok, "points");
  }
  return Problem(CameraLayout::Bal9, std::move(cameras), std::move(points),
                 std::move(observations));
}

Problem read_bal_file(const std::string& path, BalConvention convention) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return parse_bal(in, convention);
}

void write_bal(std::ostream& out, const Problem& problem, BalConvention convention) {
  if (problem.layout() != CameraLayout::Bal9) {
    throw Error("BAL output requires the 9-parameter camera layout");
  }
  char buf[64];
  auto num = [&](double v) -> const char* {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
  };
  out << problem.num_cameras() << ' ' << problem.num_points() << ' '
      << problem.num_observations() << '\n';
  for (const Observation& o : problem.observations()) {
    const double y = convention == BalConvention::NegativeZ ? -o.pixel.y() : o.pixel.y();
    out << o.camera << ' ' << o.point << ' ' << num(o.pixel.x()) << ' ';
    out << num(y) << '\n';
  }
  for (CameraParams<double> cam : problem.cameras()) {
    if (convention == BalConvention::NegativeZ) flip_camera(cam);
    const Eigen::VectorXd v = cam.to_vector();
    for (int c = 0; c < 9; ++c) out << num(v(c)) << '\n';
  }
  for (const Eigen::Vector3d& p : problem.points()) {
    for (int c = 0; c < 3; ++c) out << num(p(c)) << '\n';
  }
}

}  // namespace ba
