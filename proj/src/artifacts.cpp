#include "d2c/artifacts.hpp"

#include <charconv>
#include <sstream>
#include <vector>

#include "d2c/textio.hpp"

namespace d2c::artifacts {
namespace {

using textio::format_double;

class Writer {
 public:
  explicit Writer(std::string_view kind) { out_ << "# d2c " << kind << " v" << kFormatVersion << '\n'; }

  void header(const Header& h) {
    field("provenance", h.provenance.empty() ? "-" : h.provenance);
    field("parent", h.parent.empty() ? "-" : h.parent);
    field("benchmark", h.benchmark.empty() ? "-" : h.benchmark);
    number("dt", h.dt);
  }
  void field(std::string_view key, std::string_view value) { out_ << key << ' ' << value << '\n'; }
  void number(std::string_view key, double v) { out_ << key << ' ' << format_double(v) << '\n'; }
  void count(std::string_view key, std::size_t v) { out_ << key << ' ' << v << '\n'; }
  void flag(std::string_view key, bool v) { out_ << key << ' ' << (v ? 1 : 0) << '\n'; }
  void counts(std::string_view key, const std::vector<std::size_t>& v) {
    out_ << key << ' ' << v.size();
    for (auto x : v) out_ << ' ' << x;
    out_ << '\n';
  }
  void matrix(std::string_view name, const Matrix& m) {
    out_ << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (j > 0) out_ << ' ';
        out_ << format_double(m(i, j));
      }
      out_ << '\n';
    }
  }
  void vector(std::string_view name, const Vector& v) {
    out_ << "vector " << name << ' ' << v.size() << '\n';
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (i > 0) out_ << ' ';
      out_ << format_double(v(i));
    }
    out_ << '\n';
  }
  void rows(std::string_view name, const std::vector<Vector>& seq) {
    const Eigen::Index cols = seq.empty() ? 0 : seq.front().size();
    Matrix m(static_cast<Eigen::Index>(seq.size()), cols);
    for (std::size_t i = 0; i < seq.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = seq[i].transpose();
    matrix(name, m);
  }
  void sequence(std::string_view name, const std::vector<Matrix>& seq) {
    count(std::string(name) + "_count", seq.size());
    for (std::size_t i = 0; i < seq.size(); ++i) matrix(std::string(name) + "." + std::to_string(i), seq[i]);
  }
  void end() { out_ << "end\n"; }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && line[i] == ' ') ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ') ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

class Reader {
 public:
  Reader(std::string_view text, std::string source) : source_(std::move(source)) {
    std::size_t pos = 0;
    while (pos < text.size()) {
      const std::size_t nl = text.find('\n', pos);
      if (nl == std::string_view::npos) {
        lines_.push_back(text.substr(pos));
        break;
      }
      lines_.push_back(text.substr(pos, nl - pos));
      pos = nl + 1;
    }
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(source_, std::max<std::size_t>(line_, 1), what); }

  std::string_view next() {
    if (index_ >= lines_.size()) {
      line_ = lines_.size() + 1;
      fail("unexpected end of file");
    }
    line_ = index_ + 1;
    return lines_[index_++];
  }

  void expect_kind(std::string_view kind) {
    const std::string expected = "# d2c " + std::string(kind) + " v" + std::to_string(kFormatVersion);
    const std::string_view got = next();
    if (got != expected) fail("expected header '" + expected + "', found '" + std::string(got) + "'");
  }

  std::string field(std::string_view key) {
    const std::string_view line = next();
    const auto tokens = split(line);
    if (tokens.size() != 2 || tokens[0] != key) fail("expected '" + std::string(key) + " <value>'");
    return std::string(tokens[1]);
  }

  std::string optional_field(std::string_view key) {
    std::string v = field(key);
    return v == "-" ? std::string() : v;
  }

  double number(std::string_view key) { return to_double(field(key)); }

  std::size_t count(std::string_view key) { return to_count(field(key)); }

  bool flag(std::string_view key) {
    const std::string v = field(key);
    if (v != "0" && v != "1") fail("expected 0 or 1 for '" + std::string(key) + "'");
    return v == "1";
  }

  std::vector<std::size_t> counts(std::string_view key) {
    const auto tokens = split(next());
    if (tokens.size() < 2 || tokens[0] != key) fail("expected '" + std::string(key) + " <n> <values...>'");
    const std::size_t n = to_count(tokens[1]);
    if (tokens.size() != n + 2) fail("expected " + std::to_string(n) + " values for '" + std::string(key) + "'");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(to_count(tokens[i + 2]));
    return out;
  }

  Matrix matrix(std::string_view name) {
    const auto head = split(next());
    if (head.size() != 4 || head[0] != "matrix" || head[1] != name) {
      fail("expected 'matrix " + std::string(name) + " <rows> <cols>'");
    }
    const auto rows = static_cast<Eigen::Index>(to_count(head[2]));
    const auto cols = static_cast<Eigen::Index>(to_count(head[3]));
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const auto tokens = split(next());
      if (static_cast<Eigen::Index>(tokens.size()) != cols) {
        fail("matrix " + std::string(name) + " row " + std::to_string(i) + ": expected " + std::to_string(cols) +
             " values, found " + std::to_string(tokens.size()));
      }
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = to_double(tokens[static_cast<std::size_t>(j)]);
    }
    return m;
  }

  Vector vector(std::string_view name) {
    const auto head = split(next());
    if (head.size() != 3 || head[0] != "vector" || head[1] != name) {
      fail("expected 'vector " + std::string(name) + " <size>'");
    }
    const std::size_t n = to_count(head[2]);
    const auto tokens = split(next());
    if (tokens.size() != n) fail("vector " + std::string(name) + ": expected " + std::to_string(n) + " values");
    Vector v(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) v(static_cast<Eigen::Index>(i)) = to_double(tokens[i]);
    return v;
  }

  std::vector<Vector> rows(std::string_view name) {
    const Matrix m = matrix(name);
    std::vector<Vector> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m.row(i).transpose();
    return out;
  }

  std::vector<Matrix> sequence(std::string_view name) {
    const std::size_t n = count(std::string(name) + "_count");
    std::vector<Matrix> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(matrix(std::string(name) + "." + std::to_string(i)));
    return out;
  }

  void header(Header& h) {
    h.provenance = optional_field("provenance");
    h.parent = optional_field("parent");
    h.benchmark = optional_field("benchmark");
    h.dt = number("dt");
  }

  void end() {
    if (next() != "end") fail("expected 'end'");
    while (index_ < lines_.size()) {
      line_ = index_ + 1;
      if (!lines_[index_++].empty()) fail("unexpected content after 'end'");
    }
  }

  /// Runs a semantic check and reports its failure at the current line.
  template <class F>
  void check(F&& f) {
    try {
      f();
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      fail(e.what());
    }
  }

 private:
  double to_double(std::string_view token) const {
    try {
      return textio::parse_double(token);
    } catch (const std::invalid_argument&) {
      fail("not a number: '" + std::string(token) + "'");
    }
  }

  std::size_t to_count(std::string_view token) const {
    std::size_t v = 0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
    if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
      fail("not a non-negative integer: '" + std::string(token) + "'");
    }
    return v;
  }

  std::string source_;
  std::vector<std::string_view> lines_;
  std::size_t index_ = 0;
  std::size_t line_ = 0;
};

void write_cost(Writer& w, const openloop::CostSpec& c) {
  w.matrix("state_weight", c.state_weight);
  w.matrix("control_weight", c.control_weight);
  w.matrix("terminal_weight", c.terminal_weight);
  w.vector("target", c.target);
}

openloop::CostSpec read_cost(Reader& r) {
  openloop::CostSpec c;
  c.state_weight = r.matrix("state_weight");
  c.control_weight = r.matrix("control_weight");
  c.terminal_weight = r.matrix("terminal_weight");
  c.target = r.vector("target");
  r.check([&] { c.validate(static_cast<std::size_t>(c.target.size()), static_cast<std::size_t>(c.control_weight.rows())); });
  return c;
}

void write_trajectory(Writer& w, const Trajectory& t) {
  w.rows("states", t.states);
  w.rows("controls", t.controls);
}

Trajectory read_trajectory(Reader& r) {
  Trajectory t;
  t.states = r.rows("states");
  t.controls = r.rows("controls");
  r.check([&] { t.validate(); });
  if (t.controls.empty()) r.fail("trajectory has no controls");
  return t;
}

void write_rom(Writer& w, const sysid::LtvRom& rom) {
  w.count("horizon", rom.horizon);
  w.count("order", rom.order);
  w.count("output_dim", rom.output_dim);
  w.count("input_dim", rom.input_dim);
  w.count("window_lo", rom.window_lo);
  w.count("window_hi", rom.window_hi);
  w.counts("warnings", rom.warnings);
  w.sequence("a", rom.a);
  w.sequence("b", rom.b);
  w.sequence("c", rom.c);
  w.count("spectra", rom.singular_values.size());
  for (std::size_t i = 0; i < rom.singular_values.size(); ++i) {
    w.vector("sigma." + std::to_string(i), rom.singular_values[i]);
  }
}

sysid::LtvRom read_rom(Reader& r) {
  sysid::LtvRom rom;
  rom.horizon = r.count("horizon");
  rom.order = r.count("order");
  rom.output_dim = r.count("output_dim");
  rom.input_dim = r.count("input_dim");
  rom.window_lo = r.count("window_lo");
  rom.window_hi = r.count("window_hi");
  rom.warnings = r.counts("warnings");
  rom.a = r.sequence("a");
  rom.b = r.sequence("b");
  rom.c = r.sequence("c");
  const std::size_t spectra = r.count("spectra");
  for (std::size_t i = 0; i < spectra; ++i) rom.singular_values.push_back(r.vector("sigma." + std::to_string(i)));
  r.check([&] { rom.validate(); });
  return rom;
}

}  // namespace

std::string to_text(const NominalArtifact& a) {
  Writer w("nominal");
  w.header(a.header);
  w.field("method", a.method.empty() ? "-" : a.method);
  w.flag("converged", a.converged);
  w.count("iterations", a.iterations);
  w.count("rollouts", a.rollouts);
  w.number("cost", a.final_cost);
  write_cost(w, a.cost);
  write_trajectory(w, a.trajectory);
  w.end();
  return w.str();
}

NominalArtifact parse_nominal(std::string_view text, const std::string& source) {
  Reader r(text, source);
  r.expect_kind("nominal");
  NominalArtifact a;
  r.header(a.header);
  a.method = r.optional_field("method");
  a.converged = r.flag("converged");
  a.iterations = r.count("iterations");
  a.rollouts = r.count("rollouts");
  a.final_cost = r.number("cost");
  a.cost = read_cost(r);
  a.trajectory = read_trajectory(r);
  if (a.trajectory.states.front().size() != a.cost.target.size()) r.fail("state dimension differs from the cost target");
  r.end();
  return a;
}

std::string to_text(const RomArtifact& a) {
  Writer w("rom");
  w.header(a.header);
  w.number("sigma", a.sigma);
  w.count("p", a.p);
  w.count("q", a.q);
  w.count("rollouts", a.rollouts);
  write_rom(w, a.rom);
  w.end();
  return w.str();
}

RomArtifact parse_rom(std::string_view text, const std::string& source) {
  Reader r(text, source);
  r.expect_kind("rom");
  RomArtifact a;
  r.header(a.header);
  a.sigma = r.number("sigma");
  a.p = r.count("p");
  a.q = r.count("q");
  a.rollouts = r.count("rollouts");
  a.rom = read_rom(r);
  r.end();
  return a;
}

std::string to_text(const PolicyArtifact& a) {
  const auto& p = a.policy;
  Writer w("policy");
  w.header(a.header);
  w.number("measurement_std", p.config.measurement_std);
  w.number("initial_covariance", p.config.initial_covariance);
  w.number("process_noise_std", p.config.process_noise_std);
  write_cost(w, p.cost);
  write_trajectory(w, p.nominal);
  write_rom(w, p.rom);
  w.sequence("lqr_gain", p.lqr_gains);
  w.sequence("kalman_gain", p.kalman_gains);
  w.sequence("covariance", p.covariances);
  w.end();
  return w.str();
}

PolicyArtifact parse_policy(std::string_view text, const std::string& source) {
  Reader r(text, source);
  r.expect_kind("policy");
  PolicyArtifact a;
  auto& p = a.policy;
  r.header(a.header);
  p.config.measurement_std = r.number("measurement_std");
  p.config.initial_covariance = r.number("initial_covariance");
  p.config.process_noise_std = r.number("process_noise_std");
  p.cost = read_cost(r);
  p.nominal = read_trajectory(r);
  p.rom = read_rom(r);
  p.lqr_gains = r.sequence("lqr_gain");
  p.kalman_gains = r.sequence("kalman_gain");
  p.covariances = r.sequence("covariance");
  r.check([&] { p.validate(); });
  r.end();
  return a;
}

void save(const std::filesystem::path& path, const NominalArtifact& a) { textio::write_file_atomic(path, to_text(a)); }
void save(const std::filesystem::path& path, const RomArtifact& a) { textio::write_file_atomic(path, to_text(a)); }
void save(const std::filesystem::path& path, const PolicyArtifact& a) { textio::write_file_atomic(path, to_text(a)); }

NominalArtifact load_nominal(const std::filesystem::path& path) {
  return parse_nominal(textio::read_file(path), path.string());
}

RomArtifact load_rom(const std::filesystem::path& path) { return parse_rom(textio::read_file(path), path.string()); }

PolicyArtifact load_policy(const std::filesystem::path& path) {
  return parse_policy(textio::read_file(path), path.string());
}

}  // namespace d2c::artifacts
