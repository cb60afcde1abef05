#pragma once

// CSV and JSON artifacts. Doubles are written with 17 significant digits so
// that reading an artifact back gives the same bits; JSON has no inf or nan,
// so those travel as the strings "inf", "-inf" and "nan".

#include "jumpent/core.hpp"
#include "jumpent/lyapunov.hpp"
#include "jumpent/phi_entropy.hpp"
#include "jumpent/poisson_space.hpp"
#include "jumpent/sde_engine.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace jumpent::io {

using json = nlohmann::ordered_json;

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw InvalidArgument("not a number: '" + s + "'");
  return v;
}

inline json num(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

inline double get_num(const json& j) {
  if (j.is_string()) return parse_double(j.get<std::string>());
  if (j.is_number()) return j.get<double>();
  throw InvalidArgument("expected a number, got " + j.dump());
}

inline json num_array(std::span<const double> xs) {
  json a = json::array();
  for (double x : xs) a.push_back(num(x));
  return a;
}

inline json vec_json(const Vec& x) {
  json a = json::array();
  for (Eigen::Index i = 0; i < x.size(); ++i) a.push_back(num(x(i)));
  return a;
}

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw InvalidArgument("cannot create output directory " + dir.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << text;
  if (!out) throw InvalidArgument("write failed for " + path.string());
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

/// Rows under a header; cells are text, numbers are written by format_double.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_cells(std::vector<std::string> row) {
    require(row.size() == header_.size(), "CSV row width does not match the header");
    for (const auto& cell : row)
      require(cell.find_first_of(",\n\"") == std::string::npos, "CSV cell needs quoting: " + cell);
    rows_.push_back(std::move(row));
  }
  void add(const std::vector<double>& row) {
    std::vector<std::string> cells;
    for (double v : row) cells.push_back(format_double(v));
    add_cells(std::move(cells));
  }

  const std::vector<std::string>& header() const { return header_; }
  std::size_t size() const { return rows_.size(); }
  const std::string& cell(std::size_t i, std::size_t k) const { return rows_.at(i).at(k); }
  double value(std::size_t i, std::size_t k) const { return parse_double(cell(i, k)); }
  std::size_t column(const std::string& name) const {
    for (std::size_t k = 0; k < header_.size(); ++k)
      if (header_[k] == name) return k;
    throw InvalidArgument("no CSV column " + name);
  }

  std::string str() const {
    std::string out = join(header_);
    for (const auto& row : rows_) out += join(row);
    return out;
  }

  void write(const std::filesystem::path& path) const { write_text(path, str()); }

  static CsvTable read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw InvalidArgument(path.string() + " is empty");
    CsvTable t(split(line));
    while (std::getline(in, line))
      if (!line.empty()) t.add_cells(split(line));
    return t;
  }

 private:
  static std::string join(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t k = 0; k < cells.size(); ++k) out += (k ? "," : "") + cells[k];
    return out + "\n";
  }
  static std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      out.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return out;
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// path_id,time,x_1..x_d: each path's checkpoints, then its terminal state at T.
inline CsvTable ensemble_table(const TrajectoryEnsemble& ens) {
  std::vector<std::string> header{"path_id", "time"};
  for (int k = 1; k <= ens.dim; ++k) header.push_back("x_" + std::to_string(k));
  CsvTable t(header);
  auto row = [&](std::size_t i, double time, const Vec& x) {
    std::vector<double> r{static_cast<double>(i), time};
    for (Eigen::Index k = 0; k < x.size(); ++k) r.push_back(x(k));
    t.add(std::move(r));
  };
  for (std::size_t i = 0; i < ens.terminal.size(); ++i) {
    for (std::size_t k = 0; k < ens.checkpoint_times.size(); ++k)
      row(i, ens.checkpoint_times[k], ens.checkpoint_states[k][i]);
    row(i, ens.T, ens.terminal[i]);
  }
  return t;
}

/// Inverse of ensemble_table; seed, dt and scheme come from the sidecar.
inline TrajectoryEnsemble ensemble_from_table(const CsvTable& t, double T) {
  require(t.header().size() >= 3, "ensemble table needs a state column");
  TrajectoryEnsemble ens;
  ens.dim = static_cast<int>(t.header().size()) - 2;
  ens.T = T;
  std::vector<std::vector<std::pair<double, Vec>>> paths;
  for (std::size_t row = 0; row < t.size(); ++row) {
    const auto i = static_cast<std::size_t>(t.value(row, 0));
    if (i >= paths.size()) paths.resize(i + 1);
    Vec x(ens.dim);
    for (int k = 0; k < ens.dim; ++k) x(k) = t.value(row, 2 + static_cast<std::size_t>(k));
    paths[i].emplace_back(t.value(row, 1), x);
  }
  ens.n_paths = paths.size();
  if (paths.empty()) return ens;
  const std::size_t n_check = paths.front().size() - 1;
  for (std::size_t k = 0; k < n_check; ++k) ens.checkpoint_times.push_back(paths.front()[k].first);
  ens.checkpoint_states.assign(n_check, {});
  for (auto& p : paths) {
    require(p.size() == n_check + 1, "ensemble paths have different row counts");
    for (std::size_t k = 0; k < n_check; ++k) ens.checkpoint_states[k].push_back(p[k].second);
    ens.terminal.push_back(p.back().second);
  }
  return ens;
}

inline json measure_json(const RadialLevyMeasure& nu) {
  return {{"dim", nu.dim()},
          {"alpha", num(nu.alpha())},
          {"kappa1", num(nu.kappa1())},
          {"kappa2", num(nu.kappa2())},
          {"rho", nu.rho().name()}};
}

inline json ensemble_sidecar(const TrajectoryEnsemble& ens, const NoiseIncrementPlan& plan,
                             const CoefficientField& c) {
  json j = {{"seed", ens.seed},
            {"n_paths", ens.n_paths},
            {"T", num(ens.T)},
            {"dt", num(ens.dt)},
            {"scheme", ens.scheme},
            {"coefficients", c.name},
            {"noise", to_string(plan.mode())},
            {"cutoff", num(plan.cutoff())}};
  if (plan.measure()) j["measure"] = measure_json(*plan.measure());
  j["checkpoint_times"] = num_array(ens.checkpoint_times);
  return j;
}

/// t,entropy,stderr,bound with bound = Ent0 e^(-rate t) (1 + slack).
inline CsvTable decay_table(const DecayCheck& d) {
  CsvTable t({"t", "entropy", "stderr", "bound"});
  for (const auto& p : d.points) t.add({p.t, p.entropy, p.stderr_, p.envelope * (1.0 + d.slack)});
  return t;
}

inline CsvTable bracket_table(const AnalysisReport& r) {
  CsvTable t({"r", "bracket"});
  for (std::size_t k = 0; k < r.radii.size(); ++k) t.add({r.radii[k], r.bracket[k]});
  return t;
}

inline json to_json(const LimsupEstimate& e) {
  return {{"value", num(e.value)},           {"outer_max", num(e.outer_max)},
          {"last", num(e.last)},             {"slope", num(e.slope)},
          {"log_slope", num(e.log_slope)},   {"monotone", e.monotone},
          {"minus_infinity", e.minus_infinity}, {"vanishes", e.vanishes},
          {"plus_infinity", e.plus_infinity}};
}

inline json to_json(const AnalysisReport& r) {
  json cases = json::array();
  for (std::size_t k = 0; k < r.cases.size(); ++k) {
    const auto& c = r.cases[k];
    cases.push_back({{"case", k + 1},
                     {"applicable", c.applicable},
                     {"conditions", c.conditions},
                     {"case_bracket", c.case_bracket},
                     {"holds", c.holds},
                     {"B", c.b_name},
                     {"eps", num(c.eps)},
                     {"bracket_limsup", num(c.bracket_limsup)},
                     {"bracket_minus_infinity", c.bracket_minus_infinity},
                     {"note", c.note}});
  }
  json integrals = json::array();
  for (const auto& i : r.integrals)
    integrals.push_back({{"name", i.name}, {"value", num(i.value)}, {"finite", i.finite}});
  return {{"B", r.b_name},
          {"eps", num(r.eps)},
          {"a_eps", to_json(r.a_eps)},
          {"inverse_integral_diverges", r.inverse_integral_diverges},
          {"c1_holds", r.c1_holds},
          {"c2_holds", r.c2_holds},
          {"theorem_condition", r.theorem_condition},
          {"theta", num(r.theta)},
          {"theta_inferred", r.theta_inferred},
          {"D", num(r.D)},
          {"D_minus_infinity", r.D_minus_infinity},
          {"Theta", num(r.Theta)},
          {"Theta_finite", r.Theta_finite},
          {"sigma2_bounded", r.sigma2_bounded},
          {"cases", cases},
          {"none", r.none},
          {"integrals", integrals},
          {"verdict", r.verdict}};
}

inline json to_json(const Corroboration& c) {
  return {{"times", num_array(c.times)},
          {"q90", num_array(c.q90)},
          {"q90_log_stderr", num_array(c.q90_log_stderr)},
          {"worst_ratio", num(c.worst_ratio)},
          {"worst_excess", num(c.worst_excess)},
          {"n_paths", c.n_paths},
          {"total_steps", c.total_steps},
          {"exploded", c.exploded},
          {"tight", c.tight}};
}

inline json to_json(const WuResult& r) {
  return {{"functional", r.functional}, {"phi", r.phi},         {"entropy", num(r.entropy)},
          {"rhs", num(r.rhs)},          {"margin", num(r.margin)}, {"stderr", num(r.stderr_)},
          {"holds", r.holds},           {"n", r.n}};
}

inline WuResult wu_from_json(const json& j) {
  WuResult r;
  r.functional = j.at("functional").get<std::string>();
  r.phi = j.at("phi").get<std::string>();
  r.entropy = get_num(j.at("entropy"));
  r.rhs = get_num(j.at("rhs"));
  r.margin = get_num(j.at("margin"));
  r.stderr_ = get_num(j.at("stderr"));
  r.holds = j.at("holds").get<bool>();
  r.n = j.at("n").get<std::size_t>();
  return r;
}

inline json to_json(const MeckeResult& r) {
  return {{"lhs", num(r.lhs)}, {"rhs", num(r.rhs)}, {"stderr", num(r.stderr_)}, {"n", r.n}};
}

inline json to_json(const GirsanovResult& r) {
  return {{"reweighted", num(r.reweighted)},
          {"direct", num(r.direct)},
          {"stderr", num(r.stderr_)},
          {"weight_mean", num(r.weight_mean)},
          {"empty_atom", num(r.empty_atom)},
          {"weight_ess_fraction", num(r.weight_ess_fraction)},
          {"n", r.n}};
}

inline json to_json(const BoundCheck& b) {
  return {{"entropy", num(b.entropy)},
          {"entropy_stderr", num(b.entropy_stderr)},
          {"gamma_mean", num(b.gamma_mean)},
          {"gamma_quadrature_error", num(b.gamma_quadrature_error)},
          {"constant", num(b.constant)},
          {"bound", num(b.bound)},
          {"joint_stderr", num(b.joint_stderr)},
          {"margin", num(b.margin)},
          {"holds", b.holds}};
}

inline json to_json(const InvariantDiagnostic& d) {
  return {{"ks_statistic", num(d.ks_statistic)},
          {"ks_p_value", num(d.ks_p_value)},
          {"median_radius_ratio", num(d.median_radius_ratio)},
          {"stationary", d.stationary},
          {"diverging", d.diverging}};
}

}  // namespace jumpent::io
