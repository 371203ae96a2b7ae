#pragma once

// JSON job files for the tse command line tool: parsing, dispatch, and a
// number-exact JSON writer.

#include <cmath>
#include <cstdio>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tse.hpp"

namespace tse::cli {

using Json = nlohmann::ordered_json;

inline const std::set<std::string>& commands() {
  static const std::set<std::string> c{"moments", "prob", "pdf-grid", "tce", "mtce", "tce-sum", "validate"};
  return c;
}

struct Options {
  std::optional<std::uint64_t> seed;
  int threads = 0;  ///< 0 = all cores
};

/// Either JSON for the result document or CSV text (pdf-grid).
struct Output {
  Json json;
  std::string csv;
  bool is_csv = false;
};

// ---------------------------------------------------------------- reading

namespace read {

inline double number(const Json& j, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  throw ValidationError(path + ": expected a number or \"inf\"/\"-inf\"");
}

inline double finite(const Json& j, const std::string& path) {
  const double v = number(j, path);
  if (!std::isfinite(v)) throw ValidationError(path + ": must be finite");
  return v;
}

inline const Json& field(const Json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path + ": expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw ValidationError(path + "." + key + ": required field is missing");
  return *it;
}

inline Vector vector(const Json& j, const std::string& path, bool allow_inf = false) {
  if (!j.is_array()) throw ValidationError(path + ": expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    v(static_cast<Eigen::Index>(i)) = allow_inf ? number(j[i], p) : finite(j[i], p);
  }
  return v;
}

inline Matrix matrix(const Json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ValidationError(path + ": expected a nonempty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    const std::string p = path + "[" + std::to_string(r) + "]";
    if (!j[r].is_array() || j[r].size() != cols) throw ValidationError(p + ": rows must all have the same length");
    m.row(static_cast<Eigen::Index>(r)) = vector(j[r], p).transpose();
  }
  return m;
}

/// Λ as a p×q matrix; a flat array is read as a single column.
inline Matrix shape(const Json& j, const std::string& path) {
  if (j.is_array() && !j.empty() && !j[0].is_array()) return vector(j, path);
  return matrix(j, path);
}

inline RectangleProbSettings qmc(const Json& job) {
  RectangleProbSettings s;
  const auto it = job.find("qmc");
  if (it == job.end()) return s;
  const Json& q = *it;
  if (!q.is_object()) throw ValidationError("qmc: expected an object");
  if (q.contains("max_points")) s.max_points = static_cast<int>(finite(q["max_points"], "qmc.max_points"));
  if (q.contains("target_abs_error")) s.target_abs_error = finite(q["target_abs_error"], "qmc.target_abs_error");
  if (q.contains("seed")) s.seed = static_cast<std::uint64_t>(finite(q["seed"], "qmc.seed"));
  if (q.contains("num_shifts")) s.num_shifts = static_cast<int>(finite(q["num_shifts"], "qmc.num_shifts"));
  s.validate();
  return s;
}

inline double positive_nu(const Json& d) {
  const double nu = finite(field(d, "nu", "distribution"), "distribution.nu");
  if (!(nu > 0.0)) throw ValidationError("distribution.nu: must be positive");
  return nu;
}

}  // namespace read

struct Distribution {
  std::string family;
  SelectionSpec spec;
  std::optional<SutParams> params;
};

inline Distribution distribution(const Json& job) {
  const Json& d = read::field(job, "distribution", "job");
  const std::string family = read::field(d, "family", "distribution").get<std::string>();
  const auto get = [&](const char* key) -> const Json& { return read::field(d, key, "distribution"); };
  const auto path = [](const char* key) { return std::string("distribution.") + key; };
  if (family == "normal" || family == "t") {
    const Vector xi = read::vector(get("xi"), path("xi"));
    const Matrix omega = read::matrix(get("omega"), path("omega"));
    const Kernel k = family == "t" ? Kernel::student_t(read::positive_nu(d)) : Kernel::normal();
    return {family, SelectionSpec::symmetric(EllipticalJoint(k, xi, omega)), std::nullopt};
  }
  const Vector mu = read::vector(get("mu"), path("mu"));
  const Matrix sigma = read::matrix(get("sigma"), path("sigma"));
  SutParams prm;
  if (family == "SN" || family == "ESN" || family == "ST" || family == "EST") {
    const Vector lam = read::vector(get("lambda"), path("lambda"));
    const double tau = (family == "ESN" || family == "EST") ? read::finite(get("tau"), path("tau")) : 0.0;
    const bool t = family == "ST" || family == "EST";
    prm = t ? SutParams::est(mu, sigma, lam, tau, read::positive_nu(d)) : SutParams::esn(mu, sigma, lam, tau);
  } else if (family == "SUN" || family == "SUT") {
    const Matrix lam = read::shape(get("lambda"), path("lambda"));
    const Vector tau = read::vector(get("tau"), path("tau"));
    const Matrix psi = read::matrix(get("psi"), path("psi"));
    prm = family == "SUT" ? SutParams::sut(mu, sigma, lam, tau, psi, read::positive_nu(d))
                          : SutParams::sun(mu, sigma, lam, tau, psi);
  } else {
    throw ValidationError("distribution.family: unknown family '" + family +
                          "' (expected normal, t, SN, ESN, ST, EST, SUN or SUT)");
  }
  return {family, build_selection(prm), prm};
}

inline TruncationBox box(const Json& job, int p) {
  const auto it = job.find("box");
  if (it == job.end()) return TruncationBox::unbounded(p);
  const Vector lo = read::vector(read::field(*it, "lower", "box"), "box.lower", true);
  const Vector hi = read::vector(read::field(*it, "upper", "box"), "box.upper", true);
  if (lo.size() != p || hi.size() != p)
    throw ValidationError("box: limits must have " + std::to_string(p) + " entries");
  return {lo, hi};
}

inline double alpha(const Json& job) {
  const double a = read::finite(read::field(job, "alpha", "job"), "alpha");
  if (!(a > 0.0 && a < 1.0)) throw ValidationError("alpha: must lie in (0, 1)");
  return a;
}

// ---------------------------------------------------------------- writing

inline Json to_json(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json to_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(to_json(v(i)));
  return a;
}

inline Json to_json(const Matrix& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(to_json(Vector(m.row(r).transpose())));
  return a;
}

template <class T>
Json optional_json(const std::optional<T>& v) {
  return v ? to_json(*v) : Json(nullptr);
}

inline std::string format_number(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline void write(const Json& j, std::string& out, int level) {
  const std::string pad(static_cast<std::size_t>(2 * (level + 1)), ' ');
  const std::string close(static_cast<std::size_t>(2 * level), ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad + Json(it.key()).dump() + ": ";
        write(it.value(), out, level + 1);
      }
      out += "\n" + close + "}";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      bool flat = true;
      for (const auto& e : j) flat = flat && !e.is_structured();
      if (flat) {
        out += "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) out += ", ";
          write(j[i], out, level + 1);
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += pad;
        write(j[i], out, level + 1);
      }
      out += "\n" + close + "]";
      return;
    }
    case Json::value_t::number_float:
      out += format_number(j.get<double>());
      return;
    default:
      out += j.dump();
  }
}

}  // namespace detail

/// Pretty JSON with every float written to 17 significant digits.
inline std::string dump(const Json& j) {
  std::string out;
  detail::write(j, out, 0);
  out += "\n";
  return out;
}

// ---------------------------------------------------------------- commands

namespace detail {

inline Json report_values(const MomentReport& r) {
  Json v;
  v["prob_mass"] = to_json(r.prob_mass);
  v["mean"] = optional_json(r.mean);
  v["covariance"] = optional_json(r.covariance);
  v["second_moment"] = optional_json(r.second_moment);
  return v;
}

inline Json report_diagnostics(const MomentReport& r) {
  Json d;
  d["prob_error"] = to_json(r.prob_error);
  d["mean_exists"] = r.mean_exists;
  d["second_exists"] = r.second_exists;
  if (!r.mean_exists)
    d["existence"] = "mean needs 1 < nu + p1 when a target coordinate has an infinite limit";
  else if (!r.second_exists)
    d["existence"] = "second moments need 2 < nu + p1 when a target coordinate has an infinite limit";
  return d;
}

inline MomentRequest request(const Json& job) {
  const auto it = job.find("request");
  if (it == job.end()) return MomentRequest::Available;
  const std::string s = it->get<std::string>();
  if (s == "available") return MomentRequest::Available;
  if (s == "mean") return MomentRequest::Mean;
  if (s == "mean_cov") return MomentRequest::MeanAndCov;
  throw ValidationError("request: expected available, mean or mean_cov");
}

inline std::uint64_t seed(const Json& job, const Options& opt) {
  if (opt.seed) return *opt.seed;
  if (job.contains("seed")) return static_cast<std::uint64_t>(read::finite(job["seed"], "seed"));
  return 20210611;
}

inline Output moments(const Json& job, const Distribution& d, const Options& opt) {
  const RectangleProbSettings qs = read::qmc(job);
  const TruncationBox b = box(job, d.spec.p);
  const MomentReport r = tse_mean_cov(d.spec, b, request(job), qs);
  Output out;
  out.json["values"] = report_values(r);
  out.json["method"] = r.method;
  out.json["notes"] = r.notes;
  out.json["diagnostics"] = report_diagnostics(r);
  if (job.contains("order")) {
    MomentOrder k;
    const Json& o = job["order"];
    if (!o.is_array()) throw ValidationError("order: expected an array of nonnegative integers");
    for (const auto& e : o) {
      if (!e.is_number_integer()) throw ValidationError("order: entries must be integers");
      k.k.push_back(e.get<int>());
    }
    MonteCarloSettings mcs;
    mcs.seed = seed(job, opt);
    mcs.threads = opt.threads;
    const ProductMoment pm = tse_moment(d.spec, b, k, qs, mcs);
    Json pj;
    pj["order"] = k.k;
    pj["value"] = to_json(pm.value);
    pj["std_error"] = to_json(pm.std_error);
    pj["method"] = pm.method;
    out.json["values"]["product_moment"] = pj;
  }
  return out;
}

inline Output prob(const Json& job, const Distribution& d) {
  const RectangleProbSettings qs = read::qmc(job);
  const TruncationBox b = box(job, d.spec.p);
  const ProbResult joint = rectangle_prob(d.spec.joint, d.spec.augment(b), qs);
  const ProbResult sel = selection_prob(d.spec, qs);
  if (!(sel.value > 0.0)) throw NumericalError("selection probability underflows");
  Output out;
  out.json["values"]["probability"] = to_json(std::min(1.0, joint.value / sel.value));
  out.json["diagnostics"]["error"] =
      to_json(joint.error / sel.value + joint.value * sel.error / (sel.value * sel.value));
  out.json["diagnostics"]["selection_probability"] = to_json(sel.value);
  return out;
}

inline Output pdf_grid(const Json& job, const Distribution& d) {
  const int p = d.spec.p;
  if (p > 2) throw ValidationError("pdf-grid supports one- or two-dimensional distributions only");
  const RectangleProbSettings qs = read::qmc(job);
  const Json& g = read::field(job, "grid", "job");
  const Vector lo = read::vector(read::field(g, "lower", "grid"), "grid.lower");
  const Vector hi = read::vector(read::field(g, "upper", "grid"), "grid.upper");
  std::vector<int> n(static_cast<std::size_t>(p), 101);
  if (g.contains("points")) {
    const Vector pts = read::vector(g["points"], "grid.points");
    if (pts.size() != p) throw ValidationError("grid.points: one entry per dimension");
    for (int i = 0; i < p; ++i) n[static_cast<std::size_t>(i)] = static_cast<int>(pts(i));
  }
  if (lo.size() != p || hi.size() != p) throw ValidationError("grid: bounds must match the dimension");
  for (int i = 0; i < p; ++i) {
    if (n[static_cast<std::size_t>(i)] < 2) throw ValidationError("grid.points: at least 2 per dimension");
    if (!(lo(i) < hi(i))) throw ValidationError("grid: lower must be below upper");
  }
  double mass = 1.0;
  std::optional<TruncationBox> b;
  if (job.contains("box")) {
    b = box(job, p);
    const ProbResult joint = rectangle_prob(d.spec.joint, d.spec.augment(*b), qs);
    const ProbResult sel = selection_prob(d.spec, qs);
    mass = joint.value / sel.value;
    if (!(mass > 0.0)) throw NumericalError("truncation box has zero probability");
  }
  const auto node = [&](int i, int k) {
    return lo(i) + (hi(i) - lo(i)) * k / (n[static_cast<std::size_t>(i)] - 1);
  };
  std::string csv = p == 1 ? "x,density\n" : "x,y,density\n";
  Vector y(p);
  const int n2 = p == 2 ? n[1] : 1;
  for (int a = 0; a < n[0]; ++a)
    for (int c = 0; c < n2; ++c) {
      y(0) = node(0, a);
      if (p == 2) y(1) = node(1, c);
      double f = 0.0;
      if (!b || b->contains(y)) f = se_pdf(d.spec, y, qs) / mass;
      csv += format_number(y(0)) + ",";
      if (p == 2) csv += format_number(y(1)) + ",";
      csv += format_number(f) + "\n";
    }
  Output out;
  out.is_csv = true;
  out.csv = std::move(csv);
  return out;
}

inline Output tce(const Json& job, const Distribution& d) {
  const RectangleProbSettings qs = read::qmc(job);
  const TailExpectation t = tse::tce(d.spec, alpha(job), qs);
  Output out;
  out.json["values"]["tce"] = to_json(t.value);
  out.json["values"]["quantile"] = to_json(t.quantile);
  out.json["values"]["alpha"] = to_json(t.alpha);
  out.json["method"] = t.method;
  return out;
}

inline Output mtce(const Json& job, const Distribution& d) {
  const RectangleProbSettings qs = read::qmc(job);
  Vector q;
  if (job.contains("y_alpha"))
    q = read::vector(job["y_alpha"], "y_alpha", true);
  else
    q = marginal_quantiles(d.spec, alpha(job), qs);
  const MomentReport r = tse::mtce(d.spec, q, qs);
  Output out;
  out.json["values"]["mtce"] = optional_json(r.mean);
  out.json["values"]["y_alpha"] = to_json(q);
  out.json["values"]["prob_mass"] = to_json(r.prob_mass);
  out.json["method"] = r.method;
  out.json["notes"] = r.notes;
  out.json["diagnostics"] = report_diagnostics(r);
  return out;
}

inline Output tce_sum(const Json& job, const Distribution& d) {
  const RectangleProbSettings qs = read::qmc(job);
  const RiskDecomposition r = tce_sum_decomposed(d.spec, alpha(job), qs);
  Output out;
  out.json["values"]["total"] = to_json(r.total);
  out.json["values"]["contributions"] = to_json(r.contributions);
  out.json["values"]["quantile"] = to_json(r.quantile);
  out.json["values"]["alpha"] = to_json(r.alpha);
  out.json["values"]["E_S1"] = to_json(r.E_S1);
  if (d.params && d.params->q() == 1) {
    const SumDistParams s = sum_params(*d.params);
    Json sj;
    sj["mu_S"] = to_json(s.mu_S);
    sj["sigma2_S"] = to_json(s.sigma2_S);
    sj["Delta_S"] = to_json(s.Delta_S);
    sj["lambda_S"] = to_json(s.lambda_S);
    sj["tau_tilde"] = to_json(s.tau_tilde);
    sj["nu"] = s.kernel.is_t() ? to_json(s.nu()) : Json(nullptr);
    out.json["values"]["sum_law"] = sj;
  }
  out.json["method"] = r.method;
  return out;
}

inline Output validate(const Json& job, const Distribution& d, const Options& opt) {
  const RectangleProbSettings qs = read::qmc(job);
  const TruncationBox b = box(job, d.spec.p);
  long draws = 100000;
  if (job.contains("draws")) draws = static_cast<long>(read::finite(job["draws"], "draws"));
  if (draws < 1000) throw ValidationError("draws: at least 1000 are needed");
  const std::uint64_t sd = seed(job, opt);
  const MomentReport r = tse_mean_cov(d.spec, b, MomentRequest::Available, qs);

  SampleBatch batch;
  try {
    batch = sample_se_rejection(d.spec, b, draws, sd, opt.threads);
  } catch (const InfeasibleSampling&) {
    SampleBatch full = sample_truncated_gibbs(d.spec.joint, d.spec.augment(b), draws, 500, sd);
    batch = full;
    batch.draws = full.draws.rightCols(d.spec.p);
  }
  const MeanCovEstimate mc = estimate_mean_cov(batch);

  Json checks = Json::array();
  bool ok = true;
  const auto check = [&](const std::string& name, double analytic, double est, double se) {
    Json c;
    c["quantity"] = name;
    c["analytic"] = to_json(analytic);
    c["monte_carlo"] = to_json(est);
    c["std_error"] = to_json(se);
    const double z = se > 0.0 ? (analytic - est) / se : (analytic == est ? 0.0 : kInf);
    c["z"] = to_json(z);
    const bool within = std::abs(z) <= 4.0;
    c["within_4se"] = within;
    ok = ok && within;
    checks.push_back(c);
  };
  const int p = d.spec.p;
  if (r.mean)
    for (int i = 0; i < p; ++i)
      check("mean[" + std::to_string(i) + "]", (*r.mean)(i), mc.mean.value(i, 0), mc.mean.std_error(i, 0));
  if (r.covariance)
    for (int i = 0; i < p; ++i)
      for (int j = i; j < p; ++j)
        check("cov[" + std::to_string(i) + "][" + std::to_string(j) + "]", (*r.covariance)(i, j),
              mc.cov.value(i, j), mc.cov.std_error(i, j));

  Output out;
  out.json["values"]["all_within_4se"] = ok;
  out.json["values"]["checks"] = checks;
  out.json["method"] = r.method;
  out.json["notes"] = r.notes;
  Json diag = report_diagnostics(r);
  diag["sampler"] = method_name(batch.method);
  diag["draws"] = batch.size();
  diag["proposals"] = batch.n_proposed;
  diag["seed"] = sd;
  out.json["diagnostics"] = diag;
  return out;
}

}  // namespace detail

/// Runs one job. Throws ValidationError, NonexistenceError or NumericalError.
inline Output run(const std::string& command, const Json& job, const Options& opt = {}) {
  if (!commands().count(command)) throw ValidationError("unknown command '" + command + "'");
  if (!job.is_object()) throw ValidationError("job: expected a JSON object");
  if (job.contains("command") && job["command"] != command)
    throw ValidationError("command: job file says '" + job["command"].get<std::string>() +
                          "' but '" + command + "' was requested");
  const Distribution d = distribution(job);
  Output out;
  if (command == "moments") out = detail::moments(job, d, opt);
  else if (command == "prob") out = detail::prob(job, d);
  else if (command == "pdf-grid") return detail::pdf_grid(job, d);
  else if (command == "tce") out = detail::tce(job, d);
  else if (command == "mtce") out = detail::mtce(job, d);
  else if (command == "tce-sum") out = detail::tce_sum(job, d);
  else out = detail::validate(job, d, opt);

  Json doc;
  doc["version"] = kVersion;
  doc["command"] = command;
  doc["family"] = d.family;
  for (auto it = out.json.begin(); it != out.json.end(); ++it) doc[it.key()] = it.value();
  out.json = std::move(doc);
  return out;
}

}  // namespace tse::cli
