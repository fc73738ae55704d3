// SPDX-License-Identifier: Apache-2.0
#include "json_fields.hpp"
#include "toaloc/harness.hpp"

#include <charconv>
#include <sstream>

namespace toaloc {

using detail::Fields;
using detail::Json;

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

Json point_json(const Point& p) {
  Json a = Json::array();
  for (int k = 0; k < p.dimension(); ++k) a.push_back(p[k]);
  return a;
}

Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
  return a;
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
T parse_field(const std::string& text, std::size_t line, std::string_view column) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last)
    throw config_error("records.csv: line " + std::to_string(line) + ": bad " + std::string(column) + " '" + text + "'");
  return value;
}

void append_point(std::ostringstream& os, const Vector& v) {
  for (Eigen::Index k = 0; k < v.size(); ++k) os << ',' << format_number(v[k]);
}

const char* const kAxes[] = {"x", "y", "z"};

}  // namespace

std::string scenario_to_json(const Scenario& s) {
  Json j;
  j["dimension"] = s.dimension;
  Json aps = Json::array();
  for (const AccessPoint& ap : s.aps) {
    Json a;
    a["id"] = ap.id;
    a["position"] = point_json(ap.position);
    if (ap.true_cal_delay != 0.0) a["true_cal_delay"] = ap.true_cal_delay;
    if (ap.true_position_offset.dimension() > 0 && !ap.true_position_offset.coords.isZero(0.0))
      a["true_position_offset"] = point_json(ap.true_position_offset);
    aps.push_back(std::move(a));
  }
  j["aps"] = std::move(aps);
  Json dev = Json::array();
  for (const Point& p : s.device_positions) dev.push_back(point_json(p));
  j["device_positions"] = std::move(dev);
  j["bounding_box"] = {{"lo", vector_json(s.bounding_box.lo)}, {"hi", vector_json(s.bounding_box.hi)}};
  return j.dump(2) + "\n";
}

namespace detail {

Scenario scenario_from_fields(Fields& f) {
  Scenario s;
  s.dimension = as_int(f.require("dimension"), f.at("dimension"));
  if (s.dimension != 2 && s.dimension != 3) fail(f.at("dimension"), "must be 2 or 3");

  const Json& aps = f.require("aps");
  if (!aps.is_array()) fail(f.at("aps"), "expected an array");
  for (std::size_t i = 0; i < aps.size(); ++i) {
    Fields a(aps[i], index_path(f.at("aps"), i));
    AccessPoint ap;
    ap.id = as_int(a.require("id"), a.at("id"));
    ap.position = as_point(a.require("position"), a.at("position"));
    ap.true_cal_delay = a.number("true_cal_delay", 0.0);
    if (const Json* off = a.find("true_position_offset")) ap.true_position_offset = as_point(*off, a.at("true_position_offset"));
    a.finish();
    s.aps.push_back(std::move(ap));
  }

  const Json& dev = f.require("device_positions");
  if (!dev.is_array()) fail(f.at("device_positions"), "expected an array");
  for (std::size_t i = 0; i < dev.size(); ++i) s.device_positions.push_back(as_point(dev[i], index_path(f.at("device_positions"), i)));

  if (const Json* box = f.find("bounding_box")) {
    Fields b(*box, f.at("bounding_box"));
    s.bounding_box.lo = as_point(b.require("lo"), b.at("lo")).coords;
    s.bounding_box.hi = as_point(b.require("hi"), b.at("hi")).coords;
    b.finish();
  } else {
    s.fit_bounding_box();
  }
  f.finish();

  if (const auto problems = validate_scenario(s); !problems.empty()) fail(f.path(), problems.front());
  return s;
}

}  // namespace detail

Scenario scenario_from_json(std::string_view text) {
  const Json j = detail::parse_json(text, "scenario");
  Fields f(j, "scenario");
  return detail::scenario_from_fields(f);
}

std::string epochs_to_csv(const std::vector<ToaEpoch>& epochs) {
  std::ostringstream os;
  os << "epoch_id,ap_id,toa_meters\n";
  for (const ToaEpoch& e : epochs)
    for (const Observation& o : e.observations) os << e.epoch_id << ',' << o.ap_id << ',' << format_number(o.toa) << '\n';
  return os.str();
}

std::string records_to_csv(const std::vector<ErrorRecord>& records) {
  std::ostringstream os;
  os << "epoch_id,solver,error_meters,heard,iterations,converged\n";
  for (const ErrorRecord& r : records)
    os << r.epoch_id << ',' << r.solver << ',' << format_number(r.error_meters) << ',' << r.heard << ',' << r.iterations
       << ',' << (r.converged ? 1 : 0) << '\n';
  return os.str();
}

std::vector<ErrorRecord> records_from_csv(std::string_view text) {
  std::vector<ErrorRecord> out;
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (header) {
      if (line != "epoch_id,solver,error_meters,heard,iterations,converged")
        throw config_error("records.csv: line 1: unexpected header '" + line + "'");
      header = false;
      continue;
    }
    if (cells.size() != 6)
      throw config_error("records.csv: line " + std::to_string(line_no) + ": expected 6 columns, found " +
                         std::to_string(cells.size()));
    ErrorRecord r;
    r.epoch_id = parse_field<int>(cells[0], line_no, "epoch_id");
    r.solver = cells[1];
    r.error_meters = parse_field<double>(cells[2], line_no, "error_meters");
    r.heard = parse_field<int>(cells[3], line_no, "heard");
    r.iterations = parse_field<int>(cells[4], line_no, "iterations");
    const int conv = parse_field<int>(cells[5], line_no, "converged");
    if (conv != 0 && conv != 1) throw config_error("records.csv: line " + std::to_string(line_no) + ": converged must be 0 or 1");
    r.converged = conv == 1;
    if (!(r.error_meters >= 0.0))
      throw config_error("records.csv: line " + std::to_string(line_no) + ": error_meters must be >= 0");
    out.push_back(std::move(r));
  }
  if (header) throw config_error("records.csv: empty file");
  return out;
}

std::string calibration_to_json(const CalibrationTable& table) {
  Json entries = Json::array();
  for (const auto& [id, e] : table.entries)
    entries.push_back({{"ap_id", id}, {"delta_T_hat", e.delta_T_hat}, {"n_obs", e.n_obs}, {"std_err", e.std_err}});
  Json j;
  j["entries"] = std::move(entries);
  return j.dump(2) + "\n";
}

std::string track_to_csv(const std::vector<TrackRow>& track, int d) {
  std::ostringstream os;
  os << "epoch_time";
  for (int k = 0; k < d; ++k) os << ',' << kAxes[k];
  for (int k = 0; k < d; ++k) os << ",v" << kAxes[k];
  for (int k = 0; k < d; ++k) os << ",var_" << kAxes[k];
  for (int k = 0; k < d; ++k) os << ",var_v" << kAxes[k];
  os << '\n';
  for (const TrackRow& r : track) {
    os << format_number(r.epoch_time);
    append_point(os, r.mean);
    append_point(os, r.variance);
    os << '\n';
  }
  return os.str();
}

std::string report_to_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << "solver,count,p50,p90,mean,convergence_rate,ratio_p50,ratio_p90\n";
  for (const ReportRow& r : rows)
    os << r.solver << ',' << r.count << ',' << format_number(r.p50) << ',' << format_number(r.p90) << ','
       << format_number(r.mean) << ',' << format_number(r.convergence_rate) << ',' << format_number(r.ratio_p50) << ','
       << format_number(r.ratio_p90) << '\n';
  return os.str();
}

std::string report_to_json(const std::vector<ReportRow>& rows) {
  auto finite_or_null = [](double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); };
  Json a = Json::array();
  for (const ReportRow& r : rows)
    a.push_back({{"solver", r.solver},
                 {"count", r.count},
                 {"p50", r.p50},
                 {"p90", r.p90},
                 {"mean", r.mean},
                 {"convergence_rate", r.convergence_rate},
                 {"ratio_p50", finite_or_null(r.ratio_p50)},
                 {"ratio_p90", finite_or_null(r.ratio_p90)}});
  Json j;
  j["solvers"] = std::move(a);
  return j.dump(2) + "\n";
}

}  // namespace toaloc
