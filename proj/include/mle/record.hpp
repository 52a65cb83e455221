#pragma once

// Closed-loop time series: the reference schedule driving a run and the
// resulting record of inputs, outputs, and references on the sample grid.
//
// Record CSVs are written with shortest-round-trip doubles, so reading a file
// back reproduces the exact in-memory values and repeated runs are
// byte-identical.  Column k of every signal belongs to t = k dt; u.col(k) is
// the input held over [k dt, (k+1) dt).

#include <mle/csv.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mle {

/// r jumps to `level` at `time` and holds it until the next event.
struct StepEvent {
  double time = 0.0;
  double level = 0.0;
};

/// Piecewise-constant per-output reference r(t); zero before the first event.
class ReferenceSchedule {
 public:
  explicit ReferenceSchedule(int outputs) : events_(static_cast<std::size_t>(outputs)) {
    if (outputs < 1)
      throw std::invalid_argument("ReferenceSchedule: need at least one output");
  }

  int outputs() const { return static_cast<int>(events_.size()); }

  /// Appends a step; events of one output must be added in time order.
  void add_step(int output, double time, double level) {
    auto& track = events_.at(static_cast<std::size_t>(output));
    if (!std::isfinite(time) || !std::isfinite(level))
      throw std::invalid_argument("ReferenceSchedule: step events must be finite");
    if (!track.empty() && time < track.back().time)
      throw std::invalid_argument("ReferenceSchedule: step events must be in time order");
    track.push_back(StepEvent{time, level});
  }

  const std::vector<StepEvent>& steps(int output) const {
    return events_.at(static_cast<std::size_t>(output));
  }

  double value(int output, double t) const {
    const auto& track = events_.at(static_cast<std::size_t>(output));
    double level = 0.0;
    for (const StepEvent& ev : track) {
      if (ev.time > t) break;
      level = ev.level;
    }
    return level;
  }

  Eigen::VectorXd at(double t) const {
    Eigen::VectorXd r(outputs());
    for (int i = 0; i < outputs(); ++i) r[i] = value(i, t);
    return r;
  }

 private:
  std::vector<std::vector<StepEvent>> events_;
};

/// One closed-loop run on the sample grid; all matrices share column count.
struct SimulationRecord {
  double sample_period = 0.0;
  std::uint64_t seed = 0;
  Eigen::VectorXd time;        ///< t_k in minutes
  Eigen::MatrixXd u;           ///< m x K, input held over [t_k, t_{k+1})
  Eigen::MatrixXd y_measured;  ///< p x K, noisy outputs the controller saw
  Eigen::MatrixXd y_clean;     ///< p x K, noise-free plant outputs
  Eigen::MatrixXd r;           ///< p x K, reference levels

  Eigen::Index samples() const { return time.size(); }
  int inputs() const { return static_cast<int>(u.rows()); }
  int outputs() const { return static_cast<int>(y_measured.rows()); }
};

namespace detail {

inline void check_record_shape(const SimulationRecord& record) {
  const Eigen::Index k = record.time.size();
  if (k < 1) throw std::invalid_argument("SimulationRecord: empty record");
  if (record.u.cols() != k || record.y_measured.cols() != k || record.y_clean.cols() != k ||
      record.r.cols() != k)
    throw std::invalid_argument("SimulationRecord: signals disagree on sample count");
  if (record.y_clean.rows() != record.y_measured.rows() ||
      record.r.rows() != record.y_measured.rows())
    throw std::invalid_argument("SimulationRecord: output-sized signals disagree on channels");
  if (!(record.sample_period > 0.0))
    throw std::invalid_argument("SimulationRecord: sample period must be positive");
}

}  // namespace detail

/// Header: t_min,u1..um,y1..yp,y1_clean..yp_clean,r1..rp.
inline void write_record_csv(const SimulationRecord& record, const std::string& path) {
  detail::check_record_shape(record);
  auto out = csv::open_for_write(path);
  const int m = record.inputs(), p = record.outputs();
  out << "t_min";
  for (int j = 0; j < m; ++j) out << ",u" << j + 1;
  for (int i = 0; i < p; ++i) out << ",y" << i + 1;
  for (int i = 0; i < p; ++i) out << ",y" << i + 1 << "_clean";
  for (int i = 0; i < p; ++i) out << ",r" << i + 1;
  out << "\n";
  for (Eigen::Index k = 0; k < record.samples(); ++k) {
    out << csv::format_double(record.time[k]);
    for (int j = 0; j < m; ++j) out << ',' << csv::format_double(record.u(j, k));
    for (int i = 0; i < p; ++i) out << ',' << csv::format_double(record.y_measured(i, k));
    for (int i = 0; i < p; ++i) out << ',' << csv::format_double(record.y_clean(i, k));
    for (int i = 0; i < p; ++i) out << ',' << csv::format_double(record.r(i, k));
    out << "\n";
  }
  if (!out) throw std::runtime_error("write_record_csv: failed writing '" + path + "'");
}

inline SimulationRecord read_record_csv(const std::string& path) {
  auto in = csv::open_for_read(path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("read_record_csv: '" + path + "' is empty");
  const auto header = csv::split_line(line);
  if (header.empty() || header[0] != "t_min")
    throw std::runtime_error("read_record_csv: '" + path + "' must start with a t_min column");

  // Channel counts come from the header layout u1..um,y1..yp,y1_clean..,r1..
  std::size_t pos = 1;
  int m = 0;
  while (pos < header.size() && header[pos] == "u" + std::to_string(m + 1)) ++m, ++pos;
  int p = 0;
  while (pos < header.size() && header[pos] == "y" + std::to_string(p + 1)) ++p, ++pos;
  for (int i = 0; i < p; ++i, ++pos)
    if (pos >= header.size() || header[pos] != "y" + std::to_string(i + 1) + "_clean")
      throw std::runtime_error("read_record_csv: malformed header in '" + path + "'");
  for (int i = 0; i < p; ++i, ++pos)
    if (pos >= header.size() || header[pos] != "r" + std::to_string(i + 1))
      throw std::runtime_error("read_record_csv: malformed header in '" + path + "'");
  if (m < 1 || p < 1 || pos != header.size())
    throw std::runtime_error("read_record_csv: malformed header in '" + path + "'");

  std::vector<std::vector<double>> rows;
  for (long line_no = 2; std::getline(in, line); ++line_no) {
    if (line.empty()) continue;
    const auto fields = csv::split_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error("read_record_csv: '" + path + "' line " +
                               std::to_string(line_no) + " has " +
                               std::to_string(fields.size()) + " fields, expected " +
                               std::to_string(header.size()));
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(csv::parse_double(f));
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2)
    throw std::runtime_error("read_record_csv: '" + path + "' needs at least two samples");

  SimulationRecord record;
  const auto k = static_cast<Eigen::Index>(rows.size());
  record.time.resize(k);
  record.u.resize(m, k);
  record.y_measured.resize(p, k);
  record.y_clean.resize(p, k);
  record.r.resize(p, k);
  for (Eigen::Index t = 0; t < k; ++t) {
    const auto& row = rows[static_cast<std::size_t>(t)];
    std::size_t f = 0;
    record.time[t] = row[f++];
    for (int j = 0; j < m; ++j) record.u(j, t) = row[f++];
    for (int i = 0; i < p; ++i) record.y_measured(i, t) = row[f++];
    for (int i = 0; i < p; ++i) record.y_clean(i, t) = row[f++];
    for (int i = 0; i < p; ++i) record.r(i, t) = row[f++];
  }
  record.sample_period = record.time[1] - record.time[0];
  detail::check_record_shape(record);
  return record;
}

}  // namespace mle
