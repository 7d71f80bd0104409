#include <cmath>
#include <sstream>

#include "io_util.hpp"
#include "pbdw/bench.hpp"
#include "pbdw/errors.hpp"

namespace pbdw {

namespace {

std::string num(double v) { return std::isnan(v) ? std::string("nan") : detail::format_double(v); }

}  // namespace

void write_sweep_csv(const std::vector<SweepReport>& reports, const std::filesystem::path& file) {
  std::string out = "method,n,e_av,e_wc,beta_min,apply_us_p50\n";
  for (const auto& rep : reports) {
    for (std::size_t a = 0; a < rep.n_values.size(); ++a) {
      out += to_string(rep.method) + "," + std::to_string(rep.n_values[a]) + "," + num(rep.e_av[a]) + "," +
             num(rep.e_wc[a]) + "," + num(rep.beta_min[a]) + "," + num(rep.apply_us_p50[a]) + "\n";
    }
  }
  detail::write_text(file, out);
}

void write_per_snapshot_csv(const std::vector<SweepReport>& reports, const std::filesystem::path& file) {
  std::string out = "method,n,snapshot,rel_error\n";
  for (const auto& rep : reports) {
    const std::string name = to_string(rep.method);
    for (std::size_t a = 0; a < rep.n_values.size(); ++a) {
      const std::string prefix = name + "," + std::to_string(rep.n_values[a]) + ",";
      for (std::size_t j = 0; j < rep.errors[a].size(); ++j) {
        out += prefix + std::to_string(j) + "," + num(rep.errors[a][j]) + "\n";
      }
    }
  }
  detail::write_text(file, out);
}

void write_qoi_csv(const QoiReport& report, const std::filesystem::path& file) {
  std::string out = "patient,eta,r_true,r_rec,label_true,label_pred\n";
  for (const auto& p : report.patients) {
    out += std::to_string(p.patient) + "," + num(p.eta) + "," + num(p.r_true) + "," + num(p.r_rec) + "," +
           to_string(p.label_true) + "," + to_string(p.label_pred) + "\n";
  }
  detail::write_text(file, out);
}

std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& file) {
  std::istringstream in(detail::read_text(file));
  std::string line;
  if (!std::getline(in, line) || line != "method,n,e_av,e_wc,beta_min,apply_us_p50") {
    throw IntegrityError(file.string() + ": unexpected sweep header");
  }
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    const auto f = detail::split_csv_line(line);
    if (f.size() != 6) {
      throw IntegrityError(file.string() + ": malformed row '" + line + "'");
    }
    SweepRow r;
    r.method = f[0];
    r.n = static_cast<Index>(detail::parse_double(f[1], file.string()));
    r.e_av = detail::parse_double(f[2], file.string());
    r.e_wc = detail::parse_double(f[3], file.string());
    r.beta_min = detail::parse_double(f[4], file.string());
    r.apply_us_p50 = detail::parse_double(f[5], file.string());
    rows.push_back(r);
  }
  return rows;
}

}  // namespace pbdw
