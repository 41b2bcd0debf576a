#include "misf/metrics.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace misf {

namespace {

constexpr const char* kHeader = "id,bucket,psnr,ssim,l1_pct,variant";

double cap99(double v) { return std::min(v, 99.0); }

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << std::fixed << v;
    return os.str();
}

}  // namespace

void emit_report_csv(const MetricReport& report, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("report: cannot open for writing " + path);
    f << kHeader << "\n";
    for (const auto& r : report.rows)
        f << r.id << "," << r.bucket << "," << fmt(cap99(r.psnr_db)) << "," << fmt(r.ssim) << ","
          << fmt(r.l1_pct) << "," << r.variant << "\n";
    for (const auto& a : report.aggregates())
        f << "aggregate:" << a.bucket << "," << a.bucket << "," << fmt(a.psnr_db) << ","
          << fmt(a.ssim) << "," << fmt(a.l1_pct) << ",mean-of-" << a.count << "\n";
    if (!f) throw IoError("report: write failed " + path);
}

void emit_report_json(const MetricReport& report, const std::string& path) {
    nlohmann::json j;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : report.rows)
        j["rows"].push_back({{"id", r.id},
                             {"bucket", r.bucket},
                             {"psnr", cap99(r.psnr_db)},
                             {"ssim", r.ssim},
                             {"l1_pct", r.l1_pct},
                             {"variant", r.variant}});
    j["aggregates"] = nlohmann::json::array();
    for (const auto& a : report.aggregates())
        j["aggregates"].push_back({{"bucket", a.bucket},
                                   {"count", a.count},
                                   {"psnr", a.psnr_db},
                                   {"ssim", a.ssim},
                                   {"l1_pct", a.l1_pct}});
    std::ofstream f(path);
    if (!f) throw IoError("report: cannot open for writing " + path);
    f << j.dump(2) << "\n";
    if (!f) throw IoError("report: write failed " + path);
}

MetricReport parse_report_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("report: cannot open " + path);
    std::string line;
    if (!std::getline(f, line) || line != kHeader)
        throw IoError("report: bad header in " + path);
    MetricReport rep;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string field[6];
        for (int i = 0; i < 6; ++i)
            if (!std::getline(ss, field[i], i == 5 ? '\n' : ','))
                throw IoError("report: malformed row in " + path);
        if (field[0].rfind("aggregate:", 0) == 0) continue;  // recomputed from rows
        MetricRow r;
        r.id = field[0];
        r.bucket = field[1];
        r.psnr_db = std::stod(field[2]);
        r.ssim = std::stod(field[3]);
        r.l1_pct = std::stod(field[4]);
        r.variant = field[5];
        rep.rows.push_back(std::move(r));
    }
    return rep;
}

}  // namespace misf
