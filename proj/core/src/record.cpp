#include <qforce/error.hpp>
#include <qforce/record.hpp>

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace qforce {

namespace {

constexpr double kGridTol = 1e-9;

std::vector<std::string> split_csv(const std::string &line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ','))
        out.push_back(cell);
    return out;
}

double parse_double(const std::string &s, std::size_t line_no) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
            ++pos;
        if (pos != s.size())
            throw std::invalid_argument(s);
        return v;
    } catch (const std::exception &) {
        fail(ErrorKind::InvalidMeasurement,
             "record line " + std::to_string(line_no) + ": not a number: '" + s + "'");
    }
}

} // namespace

std::size_t steps_for(double tau, double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt))
        fail(ErrorKind::Grid, "time step must be positive");
    const double n = tau / dt;
    const double r = std::round(n);
    if (r < 1.0 || std::abs(n - r) > kGridTol * std::max(1.0, n))
        fail(ErrorKind::Grid, "time step does not divide the horizon");
    return static_cast<std::size_t>(r);
}

void check_schedule_grid(const SensitivitySchedule &schedule, double dt) {
    for (double b : schedule.breakpoints) {
        const double n = b / dt;
        if (std::abs(n - std::round(n)) > kGridTol * std::max(1.0, n))
            fail(ErrorKind::Grid,
                 "time step is incompatible with the schedule breakpoints");
    }
}

void MeasurementRecord::validate_grid(double tau, double expected_dt) const {
    if (dxi.empty())
        fail(ErrorKind::Grid, "record is empty");
    if (!(dt > 0.0))
        fail(ErrorKind::Grid, "record time step must be positive");
    if (expected_dt > 0.0 && std::abs(dt - expected_dt) > kGridTol * expected_dt)
        fail(ErrorKind::Grid, "record time step does not match the configured dt");
    if (std::abs(horizon() - tau) > 1e-6 * tau)
        fail(ErrorKind::Grid, "record does not cover [0, tau]");
    for (double v : dxi)
        if (!std::isfinite(v))
            fail(ErrorKind::InvalidMeasurement, "record contains non-finite increments");
}

void write_record_csv(std::ostream &out, const MeasurementRecord &record,
                      std::string_view comment) {
    if (!comment.empty())
        out << "# " << comment << '\n';
    out << "t,dxi\n";
    out << std::setprecision(17);
    for (std::size_t j = 0; j < record.size(); ++j)
        out << record.time(j) << ',' << record.dxi[j] << '\n';
}

MeasurementRecord read_record_csv(std::istream &in) {
    std::vector<double> t, v;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty() || line[0] == '#')
            continue;
        auto cells = split_csv(line);
        if (!header_seen) {
            header_seen = true;
            if (cells.size() >= 2 && cells[0] == "t" && cells[1] == "dxi")
                continue;
        }
        if (cells.size() < 2)
            fail(ErrorKind::InvalidMeasurement,
                 "record line " + std::to_string(line_no) + ": expected t,dxi");
        t.push_back(parse_double(cells[0], line_no));
        v.push_back(parse_double(cells[1], line_no));
    }
    if (t.size() < 2)
        fail(ErrorKind::Grid, "record needs at least two samples");
    MeasurementRecord r;
    r.dt = t[1] - t[0];
    if (!(r.dt > 0.0) || std::abs(t[0]) > 1e-12)
        fail(ErrorKind::Grid, "record must start at t = 0 with increasing times");
    for (std::size_t j = 0; j < t.size(); ++j)
        if (std::abs(t[j] - static_cast<double>(j) * r.dt) > 1e-6 * r.dt)
            fail(ErrorKind::Grid, "record times are not on a uniform grid");
    r.dxi = std::move(v);
    return r;
}

std::string record_envelope_json(const MeasurementRecord &record,
                                 std::string_view csv_name,
                                 std::string_view provenance_json) {
    nlohmann::ordered_json j;
    j["format"] = "qforce-record";
    j["format_version"] = 1;
    j["csv"] = std::string(csv_name);
    j["dt"] = record.dt;
    j["n_steps"] = record.size();
    j["seed"] = record.seed;
    j["trajectory"] = record.trajectory;
    if (record.terminal_position)
        j["terminal_position"] = *record.terminal_position;
    j["params"] = {{"mass", record.params.mass},
                   {"omega", record.params.omega},
                   {"hbar", record.params.hbar},
                   {"tau", record.params.tau}};
    j["schedule"] = {{"breakpoints", record.schedule.breakpoints},
                     {"k", record.schedule.k},
                     {"terminal_projective", record.schedule.terminal_projective}};
    j["provenance"] = nlohmann::ordered_json::parse(provenance_json);
    return j.dump(2) + "\n";
}

void apply_record_envelope(MeasurementRecord &record, std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
        const auto &p = j.at("params");
        record.params = PhysicalParams{p.at("mass").get<double>(), p.at("omega").get<double>(),
                                       p.at("hbar").get<double>(), p.at("tau").get<double>()};
        const auto &s = j.at("schedule");
        record.schedule.breakpoints = s.at("breakpoints").get<std::vector<double>>();
        record.schedule.k = s.at("k").get<std::vector<double>>();
        record.schedule.terminal_projective = s.at("terminal_projective").get<bool>();
        record.seed = j.at("seed").get<std::uint64_t>();
        record.trajectory = j.value("trajectory", std::uint64_t{0});
        if (j.contains("terminal_position"))
            record.terminal_position = j.at("terminal_position").get<double>();
        const double dt = j.at("dt").get<double>();
        if (record.dt > 0.0 && std::abs(dt - record.dt) > 1e-9 * dt)
            fail(ErrorKind::Grid, "envelope dt does not match the record grid");
    } catch (const nlohmann::json::exception &e) {
        fail(ErrorKind::InvalidMeasurement, std::string("bad record envelope: ") + e.what());
    }
    record.params.validate();
    record.schedule.validate(record.params.tau);
}

} // namespace qforce
