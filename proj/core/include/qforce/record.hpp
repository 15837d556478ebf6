// Homodyne measurement record on a uniform time grid
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <qforce/params.hpp>
#include <qforce/schedule.hpp>

namespace qforce {

/**
 * @brief Increments dxi_j over [j dt, (j+1) dt), j = 0..n-1, with metadata.
 *
 * params and schedule describe how the record was produced; records read
 * from a bare CSV carry defaults until the caller fills them in.
 */
struct MeasurementRecord {
    double dt = 0.0;
    std::vector<double> dxi;
    PhysicalParams params;
    SensitivitySchedule schedule;
    std::uint64_t seed = 0;
    std::uint64_t trajectory = 0;
    /// Outcome of the exact position readout at tau, if one was taken.
    std::optional<double> terminal_position;

    std::size_t size() const { return dxi.size(); }
    double time(std::size_t j) const { return static_cast<double>(j) * dt; }
    double horizon() const { return static_cast<double>(dxi.size()) * dt; }

    /// Throws Error(Grid) unless the record covers [0, tau] on its grid and,
    /// if expected_dt > 0, uses that spacing.
    void validate_grid(double tau, double expected_dt = 0.0) const;
};

/// Number of steps of size dt in [0, tau]; throws Error(Grid) if dt does not divide tau.
std::size_t steps_for(double tau, double dt);

/// Throws Error(Grid) if dt does not divide every schedule interval.
void check_schedule_grid(const SensitivitySchedule &schedule, double dt);

/// Columns t,dxi; an optional '#' comment line goes first.
void write_record_csv(std::ostream &out, const MeasurementRecord &record,
                      std::string_view comment = {});

/// Reads t,dxi columns (skips '#' lines and the header); checks uniform spacing.
MeasurementRecord read_record_csv(std::istream &in);

/// JSON sidecar describing params, schedule, seed and grid of a record file.
std::string record_envelope_json(const MeasurementRecord &record,
                                 std::string_view csv_name,
                                 std::string_view provenance_json = "{}");

/// Fills params/schedule/seed from an envelope produced by record_envelope_json.
void apply_record_envelope(MeasurementRecord &record, std::string_view json);

} // namespace qforce
