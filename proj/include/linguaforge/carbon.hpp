// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "linguaforge/common.hpp"

#include "json.hpp"

namespace lf {

struct CarbonInputs {
    double gpu_hours = 0.0;       // total device-hours (gpu_count x hours_per_gpu)
    double device_watts = 0.0;
    double pue = 1.0;             // facility-to-IT power ratio, >= 1
    double grid_intensity = 0.0;  // grams CO2eq per kWh

    void validate() const {
        if (gpu_hours <= 0.0 || device_watts <= 0.0 || grid_intensity <= 0.0) {
            raise(ErrorCode::InvalidInput, "carbon inputs must be strictly positive");
        }
        if (pue < 1.0) raise(ErrorCode::InvalidInput, "PUE cannot be below 1");
    }
};

struct CarbonReport {
    double energy_kwh = 0.0;
    double emissions_kgco2eq = 0.0;
    CarbonInputs inputs;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["energy_kwh"] = energy_kwh;
        j["emissions_kgco2eq"] = emissions_kgco2eq;
        j["inputs"] = {{"gpu_hours", inputs.gpu_hours},
                       {"device_watts", inputs.device_watts},
                       {"pue", inputs.pue},
                       {"grid_intensity_g_per_kwh", inputs.grid_intensity}};
        return j;
    }
};

// gpu_hours x watts x PUE / 1000. Values stay unrounded; round at display.
inline double energy_kwh(const CarbonInputs& in) {
    in.validate();
    return in.gpu_hours * in.device_watts * in.pue / 1000.0;
}

// kg CO2eq for a given energy draw and grid intensity (g/kWh).
inline double emissions(double energy_kwh_value, double grid_intensity) {
    if (energy_kwh_value < 0.0 || grid_intensity < 0.0) {
        raise(ErrorCode::InvalidInput, "energy and intensity cannot be negative");
    }
    return energy_kwh_value * grid_intensity / 1000.0;
}

inline CarbonReport carbon_report(const CarbonInputs& in) {
    CarbonReport report;
    report.inputs = in;
    report.energy_kwh = energy_kwh(in);
    report.emissions_kgco2eq = emissions(report.energy_kwh, in.grid_intensity);
    return report;
}

}  // namespace lf
