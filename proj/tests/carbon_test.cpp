// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "linguaforge/carbon.hpp"

TEST(CarbonTest, ReferenceTrainingRunNumbers) {
    const lf::CarbonInputs inputs{960.0, 350.0, 1.4, 494.0};
    const double energy = lf::energy_kwh(inputs);
    EXPECT_DOUBLE_EQ(energy, 470.4);
    const double kg = lf::emissions(energy, inputs.grid_intensity);
    EXPECT_NEAR(kg, 232.3776, 1e-9);
    EXPECT_DOUBLE_EQ(std::round(kg * 100.0) / 100.0, 232.38);
}

TEST(CarbonTest, UnitIdentities) {
    EXPECT_DOUBLE_EQ(lf::energy_kwh({1.0, 1000.0, 1.0, 1.0}), 1.0);
    EXPECT_DOUBLE_EQ(lf::emissions(1000.0, 1.0), 1.0);
    EXPECT_DOUBLE_EQ(lf::emissions(0.0, 494.0), 0.0);
}

TEST(CarbonTest, LinearityInEnergy) {
    const double a = 123.456, b = 78.9, intensity = 494.0;
    EXPECT_DOUBLE_EQ(lf::emissions(a + b, intensity),
                     lf::emissions(a, intensity) + lf::emissions(b, intensity));
}

TEST(CarbonTest, NonPositiveInputsRaise) {
    try {
        lf::energy_kwh({0.0, 350.0, 1.4, 494.0});
        FAIL() << "expected InvalidInput";
    } catch (const lf::Error& e) {
        EXPECT_EQ(e.code(), lf::ErrorCode::InvalidInput);
    }
    EXPECT_THROW(lf::energy_kwh({960.0, 350.0, 0.9, 494.0}), lf::Error);  // PUE < 1
    EXPECT_THROW(lf::emissions(-1.0, 494.0), lf::Error);
}

TEST(CarbonTest, ReportEchoesInputs) {
    const lf::CarbonInputs inputs{960.0, 350.0, 1.4, 494.0};
    const auto report = lf::carbon_report(inputs);
    const auto j = report.to_json();
    EXPECT_DOUBLE_EQ(j.at("inputs").at("gpu_hours").get<double>(), 960.0);
    EXPECT_DOUBLE_EQ(j.at("energy_kwh").get<double>(), 470.4);
    EXPECT_DOUBLE_EQ(report.emissions_kgco2eq, report.energy_kwh * 494.0 / 1000.0);
}
