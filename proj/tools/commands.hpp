#pragma once

#include "config.hpp"

namespace dhazard::cli {

void cmd_simulate(const RunConfig& config);
void cmd_fit(const RunConfig& config);
void cmd_predict(const RunConfig& config);
void cmd_report(const RunConfig& config);

}  // namespace dhazard::cli
