#pragma once

#include <string>
#include <vector>

#include "segfuse/runconfig.hpp"

namespace segfuse {

// Pipeline stages behind the CLI verbs. Each throws Error with a message
// naming the stage and the missing artifact when run out of order.

void cmd_generate(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_predict(const RunConfig& cfg, const std::string& split);
void cmd_score(const RunConfig& cfg, const std::string& split);
void cmd_visualize(const RunConfig& cfg, const std::string& split, const std::string& strategy);

// Scored strategy names for a config: base models first, then the fusions.
std::vector<std::string> strategy_names(const RunConfig& cfg);

}  // namespace segfuse
