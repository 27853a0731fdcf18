#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "streamst/inference.hpp"
#include "streamst/prediction.hpp"
#include "streamst/simulation.hpp"

namespace streamst::cli {

/// Flat `key = value` configuration; `#` starts a comment.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_config(std::istream& in, const std::string& source = "<config>");
KeyValues read_config_file(const std::string& path);

/// Everything a batch run needs, resolved from config keys (flags already merged in).
struct RunConfig {
    std::string response = "y";
    std::vector<std::string> covariates;
    bool intercept = true;
    ModelSpec model{{{KernelFamily::TailDown, KernelShape::Exponential}}, TemporalMode::AR};
    SamplerConfig sampler;
    PriorSpec prior_overrides;  ///< range_upper <= 0 means "derive from observed sites"
    PredictionRequest prediction;
    SimulationSpec simulation;
    NetworkGeneratorOptions generator;
    double threshold = 13.0;
    double level = 0.95;
    std::uint64_t seed = 1;

    static RunConfig from(const KeyValues& kv);
};

/// Entry point behind the `streamst` executable. Returns the process exit code;
/// failures print one `<category>: <message>` line to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace streamst::cli
