#pragma once

#include <string>

#include <json.hpp>

#include "cdml/analysis.hpp"
#include "cdml/cdml.hpp"
#include "cdml/datagen.hpp"
#include "cdml/dml.hpp"
#include "cdml/forest.hpp"
#include "cdml/mlp.hpp"

namespace cdml {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// Model files: {"schema_version", "kind", ...} with shape-tagged arrays
// {"shape": [...], "values": [...]} for every parameter tensor.
json mlp_to_json(const FittedMlp& model);
FittedMlp mlp_from_json(const json& j);
json forest_to_json(const Forest& forest);
Forest forest_from_json(const json& j);

json to_json(const DgpConfig& cfg);
DgpConfig dgp_from_json(const json& j);
json to_json(const EstimateReport& rep);
json to_json(const CdmlReport& rep);
json to_json(const BiasReport& rep);
json to_json(const MetricsReport& rep);
json to_json(const BootstrapCI& ci);

void write_json_file(const json& j, const std::string& path);
json read_json_file(const std::string& path);

}  // namespace cdml
