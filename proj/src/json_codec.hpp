#pragma once

#include <json.hpp>

#include "hiccap/data_model.hpp"

namespace hiccap::detail {

nlohmann::json labels_to_json(const LabelSet& labels);
LabelSet labels_from_json(const nlohmann::json& j);

}  // namespace hiccap::detail
