#pragma once

#include <string_view>

namespace phenoeval::embedded {

extern const std::string_view kTableSpecsJson;
extern const std::string_view kTherapyTemplate;
extern const std::string_view kMedicationTemplate;

}  // namespace phenoeval::embedded
