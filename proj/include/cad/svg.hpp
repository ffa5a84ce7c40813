#pragma once

#include <string>
#include <vector>

#include "cad/labels.hpp"
#include "cad/metrics.hpp"

namespace cad {

// Per-class precision-recall curves on a unit box.
void writePrCurvesSvg(const std::string& path, const EvalReport& report);

// Activity trace bands over time: predicted on top, reference below when given.
void writeTraceSvg(const std::string& path, const std::vector<int>& predicted,
                   const std::vector<int>* actual, const LabelScheme& scheme, double hop_ms = 10.0);

// Predicted vs actual minutes per (session, activity) with the diagonal.
void writeAggregateScatterSvg(const std::string& path, const AggregateTimeReport& report);

}  // namespace cad
