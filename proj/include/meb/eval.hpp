#pragma once

// Retrieval evaluation under the cross-camera protocol: per query, gallery
// entries sharing both identity and camera with the query are excluded,
// the rest are ranked by ascending L2 distance (ties broken by gallery
// index), and CMC plus mean average precision are aggregated over queries
// that still have at least one positive.

#include <string>
#include <vector>

#include "meb/dataset.hpp"
#include "meb/tensor.hpp"

namespace meb::eval {

struct MetricsReport {
  double map = 0.0;
  std::vector<double> cmc;           // cmc[r]: hit within the top r+1 ranks
  std::vector<double> per_query_ap;  // aligned with queries; -1 marks skipped
  int skipped_queries = 0;           // queries with no valid positive
  std::string expert;                // caller-filled logging context
  int epoch = 0;
};

// Feature rows are expected L2-normalized (callers normalize; the metric
// itself is plain L2). AP uses the discrete precision-at-hit formula
// AP = (1/P) * sum over hit ranks k of (hits so far / k).
MetricsReport evaluate(const num::Tensor& query_features,
                       const std::vector<data::SampleRecord>& query_meta,
                       const num::Tensor& gallery_features,
                       const std::vector<data::SampleRecord>& gallery_meta,
                       int ranks = 20);

}  // namespace meb::eval
