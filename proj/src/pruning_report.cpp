#include "fiited/pruning_report.hpp"

#include <cmath>

#include <json.hpp>

namespace fiited {

std::string PruningReport::to_json_line() const {
  nlohmann::ordered_json j;
  j["iter"] = iter;
  auto thr = nlohmann::ordered_json::array();
  for (const double t : thresholds) {
    if (std::isinf(t) && t < 0) {
      thr.push_back(nullptr);
    } else {
      thr.push_back(t);
    }
  }
  j["thresholds"] = thr;
  j["evicted"] = evicted;
  j["allocated"] = allocated;
  j["alloc_failed"] = alloc_failed;
  j["live_fraction_per_chunk"] = live_fraction_per_chunk;
  j["enforced"] = enforced;
  j["crossing"] = crossing;
  j["total_chunks"] = total_chunks;
  j["skipped"] = skipped;
  return j.dump();
}

PruningReport pruning_report_from_json(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  PruningReport r;
  r.iter = j.at("iter").get<std::int64_t>();
  for (const auto& t : j.at("thresholds")) {
    r.thresholds.push_back(t.is_null() ? -INFINITY : t.get<double>());
  }
  r.evicted = j.at("evicted").get<std::size_t>();
  r.allocated = j.at("allocated").get<std::size_t>();
  r.alloc_failed = j.at("alloc_failed").get<std::size_t>();
  r.live_fraction_per_chunk = j.at("live_fraction_per_chunk").get<std::vector<double>>();
  r.enforced = j.at("enforced").get<bool>();
  r.crossing = j.value("crossing", std::size_t{0});
  r.total_chunks = j.value("total_chunks", std::size_t{0});
  r.skipped = j.value("skipped", false);
  return r;
}

}  // namespace fiited
