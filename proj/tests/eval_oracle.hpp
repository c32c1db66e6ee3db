#pragma once

#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "geocdl/eval.hpp"

namespace oracle {

using geocdl::eval::CdlPair;
namespace cdl = geocdl::cdl;

// Set scorer over printed lines, split into sections by statement name.
struct Section {
  double precision, recall, accuracy, full;
};

inline std::pair<Section, Section> score(const std::vector<CdlPair>& pairs) {
  auto lines = [](const cdl::CdlDocument& d, bool cons) {
    std::set<std::string> out;
    std::istringstream in(cdl::print(d));
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      const bool is_cons = line.starts_with("Shape(") || line.starts_with("Collinear(") || line.starts_with("Cocircular(");
      if (is_cons == cons) out.insert(line);
    }
    return out;
  };
  auto section = [&](bool cons) {
    double hits = 0, pred = 0, gold = 0, uni = 0, exact = 0;
    for (const auto& p : pairs) {
      const auto a = lines(p.pred, cons), b = lines(p.gold, cons);
      std::set<std::string> both, any = a;
      for (const auto& s : a)
        if (b.count(s)) both.insert(s);
      any.insert(b.begin(), b.end());
      hits += static_cast<double>(both.size());
      pred += static_cast<double>(a.size());
      gold += static_cast<double>(b.size());
      uni += static_cast<double>(any.size());
      exact += a == b;
    }
    const bool vacuous = uni == 0;
    auto pct = [&](double n, double d) { return d == 0 ? (vacuous ? 100.0 : 0.0) : 100.0 * n / d; };
    return Section{pct(hits, pred), pct(hits, gold), pct(hits, uni), 100.0 * exact / static_cast<double>(pairs.size())};
  };
  return {section(true), section(false)};
}

}  // namespace oracle
