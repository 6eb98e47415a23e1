#include "falter/classify.hpp"

#include <cmath>

#include <json.hpp>

#include "falter/errors.hpp"

namespace falter {

AgreementStats agreement_from_counts(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
  AgreementStats s;
  s.n = a + b + c + d;
  if (s.n == 0) throw DataError("agreement on zero children");
  const double n = static_cast<double>(s.n);
  const double po = static_cast<double>(a + d) / n;
  const double pa = static_cast<double>(a + b) / n;  // first rater, faltering
  const double pb = static_cast<double>(a + c) / n;  // second rater, faltering
  const double pe = pa * pb + (1.0 - pa) * (1.0 - pb);
  s.percent_discordance = 100.0 * static_cast<double>(b + c) / n;
  if (pe >= 1.0) {
    s.kappa_defined = false;
    s.kappa = std::numeric_limits<double>::quiet_NaN();
    s.kappa_z = std::numeric_limits<double>::quiet_NaN();
    s.kappa_p = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.kappa = (po - pe) / (1.0 - pe);
  // large-sample variance under the null of chance agreement
  const double cross = pa * pb * (pa + pb) + (1.0 - pa) * (1.0 - pb) * (2.0 - pa - pb);
  const double var0 = (pe + pe * pe - cross) / (n * (1.0 - pe) * (1.0 - pe));
  if (var0 > 0.0) {
    s.kappa_z = s.kappa / std::sqrt(var0);
    s.kappa_p = 0.5 * std::erfc(s.kappa_z / std::sqrt(2.0));
  } else {
    s.kappa_z = 0.0;
    s.kappa_p = 1.0;
  }
  return s;
}

AgreementStats agreement(const std::vector<bool>& a, const std::vector<bool>& b) {
  if (a.size() != b.size()) throw DataError("agreement: label vectors differ in length");
  std::size_t ca = 0, cb = 0, cc = 0, cd = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] && b[i]) ++ca;
    else if (a[i]) ++cb;
    else if (b[i]) ++cc;
    else ++cd;
  }
  return agreement_from_counts(ca, cb, cc, cd);
}

AgreementStats agreement(const Classification& a, const Classification& b) {
  std::vector<bool> la, lb;
  std::size_t only_a = 0;
  for (const auto& [id, f] : a.faltering) {
    const auto it = b.faltering.find(id);
    if (it == b.faltering.end()) {
      ++only_a;
      continue;
    }
    la.push_back(f);
    lb.push_back(it->second);
  }
  if (la.empty()) throw DataError("agreement: the two classifications share no children");
  auto s = agreement(la, lb);
  s.only_in_a = only_a;
  s.only_in_b = b.faltering.size() - la.size();
  return s;
}

std::string AgreementStats::to_json() const {
  nlohmann::json j;
  j["n"] = n;
  j["only_in_a"] = only_in_a;
  j["only_in_b"] = only_in_b;
  j["percent_discordance"] = percent_discordance;
  j["kappa_defined"] = kappa_defined;
  if (kappa_defined) {
    j["kappa"] = kappa;
    j["kappa_z"] = kappa_z;
    j["kappa_p"] = kappa_p;
    j["significant_1pct"] = significant(0.01);
  } else {
    j["kappa"] = nullptr;
  }
  return j.dump(2);
}

}  // namespace falter
