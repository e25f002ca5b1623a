#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "netfragility/country_codes.hpp"
#include "netfragility/errors.hpp"
#include "netfragility/io_util.hpp"
#include "netfragility/rng.hpp"

namespace netfragility {

// One bank in one reporting year. Money is in million EUR.
struct BankRecord {
  std::string lei;
  std::string name;
  std::string country;
  double total_assets = 0.0;
  double capital = 0.0;
  std::map<std::string, double> exposures;  // counterparty country -> amount

  double total_exposure() const {
    double s = 0.0;
    for (const auto& [c, v] : exposures) s += v;
    return s;
  }

  bool operator==(const BankRecord&) const = default;
};

struct ExposurePanel {
  std::vector<int> years;  // strictly increasing
  std::map<int, std::vector<BankRecord>> records;

  const std::vector<BankRecord>& year(int y) const {
    auto it = records.find(y);
    if (it == records.end()) throw DomainError("panel has no year " + std::to_string(y));
    return it->second;
  }

  bool operator==(const ExposurePanel&) const = default;
};

inline constexpr std::string_view kPanelHeader =
    "year,lei,name,country,total_assets,capital,exposure_country,exposure_amount";

inline bool is_valid_lei(std::string_view lei) {
  return lei.size() == 20 &&
         std::all_of(lei.begin(), lei.end(), [](unsigned char c) { return std::isalnum(c) != 0; });
}

// Checks the panel-level invariants. Throws InputError on violation.
inline void validate_panel(const ExposurePanel& panel) {
  if (panel.years.empty()) throw InputError("panel has no years");
  for (std::size_t i = 1; i < panel.years.size(); ++i)
    if (panel.years[i] <= panel.years[i - 1]) throw InputError("panel years not strictly increasing");
  if (panel.records.size() != panel.years.size()) throw InputError("panel year index out of sync");
  for (int y : panel.years) {
    const auto& recs = panel.year(y);
    if (recs.size() < 2)
      throw InputError("year " + std::to_string(y) + " has " + std::to_string(recs.size()) +
                       " bank(s); a network needs at least 2");
    std::set<std::string> seen;
    for (const auto& r : recs) {
      if (!seen.insert(r.lei).second)
        throw InputError("duplicate LEI " + r.lei + " in year " + std::to_string(y));
      for (const auto& [c, v] : r.exposures)
        if (!(v >= 0.0)) throw InputError("negative exposure for " + r.lei + " to " + c);
    }
  }
}

namespace detail {

inline const std::vector<std::string>& panel_columns() {
  static const std::vector<std::string> cols = {"year",         "lei",     "name",
                                                "country",      "total_assets", "capital",
                                                "exposure_country", "exposure_amount"};
  return cols;
}

}  // namespace detail

// Parses the panel CSV text. `source` names the input in error messages.
inline ExposurePanel parse_panel_csv(const std::string& text, const std::string& source,
                                     Diagnostics* diag = nullptr) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw ParseError(source, 1, "empty file, expected header row");

  const auto header = split_csv_line(lines[0]);
  if (header != detail::panel_columns())
    throw ParseError(source, 1, "unexpected header, expected '" + std::string(kPanelHeader) + "'");

  ExposurePanel panel;
  // (year, lei) -> index into records[year]
  std::map<std::pair<int, std::string>, std::size_t> index;
  std::set<std::string> unknown_reported;
  const auto& cols = detail::panel_columns();

  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const std::size_t line_no = ln + 1;
    const auto& line = lines[ln];
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != cols.size())
      throw ParseError(source, line_no,
                       "expected " + std::to_string(cols.size()) + " fields, got " +
                           std::to_string(f.size()));

    auto num = [&](std::size_t col) {
      auto v = parse_double(f[col]);
      if (!v || !std::isfinite(*v))
        throw ParseError(source, line_no, "column " + cols[col] + ": not a number '" + f[col] + "'");
      if (*v < 0.0)
        throw ParseError(source, line_no, "column " + cols[col] + ": negative value " + f[col]);
      return *v;
    };

    const auto year = parse_int(f[0]);
    if (!year) throw ParseError(source, line_no, "column year: not an integer '" + f[0] + "'");
    const std::string& lei = f[1];
    if (!is_valid_lei(lei))
      throw ParseError(source, line_no, "column lei: '" + lei + "' is not a 20-character alphanumeric LEI");
    const std::string& country = f[3];
    if (country.size() != 2 || !std::isupper(static_cast<unsigned char>(country[0])) ||
        !std::isupper(static_cast<unsigned char>(country[1])))
      throw ParseError(source, line_no, "column country: '" + country + "' is not a 2-letter code");

    BankRecord bank;
    bank.lei = lei;
    bank.name = f[2];
    bank.country = country;
    bank.total_assets = num(4);
    bank.capital = num(5);

    const int y = static_cast<int>(*year);
    auto& recs = panel.records[y];
    auto [it, inserted] = index.try_emplace({y, lei}, recs.size());
    if (inserted) {
      recs.push_back(bank);
    } else {
      const auto& prev = recs[it->second];
      if (prev.name != bank.name || prev.country != bank.country ||
          prev.total_assets != bank.total_assets || prev.capital != bank.capital)
        throw ParseError(source, line_no,
                         "duplicate LEI " + lei + " in year " + std::to_string(y) +
                             " with conflicting bank fields");
    }
    auto& rec = recs[it->second];

    for (const std::string& code : {bank.country, f[6]}) {
      if (!code.empty() && !is_known_country(code) && unknown_reported.insert(code).second)
        warn(diag, source + ":" + std::to_string(line_no) + ": unknown country code " + code +
                       " (kept)");
    }

    const std::string& ecountry = f[6];
    if (ecountry.empty()) {
      if (!f[7].empty())
        throw ParseError(source, line_no, "column exposure_amount set without exposure_country");
      continue;
    }
    if (ecountry.size() != 2)
      throw ParseError(source, line_no, "column exposure_country: '" + ecountry + "' is not a 2-letter code");
    const double amount = num(7);
    if (!rec.exposures.emplace(ecountry, amount).second)
      throw ParseError(source, line_no,
                       "duplicate LEI " + lei + " exposure row for country " + ecountry + " in year " +
                           std::to_string(y));
  }

  for (const auto& [y, recs] : panel.records) panel.years.push_back(y);
  validate_panel(panel);
  return panel;
}

inline ExposurePanel load_panel(const std::string& path, Diagnostics* diag = nullptr) {
  if (!std::filesystem::exists(path)) throw InputError("input file not found: " + path);
  return parse_panel_csv(read_text_file(path), path, diag);
}

inline std::string panel_to_csv(const ExposurePanel& panel) {
  std::string out(kPanelHeader);
  out += '\n';
  for (int y : panel.years) {
    for (const auto& r : panel.year(y)) {
      const std::string prefix = std::to_string(y) + "," + csv_escape(r.lei) + "," + csv_escape(r.name) +
                                 "," + csv_escape(r.country) + "," + format_double(r.total_assets) + "," +
                                 format_double(r.capital) + ",";
      if (r.exposures.empty()) {
        out += prefix + ",\n";
        continue;
      }
      for (const auto& [c, v] : r.exposures) out += prefix + c + "," + format_double(v) + "\n";
    }
  }
  return out;
}

inline void write_panel(const ExposurePanel& panel, const std::string& path) {
  write_text_file(path, panel_to_csv(panel));
}

// Companion manifest: {"years": [{"year": 2014, "n_banks": 61}, ...]}.
inline nlohmann::json panel_manifest(const ExposurePanel& panel) {
  nlohmann::json years = nlohmann::json::array();
  for (int y : panel.years) years.push_back({{"year", y}, {"n_banks", panel.year(y).size()}});
  return {{"years", years}};
}

inline void validate_manifest(const ExposurePanel& panel, const nlohmann::json& manifest) {
  if (!manifest.contains("years") || !manifest["years"].is_array())
    throw InputError("manifest: missing 'years' array");
  std::vector<int> listed;
  for (const auto& entry : manifest["years"]) {
    const int y = entry.at("year").get<int>();
    const auto expected = entry.at("n_banks").get<std::size_t>();
    listed.push_back(y);
    auto it = panel.records.find(y);
    if (it == panel.records.end()) throw InputError("manifest: year " + std::to_string(y) + " missing from panel");
    if (it->second.size() != expected)
      throw InputError("manifest: year " + std::to_string(y) + " expects " + std::to_string(expected) +
                       " banks, panel has " + std::to_string(it->second.size()));
  }
  if (listed != panel.years) throw InputError("manifest: year list does not match panel");
}

// Path of the manifest that accompanies a panel CSV: panel.csv -> panel.manifest.json.
inline std::string manifest_path_for(const std::string& panel_path) {
  std::filesystem::path p(panel_path);
  return (p.parent_path() / (p.stem().string() + ".manifest.json")).string();
}

// ---------------------------------------------------------------------------
// Synthetic panels
// ---------------------------------------------------------------------------

struct SynthYear {
  int year = 0;
  std::size_t n_banks = 0;
  double total_exposure = 0.0;  // million EUR
  std::vector<std::string> countries;
  double exposure_cv = 1.0;   // coefficient of variation of per-bank totals
  double share_sigma = 0.75;   // log-scale dispersion of a bank's split across countries
  bool gravity_shares = false;  // scale each country's share by its number of counterparty banks
};

struct SynthSpec {
  std::vector<SynthYear> years;
  std::size_t persistent_banks = 0;  // LEIs present in every year
};

// Calibration to the published sample composition: bank counts, total
// exposure (million EUR), country counts and per-bank exposure dispersion
// (std dev / mean) for 2014, 2016, 2018, 2021 and 2023, with 18 banks
// present in every year.
inline SynthSpec composition_spec() {
  const std::vector<std::string> roster = {"DE", "FR", "IT", "ES", "NL", "BE", "AT", "SE",
                                           "DK", "FI", "IE", "PT", "GR", "LU", "PL"};
  auto first = [&](std::size_t k) { return std::vector<std::string>(roster.begin(), roster.begin() + k); };
  SynthSpec spec;
  spec.years = {
      {2014, 61, 79317.0, first(15), 1842.0 / 1300.0},
      {2016, 37, 64202.0, first(13), 2154.0 / 1735.0},
      {2018, 30, 57202.0, first(12), 2398.0 / 1907.0},
      {2021, 31, 58978.0, first(13), 2211.0 / 1903.0},
      {2023, 33, 68403.0, first(14), 2567.0 / 2073.0},
  };
  spec.persistent_banks = 18;
  return spec;
}

// Same composition with near-uniform bank sizes and country shares scaled by
// the number of counterparty banks there. Degree heterogeneity then comes only
// from the country mix, and reconstructed lambda2 lands within a few percent
// of 1323, 1798, 2037, 2007 and 2182.
inline SynthSpec spectral_level_spec() {
  SynthSpec spec = composition_spec();
  for (auto& y : spec.years) {
    y.exposure_cv = 0.05;
    y.share_sigma = 0.1;
    y.gravity_shares = true;
  }
  return spec;
}

namespace detail {

inline std::string random_lei(Stream& rng) {
  static constexpr std::string_view alphabet = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";
  std::string lei = "SYN";
  for (int i = 0; i < 15; ++i) lei += alphabet[rng.below(alphabet.size())];
  lei += "00";
  return lei;
}

struct SynthIdentity {
  std::string lei;
  std::string name;
  std::string country;
};

}  // namespace detail

// Generates a panel whose per-year bank counts and total exposures match the
// spec exactly. Per-bank totals are log-normal with the requested dispersion,
// split across counterparty countries by log-normal weights, then rescaled.
// Every bank is exposed to each listed country that has another bank in it,
// so the proportional reconstruction allocates all of the exposure.
inline ExposurePanel synthesize_panel(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.years.empty()) throw InputError("synthesize_panel: no years requested");
  std::vector<std::string> shared;  // countries listed in every year
  for (const auto& y : spec.years) {
    const std::string tag = "synthesize_panel: year " + std::to_string(y.year);
    if (y.n_banks < 2) throw InputError(tag + " needs n_banks >= 2");
    if (!(y.total_exposure > 0.0)) throw InputError(tag + " needs total_exposure > 0");
    if (y.countries.empty()) throw InputError(tag + " has no countries");
    if (!(y.exposure_cv >= 0.0)) throw InputError(tag + " needs exposure_cv >= 0");
    if (!(y.share_sigma >= 0.0)) throw InputError(tag + " needs share_sigma >= 0");
    if (y.n_banks < spec.persistent_banks)
      throw InputError(tag + " has fewer banks than persistent_banks");
  }
  for (const auto& c : spec.years.front().countries) {
    bool everywhere = std::all_of(spec.years.begin(), spec.years.end(), [&](const SynthYear& y) {
      return std::find(y.countries.begin(), y.countries.end(), c) != y.countries.end();
    });
    if (everywhere) shared.push_back(c);
  }
  if (spec.persistent_banks > 0 && shared.empty())
    throw InputError("synthesize_panel: persistent banks need a country listed in every year");

  std::set<std::string> used_leis;
  auto fresh_lei = [&](Stream& rng) {
    std::string lei;
    do lei = detail::random_lei(rng);
    while (!used_leis.insert(lei).second);
    return lei;
  };

  Stream roster_rng = Stream::derived(seed, 0);
  std::vector<detail::SynthIdentity> persistent;
  for (std::size_t k = 0; k < spec.persistent_banks; ++k) {
    const std::string& c = shared[k % shared.size()];
    persistent.push_back({fresh_lei(roster_rng), "Synthetic Bank P" + std::to_string(k + 1) + " " + c, c});
  }

  ExposurePanel panel;
  for (const auto& ys : spec.years) {
    Stream rng = Stream::derived(seed, static_cast<std::uint64_t>(ys.year) + 1);
    const std::size_t k = ys.countries.size();
    const std::size_t min_per_country = ys.n_banks >= 2 * k ? 2 : 1;

    std::vector<detail::SynthIdentity> ids = persistent;
    std::map<std::string, std::size_t> per_country;
    for (const auto& id : ids) ++per_country[id.country];
    std::size_t counter = 0;
    auto add_bank = [&](const std::string& c) {
      ++counter;
      ids.push_back({fresh_lei(rng),
                     "Synthetic Bank " + std::to_string(ys.year) + "-" + std::to_string(counter) + " " + c, c});
      ++per_country[c];
    };
    for (const auto& c : ys.countries)
      while (per_country[c] < min_per_country && ids.size() < ys.n_banks) add_bank(c);
    while (ids.size() < ys.n_banks) add_bank(ys.countries[rng.below(k)]);

    const double sigma = std::sqrt(std::log1p(ys.exposure_cv * ys.exposure_cv));
    std::vector<BankRecord> recs;
    double grand = 0.0;
    for (const auto& id : ids) {
      BankRecord r;
      r.lei = id.lei;
      r.name = id.name;
      r.country = id.country;
      const double bank_total = rng.lognormal(-0.5 * sigma * sigma, sigma);
      std::vector<std::pair<std::string, double>> shares;
      double wsum = 0.0;
      for (const auto& c : ys.countries) {
        const std::size_t others = per_country[c] - (c == id.country ? 1 : 0);
        if (others == 0) continue;
        const double w = (ys.gravity_shares ? static_cast<double>(others) : 1.0) * rng.lognormal(0.0, ys.share_sigma);
        shares.emplace_back(c, w);
        wsum += w;
      }
      for (const auto& [c, w] : shares) r.exposures[c] = bank_total * w / wsum;
      grand += bank_total;
      r.total_assets = bank_total * rng.uniform(8.0, 25.0);
      r.capital = r.total_assets * rng.uniform(0.05, 0.09);
      recs.push_back(std::move(r));
    }
    const double scale = ys.total_exposure / grand;
    for (auto& r : recs) {
      for (auto& [c, v] : r.exposures) v *= scale;
      r.total_assets *= scale;
      r.capital *= scale;
    }
    panel.years.push_back(ys.year);
    panel.records.emplace(ys.year, std::move(recs));
  }
  std::sort(panel.years.begin(), panel.years.end());
  validate_panel(panel);
  return panel;
}

}  // namespace netfragility
