#include "microgrid/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "microgrid/errors.hpp"

namespace microgrid {

namespace fs = std::filesystem;

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
  }
  return out;
}

struct CsvTable {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;

  int column(const std::string& col) const {
    const auto it = std::find(header.begin(), header.end(), col);
    if (it == header.end()) throw LoadError(name + ": missing column '" + col + "'");
    return static_cast<int>(it - header.begin());
  }
};

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  CsvTable t;
  t.name = path.filename().string();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_commas(line);
    if (t.header.empty()) {
      for (auto f : fields) t.header.emplace_back(f);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw LoadError(t.name + " row " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                      " fields, got " + std::to_string(fields.size()));
    }
    t.rows.emplace_back(fields.begin(), fields.end());
    t.line_numbers.push_back(lineno);
  }
  if (t.header.empty()) throw LoadError(t.name + ": empty file");
  return t;
}

template <typename T>
T parse_num(const std::string& s, const CsvTable& t, std::size_t row, const char* col) {
  T v{};
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw LoadError(t.name + " row " + std::to_string(t.line_numbers[row]) + ": cannot parse " + col + " '" + s + "'");
  }
  return v;
}

void read_series(const fs::path& path, int households, int slots, std::vector<std::vector<double>>& out) {
  const CsvTable t = read_csv(path);
  const int c_slot = t.column("slot");
  const int c_hh = t.column("household_id");
  const int c_kw = t.column("kw");
  out.assign(static_cast<std::size_t>(households), std::vector<double>(static_cast<std::size_t>(slots), std::nan("")));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = t.name + " row " + std::to_string(t.line_numbers[r]);
    const int slot = parse_num<int>(row[c_slot], t, r, "slot");
    const int hh = parse_num<int>(row[c_hh], t, r, "household_id");
    const double kw = parse_num<double>(row[c_kw], t, r, "kw");
    if (slot < 0 || slot >= slots) throw LoadError(where + ": slot " + std::to_string(slot) + " out of range");
    if (hh < 0 || hh >= households) throw LoadError(where + ": household_id " + std::to_string(hh) + " out of range");
    if (!(kw >= 0.0) || !std::isfinite(kw)) throw LoadError(where + ": negative or non-finite kw");
    double& cell = out[static_cast<std::size_t>(hh)][static_cast<std::size_t>(slot)];
    if (!std::isnan(cell)) throw LoadError(where + ": duplicate (slot, household_id)");
    cell = kw;
  }
  for (int h = 0; h < households; ++h) {
    for (int s = 0; s < slots; ++s) {
      if (std::isnan(out[static_cast<std::size_t>(h)][static_cast<std::size_t>(s)])) {
        throw LoadError(t.name + ": no row for slot " + std::to_string(s) + ", household " + std::to_string(h));
      }
    }
  }
}

void read_prices(const fs::path& path, int slots, PriceSchedule& out) {
  const CsvTable t = read_csv(path);
  const int c_slot = t.column("slot");
  const int c_os = t.column("p_os");
  const int c_in = t.column("p_in");
  const int c_ob = t.column("p_ob");
  out.slots.assign(static_cast<std::size_t>(slots), PriceSlot{std::nan(""), std::nan(""), std::nan("")});
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = t.name + " row " + std::to_string(t.line_numbers[r]);
    const int slot = parse_num<int>(row[c_slot], t, r, "slot");
    PriceSlot p{parse_num<double>(row[c_os], t, r, "p_os"), parse_num<double>(row[c_in], t, r, "p_in"),
                parse_num<double>(row[c_ob], t, r, "p_ob")};
    if (slot < 0 || slot >= slots) throw LoadError(where + ": slot " + std::to_string(slot) + " out of range");
    if (!std::isnan(out.slots[static_cast<std::size_t>(slot)].internal)) throw LoadError(where + ": duplicate slot");
    if (p.sell_ext > p.internal) throw LoadError(where + ": p_os > p_in");
    if (p.internal > p.buy_ext) throw LoadError(where + ": p_in > p_ob");
    if (!(p.sell_ext >= 0.0)) throw LoadError(where + ": negative price");
    out.slots[static_cast<std::size_t>(slot)] = p;
  }
  for (int s = 0; s < slots; ++s) {
    if (std::isnan(out.slots[static_cast<std::size_t>(s)].internal)) {
      throw LoadError(t.name + ": no row for slot " + std::to_string(s));
    }
  }
}

}  // namespace

void validate_scenario(const Scenario& s) {
  if (s.n_households < 1) throw LoadError("scenario: household count must be >= 1");
  if (s.days < 1) throw LoadError("scenario: day count must be >= 1");
  if (s.slots_per_day < 1) throw LoadError("scenario: slots_per_day must be >= 1");
  const auto slots = static_cast<std::size_t>(s.total_slots());
  const auto check_series = [&](const std::vector<std::vector<double>>& series, const char* what) {
    if (series.size() != static_cast<std::size_t>(s.n_households)) {
      throw LoadError(std::string("scenario: ") + what + " has " + std::to_string(series.size()) + " households");
    }
    for (std::size_t h = 0; h < series.size(); ++h) {
      if (series[h].size() != slots) {
        throw LoadError(std::string("scenario: ") + what + " household " + std::to_string(h) + " has wrong length");
      }
      for (std::size_t t = 0; t < slots; ++t) {
        const double v = series[h][t];
        if (!(v >= 0.0) || !std::isfinite(v)) {
          throw LoadError(std::string("scenario: ") + what + " household " + std::to_string(h) + " slot " +
                          std::to_string(t) + " is negative or non-finite");
        }
      }
    }
  };
  check_series(s.base_load, "base_load");
  check_series(s.pv, "pv");
  if (s.prices.size() != slots) throw LoadError("scenario: price schedule has wrong length");
  for (std::size_t t = 0; t < slots; ++t) {
    const auto& p = s.prices[t];
    if (!(p.sell_ext >= 0.0) || !p.ordered()) {
      throw LoadError("scenario: prices at slot " + std::to_string(t) + " violate p_os <= p_in <= p_ob");
    }
  }
}

void SyntheticConfig::validate() const {
  if (n_households < 1) throw ConfigError("synthetic: n_households must be >= 1");
  if (days < 2) throw ConfigError("synthetic: days must be >= 2 (action bounds need a previous day)");
  if (slots_per_day != 24) throw ConfigError("synthetic: only 24 slots per day are supported");
  if (!(mean_base_load > 0.0)) throw ConfigError("synthetic: mean_base_load must be > 0");
  if (!(household_spread >= 0.0 && household_spread < 1.0)) throw ConfigError("synthetic: household_spread in [0,1)");
  if (!(pv_penetration >= 0.0 && pv_penetration <= 1.0)) throw ConfigError("synthetic: pv_penetration in [0,1]");
  if (!(pv_capacity_min >= 0.0 && pv_capacity_max >= pv_capacity_min)) throw ConfigError("synthetic: bad PV capacity");
  if (!(sunrise >= 0 && sunset <= 24 && sunrise < sunset)) throw ConfigError("synthetic: bad sunrise/sunset");
  if (!(offpeak_end >= 0 && offpeak_end <= 24)) throw ConfigError("synthetic: offpeak_end in [0,24]");
  if (!(export_ratio >= 0.0 && export_ratio <= 1.0)) throw ConfigError("synthetic: export_ratio in [0,1]");
  if (!(price_offpeak > 0.0 && price_peak >= price_offpeak)) throw ConfigError("synthetic: need 0 < price_offpeak <= price_peak");
}

std::string SyntheticConfig::hash(std::uint64_t seed) const {
  nlohmann::json j{{"n_households", n_households},
                   {"days", days},
                   {"slots_per_day", slots_per_day},
                   {"mean_base_load", mean_base_load},
                   {"household_spread", household_spread},
                   {"load_noise", load_noise},
                   {"load_drift_per_day", load_drift_per_day},
                   {"pv_penetration", pv_penetration},
                   {"pv_capacity", {pv_capacity_min, pv_capacity_max}},
                   {"sun", {sunrise, sunset}},
                   {"cloud", {cloud_mean, cloud_persistence, cloud_noise}},
                   {"pv_noise", pv_noise},
                   {"offpeak_end", offpeak_end},
                   {"tou_prices", {price_offpeak, price_peak}},
                   {"export_ratio", export_ratio},
                   {"seed", seed}};
  return fnv1a64_hex(j.dump());
}

std::string fnv1a64_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<double> diurnal_load_shape(int slots_per_day) {
  std::vector<double> shape(static_cast<std::size_t>(slots_per_day));
  double sum = 0.0;
  for (int s = 0; s < slots_per_day; ++s) {
    const double h = (s + 0.5) * 24.0 / slots_per_day;
    const double morning = 0.6 * std::exp(-0.5 * std::pow((h - 7.5) / 1.5, 2));
    const double evening = 1.0 * std::exp(-0.5 * std::pow((h - 19.5) / 2.5, 2));
    shape[static_cast<std::size_t>(s)] = 0.6 + morning + evening;
    sum += shape[static_cast<std::size_t>(s)];
  }
  for (double& v : shape) v *= slots_per_day / sum;
  return shape;
}

Scenario generate_synthetic(const SyntheticConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  Scenario sc;
  sc.n_households = cfg.n_households;
  sc.days = cfg.days;
  sc.slots_per_day = cfg.slots_per_day;
  const int spd = cfg.slots_per_day;
  const auto slots = static_cast<std::size_t>(sc.total_slots());

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Shared weather first so household draws do not shift it.
  std::vector<double> cloud(static_cast<std::size_t>(cfg.days));
  double c = cfg.cloud_mean;
  for (int d = 0; d < cfg.days; ++d) {
    c = cfg.cloud_mean + cfg.cloud_persistence * (c - cfg.cloud_mean) + cfg.cloud_noise * normal(rng);
    c = std::clamp(c, 0.05, 1.0);
    cloud[static_cast<std::size_t>(d)] = c;
  }

  sc.prices.slots.resize(slots);
  for (std::size_t t = 0; t < slots; ++t) {
    const int h = static_cast<int>(t % static_cast<std::size_t>(spd));
    const double ob = h < cfg.offpeak_end ? cfg.price_offpeak : cfg.price_peak;
    const double os = cfg.export_ratio * ob;
    sc.prices.slots[t] = PriceSlot{os, midpoint_internal_price(os, ob), ob};
  }

  const auto shape = diurnal_load_shape(spd);
  sc.base_load.assign(static_cast<std::size_t>(cfg.n_households), std::vector<double>(slots));
  sc.pv.assign(static_cast<std::size_t>(cfg.n_households), std::vector<double>(slots, 0.0));
  for (int i = 0; i < cfg.n_households; ++i) {
    const double scale = 1.0 + cfg.household_spread * (2.0 * unit(rng) - 1.0);
    const bool has_pv = unit(rng) < cfg.pv_penetration;
    const double kwp = cfg.pv_capacity_min + (cfg.pv_capacity_max - cfg.pv_capacity_min) * unit(rng);
    auto& load = sc.base_load[static_cast<std::size_t>(i)];
    auto& pv = sc.pv[static_cast<std::size_t>(i)];
    for (std::size_t t = 0; t < slots; ++t) {
      const int h = static_cast<int>(t % static_cast<std::size_t>(spd));
      const int d = static_cast<int>(t / static_cast<std::size_t>(spd));
      const double drift = 1.0 + cfg.load_drift_per_day * d;
      const double noise = std::max(0.0, 1.0 + cfg.load_noise * normal(rng));
      load[t] = cfg.mean_base_load * scale * shape[static_cast<std::size_t>(h)] * drift * noise;
      if (has_pv && h >= cfg.sunrise && h < cfg.sunset) {
        const double x = (h + 0.5 - cfg.sunrise) / (cfg.sunset - cfg.sunrise);
        const double bell = std::sin(std::numbers::pi * x);
        const double local = std::max(0.0, 1.0 + cfg.pv_noise * normal(rng));
        pv[t] = kwp * bell * cloud[static_cast<std::size_t>(d)] * local;
      }
    }
  }
  validate_scenario(sc);
  return sc;
}

Scenario generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Scenario sc = generate_synthetic(cfg, rng);
  sc.config_hash = cfg.hash(seed);
  return sc;
}

Scenario load_scenario(const std::string& path) {
  fs::path manifest = path;
  if (fs::is_directory(manifest)) manifest /= "scenario.json";
  std::ifstream in(manifest);
  if (!in) throw LoadError("cannot open scenario manifest " + manifest.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(manifest.string() + ": invalid JSON: " + e.what());
  }
  Scenario sc;
  try {
    if (j.value("format", "") != "microgrid.scenario") throw LoadError(manifest.string() + ": unknown format");
    sc.n_households = j.at("households").get<int>();
    sc.days = j.at("days").get<int>();
    sc.slots_per_day = j.value("slots_per_day", 24);
    sc.config_hash = j.value("config_hash", "");
    const auto& files = j.at("files");
    const fs::path dir = manifest.parent_path();
    if (sc.n_households < 1 || sc.days < 1 || sc.slots_per_day < 1) {
      throw LoadError(manifest.string() + ": households, days and slots_per_day must be positive");
    }
    read_series(dir / files.at("base_load").get<std::string>(), sc.n_households, sc.total_slots(), sc.base_load);
    read_series(dir / files.at("pv").get<std::string>(), sc.n_households, sc.total_slots(), sc.pv);
    read_prices(dir / files.at("prices").get<std::string>(), sc.total_slots(), sc.prices);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(manifest.string() + ": " + e.what());
  }
  validate_scenario(sc);
  return sc;
}

void save_scenario(const Scenario& s, const std::string& dir) {
  validate_scenario(s);
  fs::create_directories(dir);
  const fs::path root = dir;
  const auto write_series = [&](const std::vector<std::vector<double>>& series, const char* file) {
    std::ofstream out(root / file);
    if (!out) throw ConfigError(std::string("cannot write ") + file);
    out << "slot,household_id,kw\n";
    for (int t = 0; t < s.total_slots(); ++t) {
      for (int h = 0; h < s.n_households; ++h) {
        out << t << ',' << h << ',' << fmt_double(series[static_cast<std::size_t>(h)][static_cast<std::size_t>(t)]) << '\n';
      }
    }
  };
  write_series(s.base_load, "base_load.csv");
  write_series(s.pv, "pv.csv");
  {
    std::ofstream out(root / "prices.csv");
    if (!out) throw ConfigError("cannot write prices.csv");
    out << "slot,p_os,p_in,p_ob\n";
    for (int t = 0; t < s.total_slots(); ++t) {
      const auto& p = s.prices[static_cast<std::size_t>(t)];
      out << t << ',' << fmt_double(p.sell_ext) << ',' << fmt_double(p.internal) << ',' << fmt_double(p.buy_ext) << '\n';
    }
  }
  nlohmann::json j{{"format", "microgrid.scenario"},
                   {"version", 1},
                   {"households", s.n_households},
                   {"days", s.days},
                   {"slots_per_day", s.slots_per_day},
                   {"files", {{"base_load", "base_load.csv"}, {"pv", "pv.csv"}, {"prices", "prices.csv"}}},
                   {"config_hash", s.config_hash}};
  std::ofstream out(root / "scenario.json");
  out << j.dump(2) << '\n';
}

Scenario slice_days(const Scenario& s, int first_day, int days) {
  if (first_day < 0 || days < 1 || first_day + days > s.days) throw ConfigError("slice_days: range out of bounds");
  Scenario out = s;
  out.days = days;
  const auto b = static_cast<std::size_t>(first_day * s.slots_per_day);
  const auto e = static_cast<std::size_t>((first_day + days) * s.slots_per_day);
  for (auto& v : out.base_load) v = std::vector<double>(v.begin() + b, v.begin() + e);
  for (auto& v : out.pv) v = std::vector<double>(v.begin() + b, v.begin() + e);
  out.prices.slots = std::vector<PriceSlot>(s.prices.slots.begin() + b, s.prices.slots.begin() + e);
  return out;
}

}  // namespace microgrid
