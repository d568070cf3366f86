#include "crt/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace crt {

namespace fs = std::filesystem;

std::string format_double(double x) {
  if (std::isnan(x)) return "";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return {buf, end};
}

double parse_double(const std::string& s) {
  double x = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || end != s.data() + s.size()) throw std::invalid_argument("not a number: '" + s + "'");
  return x;
}

namespace {

long long parse_int(const std::string& s) {
  long long x = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || end != s.data() + s.size()) throw std::invalid_argument("not an integer: '" + s + "'");
  return x;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void check_field(const std::string& s) {
  if (s.find_first_of(",\n\r") != std::string::npos) throw std::invalid_argument("field contains a separator: '" + s + "'");
}

const std::set<std::string> kCommunityFixed{"id", "region", "pair_id", "arm", "y", "denominator"};

}  // namespace

int CsvTable::find(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

std::size_t CsvTable::column(const std::string& name) const {
  const int i = find(name);
  if (i < 0) throw std::invalid_argument("csv: missing column '" + name + "'");
  return static_cast<std::size_t>(i);
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line);
    if (first) {
      t.header = std::move(fields);
      first = false;
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw std::invalid_argument("csv line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(t.header.size()) + " fields, got " + std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (first) throw std::invalid_argument("csv: empty input");
  return t;
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

void write_communities_csv(const fs::path& path, const Communities& communities) {
  std::set<std::string> names;
  for (const auto& c : communities) {
    for (const auto& [k, v] : c.covariates) names.insert(k);
  }
  for (const auto& n : names) {
    check_field(n);
    if (kCommunityFixed.count(n)) throw std::invalid_argument("covariate name collides with a fixed column: " + n);
  }
  auto out = open_out(path);
  out << "id,region,pair_id,arm";
  for (const auto& n : names) out << ',' << n;
  out << ",y,denominator\n";
  for (const auto& c : communities) {
    check_field(c.region);
    out << c.id << ',' << c.region << ',' << c.pair_id << ',' << c.arm;
    for (const auto& n : names) out << ',' << format_double(c.covariate(n));
    out << ',' << format_double(c.y) << ',' << format_double(c.denominator) << '\n';
  }
}

Communities read_communities_csv(const fs::path& path) {
  const auto t = read_csv(path);
  const auto id = t.column("id");
  const auto region = t.column("region");
  const int pair = t.find("pair_id"), arm = t.find("arm"), y = t.find("y"), denom = t.find("denominator");
  Communities out;
  for (const auto& row : t.rows) {
    CommunityRecord c;
    c.id = static_cast<int>(parse_int(row[id]));
    c.region = row[region];
    if (pair >= 0 && !row[pair].empty()) c.pair_id = static_cast<int>(parse_int(row[pair]));
    if (arm >= 0 && !row[arm].empty()) c.arm = static_cast<int>(parse_int(row[arm]));
    if (y >= 0 && !row[y].empty()) c.y = parse_double(row[y]);
    if (denom >= 0 && !row[denom].empty()) c.denominator = parse_double(row[denom]);
    for (std::size_t k = 0; k < t.header.size(); ++k) {
      if (!kCommunityFixed.count(t.header[k])) c.covariates[t.header[k]] = parse_double(row[k]);
    }
    out.push_back(std::move(c));
  }
  return out;
}

void write_individuals_csv(const fs::path& path, const Cohort& cohort) {
  auto out = open_out(path);
  out << "id,community_id";
  for (const auto& n : cohort.covariate_names) {
    check_field(n);
    out << ',' << n;
  }
  out << ",c,delta,i\n";
  for (const auto& r : cohort.records) {
    out << r.id << ',' << r.community_id;
    for (double w : r.w) out << ',' << format_double(w);
    out << ',' << (r.censored ? 1 : 0) << ',' << (r.measured ? 1 : 0) << ',';
    if (r.infected) out << (*r.infected ? 1 : 0);
    out << '\n';
  }
}

Cohort read_individuals_csv(const fs::path& path) {
  const auto t = read_csv(path);
  const auto id = t.column("id"), cid = t.column("community_id");
  const auto c = t.column("c"), delta = t.column("delta"), i = t.column("i");
  Cohort cohort;
  std::vector<std::size_t> wcols;
  for (std::size_t k = 0; k < t.header.size(); ++k) {
    if (k != id && k != cid && k != c && k != delta && k != i) {
      cohort.covariate_names.push_back(t.header[k]);
      wcols.push_back(k);
    }
  }
  cohort.records.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    IndividualRecord r;
    r.id = parse_int(row[id]);
    r.community_id = static_cast<int>(parse_int(row[cid]));
    for (auto k : wcols) r.w.push_back(parse_double(row[k]));
    r.censored = parse_int(row[c]) != 0;
    r.measured = parse_int(row[delta]) != 0;
    if (!row[i].empty()) r.infected = parse_int(row[i]) != 0;
    validate_record(r);
    cohort.records.push_back(std::move(r));
  }
  return cohort;
}

void write_pairing_csv(const fs::path& path, const MatchedPairing& p) {
  auto out = open_out(path);
  out << "pair_id,region,id_1,id_2,distance\n";
  for (std::size_t k = 0; k < p.pairs.size(); ++k) {
    check_field(p.regions[k]);
    out << k + 1 << ',' << p.regions[k] << ',' << p.pairs[k].first << ',' << p.pairs[k].second << ','
        << format_double(p.pair_distance[k]) << '\n';
  }
}

MatchedPairing read_pairing_csv(const fs::path& path) {
  const auto t = read_csv(path);
  const auto region = t.column("region"), a = t.column("id_1"), b = t.column("id_2"), d = t.column("distance");
  MatchedPairing p;
  for (const auto& row : t.rows) {
    p.pairs.emplace_back(static_cast<int>(parse_int(row[a])), static_cast<int>(parse_int(row[b])));
    p.regions.push_back(row[region]);
    p.pair_distance.push_back(parse_double(row[d]));
    p.total_distance += p.pair_distance.back();
  }
  return p;
}

}  // namespace crt
