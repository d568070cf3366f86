#pragma once

// Flat CSV formats shared by the command-line tools:
//   communities.csv  id,region,pair_id,arm,<covariates...>,y,denominator
//   individuals.csv  id,community_id,<W columns...>,c,delta,i
//   pairs.csv        pair_id,region,id_1,id_2,distance
// Doubles are written in shortest round-trip form so files re-read to the
// identical values.

#include <filesystem>
#include <string>
#include <vector>

#include "crt/community.hpp"
#include "crt/matchpairs.hpp"
#include "crt/stage1.hpp"

namespace crt {

std::string format_double(double x);
double parse_double(const std::string& s);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index or -1.
  [[nodiscard]] int find(const std::string& name) const;
  /// Column index; throws std::invalid_argument when absent.
  [[nodiscard]] std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(const std::string& text);

void write_communities_csv(const std::filesystem::path& path, const Communities& communities);
/// Columns other than id, region, pair_id, arm, y, denominator are read as
/// covariates. pair_id, arm, y and denominator are optional.
Communities read_communities_csv(const std::filesystem::path& path);

void write_individuals_csv(const std::filesystem::path& path, const Cohort& cohort);
Cohort read_individuals_csv(const std::filesystem::path& path);

void write_pairing_csv(const std::filesystem::path& path, const MatchedPairing& pairing);
MatchedPairing read_pairing_csv(const std::filesystem::path& path);

}  // namespace crt
