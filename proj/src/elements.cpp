#include "adsorbtext/elements.hpp"

#include <cctype>
#include <charconv>
#include <sstream>
#include <unordered_map>

#include "adsorbtext/io.hpp"

namespace adsorbtext {
namespace detail {
extern const std::string_view kElementTableCsv;
}

namespace {

struct Table {
  std::vector<ElementProperties> rows;
  std::unordered_map<std::string, std::size_t> index;
  std::string version;
};

template <typename T>
T parse_number(const std::string& field, std::size_t line) {
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw ParseError("elements.csv", line, "bad number '" + field + "'");
  return value;
}

Table parse_table() {
  Table table;
  std::istringstream in{std::string(detail::kElementTableCsv)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (table.version.empty()) table.version = line.substr(line.find_first_not_of("# "));
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 8) throw ParseError("elements.csv", lineno, "expected 8 columns");
    ElementProperties e;
    e.symbol = f[0];
    e.atomic_number = parse_number<int>(f[1], lineno);
    e.atomic_mass = parse_number<double>(f[2], lineno);
    e.period = parse_number<int>(f[3], lineno);
    e.dipole_polarizability = parse_number<double>(f[4], lineno);
    e.electronegativity = parse_number<double>(f[5], lineno);
    e.electron_affinity = parse_number<double>(f[6], lineno);
    e.covalent_radius = parse_number<double>(f[7], lineno);
    if (e.atomic_number < 1 || e.covalent_radius <= 0.0)
      throw ParseError("elements.csv", lineno, "invalid row for " + e.symbol);
    table.index.emplace(e.symbol, table.rows.size());
    table.rows.push_back(std::move(e));
  }
  return table;
}

const Table& table() {
  static const Table t = parse_table();
  return t;
}

}  // namespace

const ElementProperties& element_properties(std::string_view symbol) {
  const auto& t = table();
  auto it = t.index.find(std::string(symbol));
  if (it == t.index.end()) throw ValidationError("unknown element symbol '" + std::string(symbol) + "'");
  return t.rows[it->second];
}

bool is_known_element(std::string_view symbol) {
  return table().index.count(std::string(symbol)) != 0;
}

const std::vector<ElementProperties>& element_table() { return table().rows; }

std::string_view element_table_version() { return table().version; }

std::map<std::string, int> element_counts(std::string_view formula) {
  std::map<std::string, int> counts;
  std::size_t i = 0;
  while (i < formula.size()) {
    char c = formula[i];
    if (!std::isupper(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    std::string symbol(1, c);
    ++i;
    if (i < formula.size() && std::islower(static_cast<unsigned char>(formula[i]))) symbol += formula[i++];
    int n = 0;
    while (i < formula.size() && std::isdigit(static_cast<unsigned char>(formula[i])))
      n = n * 10 + (formula[i++] - '0');
    counts[symbol] += (n == 0 ? 1 : n);
  }
  return counts;
}

}  // namespace adsorbtext
