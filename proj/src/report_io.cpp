#include "lapprod/report_io.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "lapprod/basis_io.hpp"
#include "lapprod/error.hpp"

namespace lapprod {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t at = s.find(sep, start);
    out.push_back(s.substr(start, at - start));
    if (at == std::string::npos) break;
    start = at + 1;
  }
  return out;
}

// Data rows after checking the header line.
std::vector<std::vector<std::string>> rows_of(const std::string& text, const std::string& header) {
  std::vector<std::string> lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty() || lines.front() != header)
    throw CorruptFile("CSV header mismatch: expected '" + header + "'");
  const std::size_t width = split(header, ',').size();
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto cells = split(lines[i], ',');
    if (cells.size() != width)
      throw CorruptFile(fmt::format("CSV line {} has {} cells, expected {}", i + 1, cells.size(), width));
    out.push_back(std::move(cells));
  }
  return out;
}

int parse_int(const std::string& s) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::logic_error&) {
    throw CorruptFile("not an integer: '" + s + "'");
  }
  if (used != s.size()) throw CorruptFile("not an integer: '" + s + "'");
  return v;
}

std::string tuple_text(const std::vector<int>& t) {
  std::string out;
  for (std::size_t i = 0; i < t.size(); ++i) out += (i ? ";" : "") + std::to_string(t[i]);
  return out;
}

std::vector<int> parse_tuple(const std::string& s) {
  std::vector<int> out;
  for (const auto& part : split(s, ';')) out.push_back(parse_int(part));
  return out;
}

std::string clean(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = c == ',' ? ';' : ' ';
  return s;
}

constexpr const char* kRemainderHeader = "tuple,nu,n,kind,value,value_upper";
constexpr const char* kFitHeader = "n,epsilon,mode,rank,max_residual";
constexpr const char* kEriHeader = "i,j,k,l,exact,fitted";
constexpr const char* kShapeHeader = "theorem,kappa,tuple,nu,n,value,c_hat";
constexpr const char* kVerifyHeader = "check,passed,quantity,value,reference,tolerance,detail";

}  // namespace

std::string format_real(double v) { return fmt::format("{:.17g}", v); }

double parse_real(const std::string& text) {
  if (text.empty()) throw CorruptFile("empty numeric cell");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size()) throw CorruptFile("not a number: '" + text + "'");
  return v;
}

std::string remainder_csv(const std::vector<RemainderReport>& reports) {
  std::string out = std::string(kRemainderHeader) + "\n";
  for (const auto& r : reports)
    out += fmt::format("{},{},{},{},{},{}\n", tuple_text(r.tuple), r.nu, r.n, r.kind.name(),
                       format_real(r.value), r.value_upper ? format_real(*r.value_upper) : "");
  return out;
}

std::vector<RemainderReport> parse_remainder_csv(const std::string& text) {
  std::vector<RemainderReport> out;
  for (const auto& c : rows_of(text, kRemainderHeader)) {
    RemainderReport r;
    r.tuple = parse_tuple(c[0]);
    r.nu = parse_int(c[1]);
    r.n = parse_int(c[2]);
    r.kind = NormSpec::parse(c[3]);
    r.value = parse_real(c[4]);
    if (!c[5].empty()) r.value_upper = parse_real(c[5]);
    out.push_back(std::move(r));
  }
  return out;
}

std::string fit_csv(const std::vector<FitReport>& reports) {
  std::string out = std::string(kFitHeader) + "\n";
  for (const auto& r : reports)
    out += fmt::format("{},{},{},{},{}\n", r.n, format_real(r.epsilon), to_string(r.mode), r.rank,
                       format_real(r.max_residual));
  return out;
}

std::vector<FitRow> parse_fit_csv(const std::string& text) {
  std::vector<FitRow> out;
  for (const auto& c : rows_of(text, kFitHeader))
    out.push_back({parse_int(c[0]), parse_real(c[1]), parse_fit_mode(c[2]), parse_int(c[3]),
                   parse_real(c[4])});
  return out;
}

std::string eri_csv(const EriReport& report) {
  std::string out = std::string(kEriHeader) + "\n";
  const std::size_t P = report.pairs.size();
  for (std::size_t a = 0; a < P; ++a)
    for (std::size_t b = a; b < P; ++b) {
      const auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
      out += fmt::format("{},{},{},{},{},{}\n", report.pairs[a].first, report.pairs[a].second,
                         report.pairs[b].first, report.pairs[b].second,
                         report.exact ? format_real((*report.exact)(ia, ib)) : "",
                         report.fitted ? format_real((*report.fitted)(ia, ib)) : "");
    }
  return out;
}

std::vector<EriRow> parse_eri_csv(const std::string& text) {
  std::vector<EriRow> out;
  for (const auto& c : rows_of(text, kEriHeader)) {
    EriRow r{parse_int(c[0]), parse_int(c[1]), parse_int(c[2]), parse_int(c[3]), {}, {}};
    if (!c[4].empty()) r.exact = parse_real(c[4]);
    if (!c[5].empty()) r.fitted = parse_real(c[5]);
    out.push_back(r);
  }
  return out;
}

std::string shape_csv(const std::vector<ShapeCheck>& checks) {
  std::string out = std::string(kShapeHeader) + "\n";
  for (const auto& s : checks)
    for (const auto& r : s.rows)
      out += fmt::format("{},{},{},{},{},{},{}\n", to_string(s.theorem), s.kappa,
                         tuple_text(r.tuple), r.nu, r.n, format_real(r.value),
                         format_real(r.c_hat));
  return out;
}

std::vector<ShapeCsvRow> parse_shape_csv(const std::string& text) {
  std::vector<ShapeCsvRow> out;
  for (const auto& c : rows_of(text, kShapeHeader))
    out.push_back({parse_theorem(c[0]), parse_int(c[1]), parse_tuple(c[2]), parse_int(c[3]),
                   parse_int(c[4]), parse_real(c[5]), parse_real(c[6])});
  return out;
}

std::string verify_csv(const std::vector<VerifyCheck>& checks) {
  std::string out = std::string(kVerifyHeader) + "\n";
  for (const auto& c : checks)
    out += fmt::format("{},{},{},{},{},{},{}\n", clean(c.name), c.passed ? "pass" : "fail",
                       clean(c.quantity), format_real(c.value), format_real(c.reference),
                       format_real(c.tolerance), clean(c.detail));
  return out;
}

std::vector<VerifyCheck> parse_verify_csv(const std::string& text) {
  std::vector<VerifyCheck> out;
  for (const auto& c : rows_of(text, kVerifyHeader)) {
    if (c[1] != "pass" && c[1] != "fail") throw CorruptFile("verify CSV: bad status '" + c[1] + "'");
    out.push_back({c[0], c[1] == "pass", c[2], parse_real(c[3]), parse_real(c[4]),
                   parse_real(c[5]), c[6]});
  }
  return out;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_atomic(path, j.dump(2) + "\n");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_atomic(path, text);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace lapprod
