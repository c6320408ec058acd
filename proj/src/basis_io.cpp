#include "lapprod/basis_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "lapprod/config.hpp"
#include "lapprod/error.hpp"
#include "lapprod/hashing.hpp"

namespace lapprod {

static_assert(std::endian::native == std::endian::little,
              "basis container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'L', 'P', 'B', 'A', 'S', 'I', 'S', '1'};
constexpr std::size_t kDigestChars = 64;

template <class T>
void put(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw CorruptFile("basis file truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

void put_doubles(std::string& out, const double* data, std::size_t count) {
  out.append(reinterpret_cast<const char*>(data), count * sizeof(double));
}

}  // namespace

void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string save_basis(const std::filesystem::path& path, const EigenBasis& basis,
                       const nlohmann::json& extra) {
  const auto n = basis.modes.rows();
  const auto K = basis.modes.cols();
  nlohmann::json header = {
      {"format", "lapprod-basis"},
      {"version", kBasisFormatVersion},
      {"tag", to_string(basis.source)},
      {"domain", domain_to_json(basis.grid->spec)},
      {"grid_hash", basis.grid->hash()},
      {"n_unknowns", n},
      {"K", K},
      {"origin", basis.origin},
      {"full_spectrum", basis.full_spectrum},
      {"labels", basis.labels},
      {"tie_break",
       {{"cluster_rel_gap", 1e-8},
        {"order", basis.source == BasisSource::analytic ? "lattice label, cos before sin"
                                                        : "descending |value| at nodes 0,1,..."},
        {"sign", "largest-magnitude nodal value positive"}}},
  };
  for (const auto& [k, v] : extra.items()) header[k] = v;
  const std::string text = header.dump();

  std::string out;
  out.reserve(24 + text.size() + sizeof(double) * static_cast<std::size_t>(K * (n + 2)) + 64);
  out.append(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kBasisFormatVersion);
  put<std::uint32_t>(out, 0);
  put<std::uint64_t>(out, text.size());
  out += text;
  const Eigen::VectorXd residuals =
      basis.residuals.size() == K ? basis.residuals : Eigen::VectorXd::Zero(K);
  const Eigen::VectorXd freqs = basis.freqs.size() == K ? basis.freqs : Eigen::VectorXd::Zero(K);
  put_doubles(out, freqs.data(), static_cast<std::size_t>(K));
  put_doubles(out, residuals.data(), static_cast<std::size_t>(K));
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = basis.modes;
  put_doubles(out, rows.data(), static_cast<std::size_t>(rows.size()));
  const std::string digest =
      sha256_hex(std::as_bytes(std::span<const char>(out.data(), out.size())));
  out += digest;
  write_atomic(path, out);
  return sha256_hex(std::as_bytes(std::span<const char>(out.data(), out.size())));
}

BasisFile read_basis_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open basis file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  if (bytes.size() < sizeof(kMagic) + 16 + kDigestChars ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw CorruptFile(path.string() + ": not a basis container");
  const std::size_t body = bytes.size() - kDigestChars;
  const std::string stored = bytes.substr(body);
  const std::string actual = sha256_hex(std::as_bytes(std::span<const char>(bytes.data(), body)));
  if (stored != actual)
    throw CorruptFile(fmt::format("{}: hash mismatch (stored {}, computed {})", path.string(),
                                  stored, actual));

  std::size_t pos = sizeof(kMagic);
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kBasisFormatVersion)
    throw CorruptFile(fmt::format("{}: unsupported container version {}", path.string(), version));
  take<std::uint32_t>(bytes, pos);
  const auto hlen = take<std::uint64_t>(bytes, pos);
  if (pos + hlen > body) throw CorruptFile(path.string() + ": header overruns file");
  BasisFile f;
  f.header = nlohmann::json::parse(bytes.substr(pos, hlen), nullptr, false);
  if (f.header.is_discarded()) throw CorruptFile(path.string() + ": header is not JSON");
  pos += hlen;
  const auto n = f.header.value("n_unknowns", Eigen::Index{0});
  const auto K = f.header.value("K", Eigen::Index{0});
  const std::size_t need = sizeof(double) * static_cast<std::size_t>(K * (n + 2));
  if (n <= 0 || K <= 0 || pos + need != body)
    throw CorruptFile(path.string() + ": payload size disagrees with header");
  f.freqs.resize(K);
  f.residuals.resize(K);
  std::memcpy(f.freqs.data(), bytes.data() + pos, sizeof(double) * K);
  pos += sizeof(double) * K;
  std::memcpy(f.residuals.data(), bytes.data() + pos, sizeof(double) * K);
  pos += sizeof(double) * K;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows(n, K);
  std::memcpy(rows.data(), bytes.data() + pos, sizeof(double) * static_cast<std::size_t>(n * K));
  f.modes = rows;
  f.content_hash = sha256_hex(std::as_bytes(std::span<const char>(bytes.data(), bytes.size())));
  return f;
}

EigenBasis load_basis(const std::filesystem::path& path, std::shared_ptr<const Grid> grid,
                      std::shared_ptr<const SparseOperator> op) {
  if (!grid) throw InvalidArgument("load_basis: null grid");
  BasisFile f = read_basis_file(path);
  const std::string expected = grid->hash();
  if (f.header.value("grid_hash", std::string()) != expected)
    throw CorruptFile(fmt::format("{}: grid hash {} does not match the configured domain ({})",
                                  path.string(), f.header.value("grid_hash", std::string()),
                                  expected));
  if (f.modes.rows() != static_cast<Eigen::Index>(grid->size()))
    throw CorruptFile(path.string() + ": unknown count does not match grid");
  EigenBasis b;
  b.grid = std::move(grid);
  b.op = std::move(op);
  const std::string tag = f.header.value("tag", std::string("numeric"));
  b.source = tag == "analytic" ? BasisSource::analytic
             : tag == "fitted" ? BasisSource::fitted
                               : BasisSource::numeric;
  b.origin = f.header.value("origin", 1);
  b.full_spectrum = f.header.value("full_spectrum", false);
  b.labels = f.header.value("labels", std::vector<std::string>{});
  b.freqs = std::move(f.freqs);
  b.residuals = std::move(f.residuals);
  b.modes = std::move(f.modes);
  return b;
}

}  // namespace lapprod
