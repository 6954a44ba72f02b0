// Table file layout: a 512-byte ASCII header of "key value" lines, padded with
// spaces and terminated by '\n', followed by the cell values as little-endian
// IEEE-754 float32 in g-major order. The header carries the CRC-32 of the
// value bytes.
//
//   LWQTABLE
//   version 1
//   axes 3
//   g 101 0 0.01
//   mu 121 -5 0.05
//   sigma 41 0 0.05
//   trials 100000
//   seed 7
//   crc32 1a2b3c4d

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include <fmt/format.h>
#include <zlib.h>

#include "lanewise/errors.hpp"
#include "lanewise/qtable.hpp"

namespace lanewise {

namespace {

constexpr std::size_t kHeaderBytes = 512;
constexpr const char* kMagic = "LWQTABLE";

std::uint32_t crc_of(const std::string& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

std::string encode_values(const Eigen::ArrayXf& values) {
  std::string out(static_cast<std::size_t>(values.size()) * 4, '\0');
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) out[static_cast<std::size_t>(i) * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
  }
  return out;
}

Eigen::ArrayXf decode_values(const std::string& bytes) {
  Eigen::ArrayXf values(static_cast<Eigen::Index>(bytes.size() / 4));
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[static_cast<std::size_t>(i) * 4 + b])) << (8 * b);
    values[i] = std::bit_cast<float>(bits);
  }
  return values;
}

std::string axis_line(const char* name, const Axis& a) {
  return fmt::format("{} {} {} {}\n", name, a.count, a.start, a.step);
}

// Reads "key value..." and insists on the key.
std::istringstream expect_line(std::istringstream& header, const std::string& key) {
  std::string line;
  if (!std::getline(header, line)) throw IntegrityError(fmt::format("table header missing '{}'", key));
  std::istringstream fields(line);
  std::string found;
  fields >> found;
  if (found != key) throw IntegrityError(fmt::format("table header: expected '{}', found '{}'", key, found));
  return fields;
}

Axis read_axis(std::istringstream& header, const std::string& name) {
  auto fields = expect_line(header, name);
  Axis a;
  if (!(fields >> a.count >> a.start >> a.step))
    throw IntegrityError(fmt::format("table header: malformed axis '{}'", name));
  if (a.count < 2 || !(a.step > 0.0)) throw ShapeError(fmt::format("table axis '{}' is degenerate", name));
  return a;
}

}  // namespace

void save_table(const QTable& table, const std::filesystem::path& path) {
  table.check_shape();
  const std::string payload = encode_values(table.values());
  const GridAxes& axes = table.axes();

  std::string header = fmt::format("{}\nversion {}\naxes 3\n", kMagic, table.version());
  header += axis_line("g", axes.g);
  header += axis_line("mu", axes.mu);
  header += axis_line("sigma", axes.sigma);
  header += fmt::format("trials {}\nseed {}\ncrc32 {:08x}\n", table.trials_per_cell(), table.seed(),
                        crc_of(payload));
  if (header.size() >= kHeaderBytes) throw TableError("table header overflow");
  header.resize(kHeaderBytes - 1, ' ');
  header.push_back('\n');

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::ios_base::failure("cannot open " + path.string() + " for writing");
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  out.flush();
  if (!out) throw std::ios_base::failure("write failed for " + path.string());
}

QTable load_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open table " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() < kHeaderBytes) throw TruncatedError("table file shorter than its header");

  std::istringstream header(bytes.substr(0, kHeaderBytes));
  std::string magic;
  std::getline(header, magic);
  if (magic != kMagic) throw IntegrityError("not a q-table file (bad format tag)");

  int version = 0;
  if (!(expect_line(header, "version") >> version)) throw IntegrityError("table header: malformed version");
  if (version != QTable::kFormatVersion)
    throw VersionError(fmt::format("table format version {} not supported (expected {})", version,
                                   QTable::kFormatVersion));

  std::size_t axis_count = 0;
  if (!(expect_line(header, "axes") >> axis_count)) throw IntegrityError("table header: malformed axes");
  if (axis_count != 3) throw ShapeError(fmt::format("table declares {} axes, expected 3", axis_count));

  GridAxes axes;
  axes.g = read_axis(header, "g");
  axes.mu = read_axis(header, "mu");
  axes.sigma = read_axis(header, "sigma");

  std::uint64_t trials = 0;
  std::uint64_t seed = 0;
  std::string crc_text;
  if (!(expect_line(header, "trials") >> trials)) throw IntegrityError("table header: malformed trials");
  if (!(expect_line(header, "seed") >> seed)) throw IntegrityError("table header: malformed seed");
  if (!(expect_line(header, "crc32") >> crc_text)) throw IntegrityError("table header: malformed checksum");
  std::uint32_t expected_crc = 0;
  try {
    std::size_t used = 0;
    expected_crc = static_cast<std::uint32_t>(std::stoul(crc_text, &used, 16));
    if (used != crc_text.size()) throw std::invalid_argument(crc_text);
  } catch (const std::logic_error&) {
    throw IntegrityError("table header: malformed checksum");
  }

  const std::size_t expected_bytes = axes.cell_count() * 4;
  const std::size_t payload_bytes = bytes.size() - kHeaderBytes;
  if (payload_bytes < expected_bytes)
    throw TruncatedError(fmt::format("table payload has {} bytes, expected {}", payload_bytes, expected_bytes));
  if (payload_bytes > expected_bytes)
    throw ShapeError(fmt::format("table payload has {} bytes but axes describe {}", payload_bytes, expected_bytes));

  const std::string payload = bytes.substr(kHeaderBytes);
  if (crc_of(payload) != expected_crc) throw ChecksumError("table checksum mismatch");

  return QTable(axes, decode_values(payload), trials, seed, version);
}

}  // namespace lanewise
