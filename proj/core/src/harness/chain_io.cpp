#include "binfer/harness/chain_io.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace binfer::harness {

namespace {

constexpr const char* kChainMagic = "BNNCHAIN1\n";
constexpr const char* kParamMagic = "BNNPARAM1\n";

void write_doubles(std::ofstream& out, const double* data, std::size_t n) {
  // Stored little-endian; this writes raw IEEE doubles on a little-endian host.
  static_assert(sizeof(double) == 8);
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 8));
}

std::string read_magic_and_header(std::ifstream& in, const char* magic,
                                  const std::string& path) {
  std::string head(std::strlen(magic), '\0');
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  if (!in || head != magic) {
    throw std::runtime_error("bad magic in " + path);
  }
  std::string header;
  std::getline(in, header);
  if (!in) throw std::runtime_error("missing header line in " + path);
  return header;
}

}  // namespace

void write_chain(const std::string& path, const sgmcmc::Chain& chain) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open chain file for writing: " + path);
  nlohmann::ordered_json header{{"dim", chain.dim},
                                {"count", chain.samples.size()},
                                {"dtype", "f64le"},
                                {"burn_in", chain.burn_in},
                                {"thin", chain.thin}};
  out << kChainMagic << header.dump() << '\n';
  for (const auto& s : chain.samples) write_doubles(out, s.data(), s.size());
  if (!out) throw std::runtime_error("short write to chain file: " + path);
}

sgmcmc::Chain read_chain(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open chain file: " + path);
  nlohmann::json header = nlohmann::json::parse(read_magic_and_header(in, kChainMagic, path));
  sgmcmc::Chain chain;
  chain.dim = header.at("dim").get<std::size_t>();
  chain.burn_in = header.at("burn_in").get<std::size_t>();
  chain.thin = header.at("thin").get<std::size_t>();
  if (header.at("dtype").get<std::string>() != "f64le") {
    throw std::runtime_error("unsupported chain dtype in " + path);
  }
  std::size_t count = header.at("count").get<std::size_t>();
  chain.samples.assign(count, std::vector<double>(chain.dim));
  for (auto& s : chain.samples) {
    in.read(reinterpret_cast<char*>(s.data()), static_cast<std::streamsize>(chain.dim * 8));
  }
  if (!in) throw std::runtime_error("truncated chain file: " + path);
  return chain;
}

void write_params(const std::string& path, const std::vector<double>& values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open params file for writing: " + path);
  nlohmann::ordered_json header{{"dim", values.size()}, {"dtype", "f64le"}};
  out << kParamMagic << header.dump() << '\n';
  write_doubles(out, values.data(), values.size());
  if (!out) throw std::runtime_error("short write to params file: " + path);
}

std::vector<double> read_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open params file: " + path);
  nlohmann::json header = nlohmann::json::parse(read_magic_and_header(in, kParamMagic, path));
  if (header.at("dtype").get<std::string>() != "f64le") {
    throw std::runtime_error("unsupported params dtype in " + path);
  }
  std::vector<double> values(header.at("dim").get<std::size_t>());
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * 8));
  if (!in) throw std::runtime_error("truncated params file: " + path);
  return values;
}

}  // namespace binfer::harness
