#pragma once

#include <string>

#include "binfer/nets.hpp"
#include "binfer/sgmcmc.hpp"

namespace binfer::harness {

// Chain file: magic "BNNCHAIN1\n", one JSON header line
// {"dim":..,"count":..,"dtype":"f64le","burn_in":..,"thin":..}, then
// count x dim little-endian 64-bit floats, row-major.
void write_chain(const std::string& path, const sgmcmc::Chain& chain);
sgmcmc::Chain read_chain(const std::string& path);

// Flat parameter payload: magic "BNNPARAM1\n", header {"dim":..,"dtype":"f64le"},
// then the values. The layout is carried by the accompanying model JSON.
void write_params(const std::string& path, const std::vector<double>& values);
std::vector<double> read_params(const std::string& path);

}  // namespace binfer::harness
