#pragma once

#include <string>

#include "relmem/model.hpp"

namespace relmem::checkpoint {

// Versioned parameter container: magic "RELMEMLM1", a config echo block,
// then (name, shape, little-endian float64 payload) records. Round-trips
// bit-exactly.
void save(const std::string& path, const model::Parameters& params);
model::Parameters load(const std::string& path);

}  // namespace relmem::checkpoint
