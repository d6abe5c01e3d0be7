#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "wsym/netmodels.hpp"

namespace wsym {

using json = nlohmann::json;

inline constexpr const char* kSchemaVersion = "weightsym/1";

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// JSON text with every floating value written as %.17g, so doubles survive a
// round trip bit for bit. Object keys come out sorted.
std::string dump_json(const json& j, int indent = -1);
// Parses text; malformed input raises SchemaError.
json parse_json(std::string_view text);

json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const json& j);

json params_to_json(const Params& p);
Params params_from_json(const json& j);

std::string serialize(const Params& p);
Params deserialize(std::string_view text);

// Checks the envelope version field; throws SchemaError otherwise.
void require_version(const json& j);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace wsym
