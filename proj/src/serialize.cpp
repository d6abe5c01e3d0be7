#include "wsym/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace wsym {

namespace {

void emit(const json& j, std::string& out, int indent, int level) {
  const auto newline = [&](int lvl) {
    if (indent < 0) return;
    out += '\n';
    out.append(static_cast<std::size_t>(indent * lvl), ' ');
  };
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ',';
        first = false;
        newline(level + 1);
        out += json(it.key()).dump();
        out += indent < 0 ? ":" : ": ";
        emit(it.value(), out, indent, level + 1);
      }
      newline(level);
      out += '}';
      return;
    }
    case json::value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += indent < 0 ? "," : ", ";
        emit(j[i], out, indent, level + 1);
      }
      out += ']';
      return;
    }
    case json::value_t::number_float: {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", j.get<double>());
      std::string s(buf);
      if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
      out += s;
      return;
    }
    default:
      out += j.dump();
  }
}

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw SchemaError(std::string("malformed document: missing field '") + key + "'");
  }
  return j.at(key);
}

Tensor named(const json& tensors, const std::string& name) {
  return tensor_from_json(field(tensors, name.c_str()));
}

}  // namespace

std::string dump_json(const json& j, int indent) {
  std::string out;
  emit(j, out, indent, 0);
  return out;
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed document: ") + e.what());
  }
}

json tensor_to_json(const Tensor& t) {
  json data = json::array();
  for (double v : t.data()) data.push_back(v);
  return json{{"shape", t.shape()}, {"data", std::move(data)}};
}

Tensor tensor_from_json(const json& j) {
  try {
    auto shape = field(j, "shape").get<Shape>();
    auto data = field(j, "data").get<std::vector<double>>();
    return Tensor(std::move(shape), std::move(data));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed tensor: ") + e.what());
  } catch (const ShapeError& e) {
    throw SchemaError(std::string("malformed tensor: ") + e.what());
  }
}

void require_version(const json& j) {
  const auto& v = field(j, "version");
  if (!v.is_string() || v.get<std::string>() != kSchemaVersion) {
    throw SchemaError("schema version mismatch: expected " + std::string(kSchemaVersion) +
                      ", got " + v.dump());
  }
}

json params_to_json(const Params& p) {
  json tensors = json::object();
  json dims;
  if (const auto* m = std::get_if<MlpParams>(&p)) {
    dims = m->dims();
    for (std::size_t i = 0; i < m->layers.size(); ++i) {
      tensors["W" + std::to_string(i + 1)] = tensor_to_json(m->layers[i].weight);
      tensors["b" + std::to_string(i + 1)] = tensor_to_json(m->layers[i].bias);
    }
  } else if (const auto* c = std::get_if<Conv1dParams>(&p)) {
    dims = c->dims();
    for (std::size_t i = 0; i < c->layers.size(); ++i) {
      tensors["W" + std::to_string(i + 1)] = tensor_to_json(c->layers[i].filter);
      tensors["b" + std::to_string(i + 1)] = tensor_to_json(c->layers[i].bias);
    }
  } else {
    const auto& a = std::get<MhaBlockParams>(p);
    dims = {a.model_dim(), a.head_dim(), a.heads(), a.ff_dim()};
    const char* roles[] = {"WQ", "WK", "WV", "WO"};
    const std::vector<Tensor>* lists[] = {&a.wq, &a.wk, &a.wv, &a.wo};
    for (int r = 0; r < 4; ++r)
      for (std::size_t i = 0; i < a.heads(); ++i)
        tensors[roles[r] + std::to_string(i + 1)] = tensor_to_json((*lists[r])[i]);
    if (a.ff) {
      tensors["WA"] = tensor_to_json(a.ff->w_a);
      tensors["bA"] = tensor_to_json(a.ff->b_a);
      tensors["WB"] = tensor_to_json(a.ff->w_b);
      tensors["bB"] = tensor_to_json(a.ff->b_b);
    }
  }
  return json{{"version", kSchemaVersion},
              {"arch", arch_name(arch_of(p))},
              {"dims", std::move(dims)},
              {"tensors", std::move(tensors)}};
}

Params params_from_json(const json& j) {
  require_version(j);
  try {
    const auto arch = parse_arch(field(j, "arch").get<std::string>());
    const auto dims = field(j, "dims").get<std::vector<std::size_t>>();
    const auto& tensors = field(j, "tensors");
    switch (arch) {
      case Arch::kMlp: {
        if (dims.size() < 2) throw SchemaError("mlp dims need at least two entries");
        MlpParams m;
        for (std::size_t i = 1; i < dims.size(); ++i) {
          m.layers.push_back({named(tensors, "W" + std::to_string(i)),
                              named(tensors, "b" + std::to_string(i))});
        }
        m.validate();
        if (m.dims() != dims) throw SchemaError("mlp dims do not match tensor shapes");
        return m;
      }
      case Arch::kConv1d: {
        if (dims.size() < 2) throw SchemaError("conv1d dims need at least two entries");
        Conv1dParams c;
        for (std::size_t i = 1; i < dims.size(); ++i) {
          c.layers.push_back({named(tensors, "W" + std::to_string(i)),
                              named(tensors, "b" + std::to_string(i))});
        }
        c.validate();
        if (c.dims() != dims) throw SchemaError("conv1d dims do not match tensor shapes");
        return c;
      }
      case Arch::kMha: {
        if (dims.size() != 4) throw SchemaError("mha dims must be [d, d_h, h, d_f]");
        MhaBlockParams a;
        const char* roles[] = {"WQ", "WK", "WV", "WO"};
        std::vector<Tensor>* lists[] = {&a.wq, &a.wk, &a.wv, &a.wo};
        for (int r = 0; r < 4; ++r)
          for (std::size_t i = 1; i <= dims[2]; ++i)
            lists[r]->push_back(named(tensors, roles[r] + std::to_string(i)));
        if (dims[3] > 0) {
          a.ff = FeedForward{named(tensors, "WA"), named(tensors, "bA"), named(tensors, "WB"),
                             named(tensors, "bB")};
        }
        a.validate();
        if (a.model_dim() != dims[0] || a.head_dim() != dims[1] || a.ff_dim() != dims[3]) {
          throw SchemaError("mha dims do not match tensor shapes");
        }
        return a;
      }
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed document: ") + e.what());
  } catch (const ShapeError& e) {
    throw SchemaError(std::string("malformed document: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("malformed document: ") + e.what());
  }
  throw SchemaError("unreachable architecture");
}

std::string serialize(const Params& p) { return dump_json(params_to_json(p)); }

Params deserialize(std::string_view text) { return params_from_json(parse_json(text)); }

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

}  // namespace wsym
