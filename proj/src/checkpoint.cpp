#include "followup/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

namespace followup::model {

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json config_to_json(const EncoderConfig& c) {
  ordered_json j;
  j["n_layers"] = c.n_layers;
  j["n_heads"] = c.n_heads;
  j["d_model"] = c.d_model;
  j["d_ff"] = c.d_ff;
  j["max_len"] = c.max_len;
  j["vocab_size"] = c.vocab_size;
  j["n_segments"] = c.n_segments;
  j["n_labels"] = c.n_labels;
  j["dropout"] = c.dropout;
  return j;
}

EncoderConfig config_from_json(const ordered_json& j) {
  EncoderConfig c;
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.n_segments = j.at("n_segments").get<int>();
  c.n_labels = j.at("n_labels").get<int>();
  c.dropout = j.at("dropout").get<double>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, Checkpoint& ckpt) {
  auto views = ckpt.params.param_views();
  ordered_json dir = ordered_json::object();
  std::size_t offset = 0;
  for (const auto& v : views) {
    ordered_json t;
    t["dtype"] = "f32";
    t["shape"] = {v.rows, v.cols};
    t["offset"] = offset;
    dir[v.name] = std::move(t);
    offset += static_cast<std::size_t>(v.size()) * sizeof(float);
  }
  ordered_json header;
  header["format"] = "followup-checkpoint-v1";
  header["phase"] = ckpt.phase;
  header["vocab_fingerprint"] = ckpt.vocab_fingerprint;
  header["config"] = config_to_json(ckpt.params.cfg);
  header["tensors"] = std::move(dir);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::missing_file, "cannot write: " + path);
  os << header.dump() << "\n";
  for (const auto& v : views) {
    os.write(reinterpret_cast<const char*>(v.data),
             static_cast<std::streamsize>(v.size() * sizeof(float)));
  }
  if (!os) throw Error(ErrorCode::other, "short write: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::missing_file, "cannot open: " + path);
  std::string header_line;
  std::getline(is, header_line);
  ordered_json header;
  try {
    header = ordered_json::parse(header_line);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::malformed_input,
                std::string("bad checkpoint header: ") + e.what());
  }
  if (header.value("format", "") != "followup-checkpoint-v1") {
    throw Error(ErrorCode::malformed_input,
                "unrecognized checkpoint format: " + path);
  }

  Checkpoint ckpt;
  ckpt.phase = header.at("phase").get<std::string>();
  ckpt.vocab_fingerprint = header.at("vocab_fingerprint").get<std::string>();
  ckpt.params =
      EncoderParams<float>::zeros(config_from_json(header.at("config")));

  const auto& dir = header.at("tensors");
  const std::streampos blob_start = is.tellg();
  for (auto& v : ckpt.params.param_views()) {
    if (!dir.contains(v.name)) {
      throw Error(ErrorCode::malformed_input,
                  "checkpoint missing tensor '" + v.name + "': " + path);
    }
    const auto& t = dir.at(v.name);
    const auto shape = t.at("shape");
    if (shape.at(0).get<Eigen::Index>() != v.rows ||
        shape.at(1).get<Eigen::Index>() != v.cols) {
      throw Error(ErrorCode::malformed_input,
                  "checkpoint tensor '" + v.name +
                      "' shape does not match the config: " + path);
    }
    is.seekg(blob_start +
             static_cast<std::streamoff>(t.at("offset").get<std::size_t>()));
    is.read(reinterpret_cast<char*>(v.data),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
    if (!is) {
      throw Error(ErrorCode::malformed_input,
                  "checkpoint truncated at tensor '" + v.name + "': " + path);
    }
  }
  return ckpt;
}

}  // namespace followup::model
