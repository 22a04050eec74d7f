#include "funcnet/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "funcnet/errors.hpp"

namespace funcnet {

namespace {

constexpr std::string_view kMagic = "FUNCNET-CHECKPOINT";

std::uint64_t align_up(std::uint64_t n) { return (n + kBlobAlignment - 1) / kBlobAlignment * kBlobAlignment; }

void store_le(const TensorF& t, char* out) {
  static_assert(sizeof(float) == 4);
  for (std::size_t i = 0; i < t.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(t[i]);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    std::memcpy(out + 4 * i, &bits, 4);
  }
}

TensorF load_le(const Shape& shape, const char* in) {
  TensorF t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, in + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    t[i] = std::bit_cast<float>(bits);
  }
  return t;
}

std::uint32_t crc32_of(const std::string& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + done), chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

Json shape_json(const Shape& s) {
  Json j = Json::array();
  for (std::size_t i = 0; i < s.rank(); ++i) j.push_back(s[i]);
  return j;
}

Shape shape_from_json(const Json& j) {
  std::vector<std::size_t> dims;
  for (const auto& d : j) dims.push_back(d.get<std::size_t>());
  return Shape(dims);
}

}  // namespace

const TensorF& Container::blob(const std::string& name) const {
  for (const auto& [n, t] : blobs) {
    if (n == name) return t;
  }
  throw DataError("checkpoint has no blob named '" + name + "'");
}

bool Container::has_blob(const std::string& name) const {
  for (const auto& b : blobs) {
    if (b.first == name) return true;
  }
  return false;
}

std::vector<BlobDescriptor> blob_layout(const Container& c) {
  std::vector<BlobDescriptor> out;
  std::uint64_t offset = 0;
  for (const auto& [name, t] : c.blobs) {
    BlobDescriptor d{name, t.shape(), offset, 4 * static_cast<std::uint64_t>(t.size())};
    offset = align_up(offset + d.length);
    out.push_back(std::move(d));
  }
  return out;
}

std::uint64_t parameter_blob_bytes(const Container& c) {
  std::uint64_t total = 0;
  for (const auto& d : blob_layout(c)) {
    if (!d.name.starts_with("adam.")) total += d.length;
  }
  return total;
}

void save_container(const std::filesystem::path& path, const Container& c) {
  const auto layout = blob_layout(c);
  const std::uint64_t section = layout.empty() ? 0 : align_up(layout.back().offset + layout.back().length);
  std::string blobs(section, '\0');
  for (std::size_t i = 0; i < layout.size(); ++i) store_le(c.blobs[i].second, blobs.data() + layout[i].offset);

  Json header = c.header;
  header["format_version"] = kFormatVersion;
  Json descriptors = Json::array();
  for (const auto& d : layout) {
    descriptors.push_back(
        Json{{"name", d.name}, {"shape", shape_json(d.shape)}, {"offset", d.offset}, {"length", d.length}});
  }
  header["blobs"] = descriptors;
  header["blob_section_bytes"] = section;
  header["crc32"] = crc32_of(blobs);

  const std::string text = header.dump(2) + "\n";
  std::ostringstream preamble;
  preamble << kMagic << '\n' << text.size() << '\n';
  std::string head = preamble.str() + text;
  head.resize(align_up(head.size()), ' ');

  const auto tmp = std::filesystem::path(path).concat(".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    out.write(blobs.data(), static_cast<std::streamsize>(blobs.size()));
    if (!out) throw DataError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Container load_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  auto fail = [&](const std::string& what) { throw DataError(path.string() + ": " + what); };
  std::string magic, length_line;
  std::getline(in, magic);
  if (magic != kMagic) fail("not a checkpoint file");
  std::getline(in, length_line);
  std::size_t header_len = 0;
  try {
    header_len = std::stoull(length_line);
  } catch (const std::exception&) {
    fail("malformed header length");
  }
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (static_cast<std::size_t>(in.gcount()) != header_len) fail("truncated header");
  const std::uint64_t head_size = align_up(magic.size() + 1 + length_line.size() + 1 + header_len);

  Container c;
  try {
    c.header = Json::parse(text);
    if (c.header.at("format_version").get<int>() != kFormatVersion) fail("unsupported format version");
    const auto section = c.header.at("blob_section_bytes").get<std::uint64_t>();
    std::string blobs(section, '\0');
    in.seekg(static_cast<std::streamoff>(head_size));
    in.read(blobs.data(), static_cast<std::streamsize>(section));
    if (static_cast<std::uint64_t>(in.gcount()) != section) fail("truncated blob section");
    if (in.peek() != std::char_traits<char>::eof()) fail("trailing bytes after blob section");
    if (crc32_of(blobs) != c.header.at("crc32").get<std::uint32_t>()) fail("checksum mismatch");

    std::uint64_t expected = 0;
    for (const auto& d : c.header.at("blobs")) {
      const Shape shape = shape_from_json(d.at("shape"));
      const auto offset = d.at("offset").get<std::uint64_t>();
      const auto length = d.at("length").get<std::uint64_t>();
      if (offset != expected || length != 4 * shape.numel()) fail("blob descriptors do not tile the blob section");
      c.blobs.emplace_back(d.at("name").get<std::string>(), load_le(shape, blobs.data() + offset));
      expected = align_up(offset + length);
    }
    if (expected != section) fail("blob descriptors do not cover the blob section");
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed header: ") + e.what());
  }
  for (const char* managed : {"format_version", "blobs", "blob_section_bytes", "crc32"}) c.header.erase(managed);
  return c;
}

Model build_model(ModelKind kind, const NetworkConfig& config, Rng& rng) {
  Model m;
  m.kind = kind;
  if (kind == ModelKind::FuncNet) {
    m.func = build<float>(config, rng);
  } else {
    m.plain = build_plain<float>(config, rng);
  }
  return m;
}

namespace {

template <typename ModelT, typename Ptr>
std::vector<std::pair<std::string, Ptr>> collect(ModelT& model) {
  std::vector<std::pair<std::string, Ptr>> out;
  const auto slots = param_slots(model.config());
  if (model.kind == ModelKind::FuncNet) {
    for (std::size_t i = 0; i < slots.size(); ++i) {
      out.emplace_back(slots[i].name + ".a", &model.func.params[i].theta_a);
      out.emplace_back(slots[i].name + ".b", &model.func.params[i].theta_b);
    }
    if (model.func.mlp) {
      out.emplace_back("mlp.w1", &model.func.mlp->w1);
      out.emplace_back("mlp.b1", &model.func.mlp->b1);
      out.emplace_back("mlp.w2", &model.func.mlp->w2);
      out.emplace_back("mlp.b2", &model.func.mlp->b2);
    }
  } else {
    for (std::size_t i = 0; i < slots.size(); ++i) out.emplace_back(slots[i].name, &model.plain.weights[i]);
  }
  return out;
}

}  // namespace

std::vector<std::pair<std::string, TensorF*>> named_tensors(Model& model) { return collect<Model, TensorF*>(model); }

std::vector<std::pair<std::string, const TensorF*>> named_tensors(const Model& model) {
  return collect<const Model, const TensorF*>(model);
}

PlainNetwork<float> weights_for(const Model& model, double x) {
  if (model.kind == ModelKind::FuncNet) return materialize(model.func, x);
  model.plain.config.domain.require(x);
  return model.plain;
}

AdamState AdamState::zeros_like(const Model& model) {
  AdamState s;
  for (const auto& [name, t] : named_tensors(model)) {
    s.m.emplace_back(t->shape());
    s.v.emplace_back(t->shape());
  }
  return s;
}

Container to_container(const Checkpoint& ckpt) {
  Container c;
  const Model& m = ckpt.model;
  c.header["kind"] = to_string(m.kind);
  c.header["task"] = to_string(ckpt.task);
  c.header["network"] = to_json(m.config());
  if (m.kind == ModelKind::FuncNet && m.func.mlp) {
    c.header["mlp_input"] = Json{{"offset", m.func.mlp->input_offset}, {"scale", m.func.mlp->input_scale}};
  }
  if (ckpt.parameter) c.header["parameter"] = *ckpt.parameter;
  if (!ckpt.run.is_null()) c.header["run"] = ckpt.run;
  c.header["progress"] = Json{{"iteration", ckpt.progress.iteration},
                              {"initial_loss", ckpt.progress.initial_loss},
                              {"over_count", ckpt.progress.over_count}};
  const auto named = named_tensors(m);
  for (const auto& [name, t] : named) c.blobs.emplace_back(name, *t);
  if (ckpt.adam) {
    c.header["adam_step"] = ckpt.adam->step;
    for (std::size_t i = 0; i < named.size(); ++i) c.blobs.emplace_back("adam.m." + named[i].first, ckpt.adam->m[i]);
    for (std::size_t i = 0; i < named.size(); ++i) c.blobs.emplace_back("adam.v." + named[i].first, ckpt.adam->v[i]);
  }
  return c;
}

Checkpoint from_container(const Container& c) {
  Checkpoint ckpt;
  try {
    const auto& h = c.header;
    const ModelKind kind = model_kind_from_string(h.at("kind").get<std::string>());
    ckpt.task = task_from_string(h.at("task").get<std::string>());
    const NetworkConfig config = network_config_from_json(h.at("network"));
    Model& m = ckpt.model;
    m.kind = kind;
    if (kind == ModelKind::FuncNet) {
      m.func.config = config;
      m.func.params.resize(param_slots(config).size());
      if (config.map == MapKind::LearnedMlp) {
        m.func.mlp = MlpH<float>::zeros(config.domain);
        m.func.mlp->input_offset = h.at("mlp_input").at("offset").get<double>();
        m.func.mlp->input_scale = h.at("mlp_input").at("scale").get<double>();
      }
    } else {
      m.plain.config = config;
      m.plain.weights.resize(param_slots(config).size());
    }
    auto named = named_tensors(m);
    const auto slots = param_slots(config);
    for (std::size_t i = 0; i < named.size(); ++i) {
      const TensorF& blob = c.blob(named[i].first);
      *named[i].second = blob;
    }
    // Slot shapes guard against a header that disagrees with its blobs.
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const Shape& got = kind == ModelKind::FuncNet ? m.func.params[i].theta_a.shape() : m.plain.weights[i].shape();
      if (got != slots[i].shape) throw DataError("blob " + slots[i].name + " has shape " + got.to_string());
      if (kind == ModelKind::FuncNet && m.func.params[i].theta_b.shape() != slots[i].shape) {
        throw DataError("blob " + slots[i].name + ".b has the wrong shape");
      }
    }
    if (h.contains("parameter")) ckpt.parameter = h.at("parameter").get<double>();
    if (h.contains("run")) ckpt.run = h.at("run");
    const auto& p = h.at("progress");
    ckpt.progress.iteration = p.at("iteration").get<std::size_t>();
    ckpt.progress.initial_loss = p.at("initial_loss").get<double>();
    ckpt.progress.over_count = p.at("over_count").get<std::size_t>();
    if (h.contains("adam_step")) {
      AdamState s;
      s.step = h.at("adam_step").get<std::uint64_t>();
      for (const auto& [name, t] : named) s.m.push_back(c.blob("adam.m." + name));
      for (const auto& [name, t] : named) s.v.push_back(c.blob("adam.v." + name));
      ckpt.adam = std::move(s);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint network description: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  save_container(path, to_container(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return from_container(load_container(path));
  } catch (const DataError& e) {
    const std::string what = e.what();
    if (what.find(path.string()) != std::string::npos) throw;
    throw DataError(path.string() + ": " + what);
  }
}

Checkpoint export_plain(const Checkpoint& ckpt, double x) {
  Checkpoint out;
  out.model.kind = ModelKind::Plain;
  out.model.plain = weights_for(ckpt.model, x);
  out.task = ckpt.task;
  out.parameter = x;
  out.progress = TrainProgress{ckpt.progress.iteration, 0.0, 0};
  return out;
}

}  // namespace funcnet
