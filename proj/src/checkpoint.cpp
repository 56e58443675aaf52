#include "ioncast/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace ioncast {

namespace {

constexpr char kMagic[8] = {'I', 'O', 'N', 'C', 'K', 'P', 'T', '1'};

nlohmann::json tensor_list(const ParamStore<double>& ps) {
  auto out = nlohmann::json::array();
  for (std::size_t i = 0; i < ps.size(); ++i) out.push_back({{"name", ps[i].name}, {"shape", ps[i].value.shape()}});
  return out;
}

void append_values(std::string& out, const ParamStore<double>& ps) {
  for (std::size_t i = 0; i < ps.size(); ++i)
    out.append(reinterpret_cast<const char*>(ps[i].value.ptr()), ps[i].value.size() * sizeof(double));
}

}  // namespace

template <typename T>
Checkpoint make_checkpoint(const Model<T>& model, const Normalizer& norm, const AdamState<T>* adam,
                           nlohmann::json meta) {
  Checkpoint c;
  c.arch = model.arch();
  c.model_config = model.config_json();
  c.spec = model.spec();
  c.normalizer = norm;
  c.meta = std::move(meta);
  c.params = model.params().template cast<double>();
  if (adam) {
    c.adam = adam->hyper;
    c.adam_t = adam->t;
    for (std::size_t i = 0; i < model.params().size(); ++i) {
      const auto& name = model.params()[i].name;
      auto m = adam->m.find(name);
      auto v = adam->v.find(name);
      if (m == adam->m.end() || v == adam->v.end()) continue;
      c.optimizer.add("m/" + name, m->second.template cast<double>());
      c.optimizer.add("v/" + name, v->second.template cast<double>());
    }
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  nlohmann::json header = {{"arch", c.arch},
                           {"model", c.model_config},
                           {"channels", c.spec.to_json()},
                           {"normalizer", c.normalizer.to_json()},
                           {"meta", c.meta},
                           {"adam", {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2},
                                     {"eps", c.adam.eps}, {"t", c.adam_t}}},
                           {"params", tensor_list(c.params)},
                           {"optimizer", tensor_list(c.optimizer)}};
  const std::string text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t len = text.size();
  out.append(reinterpret_cast<const char*>(&version), sizeof version);
  out.append(reinterpret_cast<const char*>(&len), sizeof len);
  out += text;
  append_values(out, c.params);
  append_values(out, c.optimizer);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write checkpoint " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw FormatError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string b = ss.str();
  const std::size_t fixed = sizeof kMagic + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (b.size() < fixed || std::memcmp(b.data(), kMagic, sizeof kMagic) != 0)
    throw FormatError(path + ": not a checkpoint (bad magic or too short)");
  std::uint32_t version;
  std::uint64_t len;
  std::memcpy(&version, b.data() + sizeof kMagic, sizeof version);
  std::memcpy(&len, b.data() + sizeof kMagic + sizeof version, sizeof len);
  if (version != kCheckpointVersion)
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  if (len > b.size() - fixed) throw FormatError(path + ": truncated checkpoint header");

  Checkpoint c;
  std::size_t pos = fixed + len;
  try {
    const auto h = nlohmann::json::parse(b.substr(fixed, len));
    c.arch = h.at("arch").get<std::string>();
    c.model_config = h.at("model");
    c.spec = ChannelSpec::from_json(h.at("channels"));
    c.normalizer = Normalizer::from_json(h.at("normalizer"));
    c.meta = h.at("meta");
    const auto& a = h.at("adam");
    c.adam = {a.at("lr").get<double>(), a.at("beta1").get<double>(), a.at("beta2").get<double>(),
              a.at("eps").get<double>()};
    c.adam_t = a.at("t").get<std::int64_t>();
    auto read_list = [&](const nlohmann::json& list, ParamStore<double>& dst) {
      for (const auto& e : list) {
        Tensor<double> t(e.at("shape").get<Shape>());
        const std::size_t bytes = t.size() * sizeof(double);
        if (bytes > b.size() - pos) throw FormatError(path + ": truncated tensor data");
        std::memcpy(t.ptr(), b.data() + pos, bytes);
        pos += bytes;
        dst.add(e.at("name").get<std::string>(), std::move(t));
      }
    };
    read_list(h.at("params"), c.params);
    read_list(h.at("optimizer"), c.optimizer);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": malformed checkpoint header: " + e.what());
  }
  if (pos != b.size()) throw FormatError(path + ": trailing bytes after tensor data");
  return c;
}

void require_same_spec(const Checkpoint& ckpt, const ChannelSpec& spec) {
  if (!(ckpt.spec == spec))
    throw ConfigError("checkpoint channel spec " + ckpt.spec.to_json().dump() + " does not match the run's " +
                      spec.to_json().dump());
}

template <typename T>
void load_params(Model<T>& model, const Checkpoint& ckpt) {
  auto& ps = model.params();
  if (ps.size() != ckpt.params.size())
    throw FormatError("checkpoint has " + std::to_string(ckpt.params.size()) + " tensors, model has " +
                      std::to_string(ps.size()));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& p = ps[i];
    if (!ckpt.params.contains(p.name)) throw FormatError("checkpoint lacks parameter '" + p.name + "'");
    const auto& src = ckpt.params.get(p.name).value;
    if (src.shape() != p.value.shape())
      throw FormatError("parameter '" + p.name + "' has shape " + shape_str(src.shape()) + " in the checkpoint, " +
                        shape_str(p.value.shape()) + " in the model");
    p.value = src.template cast<T>();
  }
}

template <typename T>
AdamState<T> load_adam(const Checkpoint& ckpt) {
  AdamState<T> s;
  s.hyper = ckpt.adam;
  s.t = ckpt.adam_t;
  for (std::size_t i = 0; i < ckpt.optimizer.size(); ++i) {
    const auto& p = ckpt.optimizer[i];
    auto moment = p.value.template cast<T>();
    if (p.name.rfind("m/", 0) == 0) s.m[p.name.substr(2)] = std::move(moment);
    else if (p.name.rfind("v/", 0) == 0) s.v[p.name.substr(2)] = std::move(moment);
  }
  return s;
}

template <typename T>
std::unique_ptr<Model<T>> model_from_checkpoint(const Checkpoint& ckpt, const Dataset& data) {
  auto model = make_model<T>(ckpt.arch, ckpt.model_config, ckpt.spec, data);
  load_params(*model, ckpt);
  return model;
}

#define IONCAST_CKPT(T)                                                                                       \
  template Checkpoint make_checkpoint<T>(const Model<T>&, const Normalizer&, const AdamState<T>*,            \
                                         nlohmann::json);                                                     \
  template void load_params<T>(Model<T>&, const Checkpoint&);                                                 \
  template AdamState<T> load_adam<T>(const Checkpoint&);                                                      \
  template std::unique_ptr<Model<T>> model_from_checkpoint<T>(const Checkpoint&, const Dataset&);

IONCAST_CKPT(float)
IONCAST_CKPT(double)

}  // namespace ioncast
