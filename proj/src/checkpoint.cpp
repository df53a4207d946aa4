#include "kpdisc/checkpoint.hpp"

#include "kpdisc/error.hpp"
#include "kpdisc/io.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace kpdisc {

namespace {

constexpr std::array<char, 8> kMagic = {'K', 'P', 'D', 'A', 'R', 'C', 'H', '\0'};

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "f32";
    case torch::kFloat64: return "f64";
    case torch::kInt64: return "i64";
    case torch::kInt32: return "i32";
    case torch::kUInt8: return "u8";
    default: throw FormatError("unsupported tensor dtype in archive");
  }
}

torch::ScalarType dtype_from(const std::string& s) {
  if (s == "f32") return torch::kFloat32;
  if (s == "f64") return torch::kFloat64;
  if (s == "i64") return torch::kInt64;
  if (s == "i32") return torch::kInt32;
  if (s == "u8") return torch::kUInt8;
  throw FormatError("unknown dtype '" + s + "' in archive");
}

template <class T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("truncated archive");
  return v;
}

}  // namespace

void TensorArchive::save(const std::filesystem::path& path) const {
  nlohmann::json header;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  std::vector<torch::Tensor> payload;
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    auto c = t.detach().cpu().contiguous();
    const auto nbytes = static_cast<std::uint64_t>(c.numel()) * c.element_size();
    header["tensors"].push_back(
        {{"name", name}, {"dtype", dtype_name(c.scalar_type())}, {"shape", c.sizes().vec()},
         {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
    payload.push_back(c);
  }
  const auto text = header.dump();
  io::atomic_write(
      path,
      [&](std::ostream& os) {
        os.write(kMagic.data(), kMagic.size());
        write_pod<std::uint32_t>(os, kVersion);
        write_pod<std::uint64_t>(os, text.size());
        os.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& c : payload)
          os.write(static_cast<const char*>(c.data_ptr()), static_cast<std::streamsize>(c.numel() * c.element_size()));
      },
      /*binary=*/true);
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw FormatError(path.string() + " is not a tensor archive");
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion)
    throw FormatError("unsupported archive version " + std::to_string(version));
  const auto hlen = read_pod<std::uint64_t>(in);
  std::string text(hlen, '\0');
  in.read(text.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw FormatError("truncated archive header");
  auto header = nlohmann::json::parse(text);
  const auto base = static_cast<std::uint64_t>(in.tellg());

  TensorArchive a;
  a.meta = header.at("meta");
  for (const auto& e : header.at("tensors")) {
    auto shape = e.at("shape").get<std::vector<std::int64_t>>();
    auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype_from(e.at("dtype").get<std::string>())));
    const auto nbytes = e.at("nbytes").get<std::uint64_t>();
    if (nbytes != static_cast<std::uint64_t>(t.numel()) * t.element_size())
      throw FormatError("archive entry size mismatch for " + e.at("name").get<std::string>());
    in.seekg(static_cast<std::streamoff>(base + e.at("offset").get<std::uint64_t>()));
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
    if (!in) throw FormatError("truncated archive payload");
    a.tensors.emplace(e.at("name").get<std::string>(), std::move(t));
  }
  return a;
}

nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"k", c.k},
          {"sigma", c.sigma},
          {"single_branch", c.single_branch},
          {"resolution", c.resolution},
          {"encoder", to_string(c.encoder)},
          {"encoder_widths", c.encoder_widths},
          {"pose_channels", c.pose_channels},
          {"decoder_channels", c.decoder_channels},
          {"batchnorm", c.batchnorm},
          {"target",
           {{"kind", to_string(c.target.kind)},
            {"ssim",
             {{"window", c.target.ssim.window},
              {"c1", c.target.ssim.c1},
              {"c2", c.target.ssim.c2},
              {"gaussian", c.target.ssim.gaussian},
              {"negation", c.target.ssim.negation == SsimNegation::affine ? "affine" : "sign"}}}}}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.k = j.at("k").get<int>();
  c.sigma = j.at("sigma").get<double>();
  c.single_branch = j.at("single_branch").get<bool>();
  c.resolution = j.at("resolution").get<std::int64_t>();
  c.encoder = encoder_arch_from_string(j.at("encoder").get<std::string>());
  c.encoder_widths = j.at("encoder_widths").get<std::vector<std::int64_t>>();
  c.pose_channels = j.at("pose_channels").get<std::int64_t>();
  c.decoder_channels = j.at("decoder_channels").get<std::vector<std::int64_t>>();
  c.batchnorm = j.at("batchnorm").get<bool>();
  const auto& t = j.at("target");
  c.target.kind = target_kind_from_string(t.at("kind").get<std::string>());
  const auto& s = t.at("ssim");
  c.target.ssim.window = s.at("window").get<int>();
  c.target.ssim.c1 = s.at("c1").get<double>();
  c.target.ssim.c2 = s.at("c2").get<double>();
  c.target.ssim.gaussian = s.at("gaussian").get<bool>();
  c.target.ssim.negation = s.at("negation").get<std::string>() == "sign" ? SsimNegation::sign : SsimNegation::affine;
  return c;
}

void export_module(const torch::nn::Module& module, const std::string& prefix, TensorArchive& archive) {
  for (const auto& p : module.named_parameters(true)) archive.tensors[prefix + p.key()] = p.value().detach().clone();
  for (const auto& b : module.named_buffers(true)) archive.tensors[prefix + b.key()] = b.value().detach().clone();
}

void import_module(torch::nn::Module& module, const std::string& prefix, const TensorArchive& archive, bool partial) {
  torch::NoGradGuard ng;
  auto assign = [&](const std::string& name, torch::Tensor& dst) {
    auto it = archive.tensors.find(prefix + name);
    if (it == archive.tensors.end()) {
      if (partial) return;
      throw FormatError("archive is missing tensor '" + prefix + name + "'");
    }
    if (it->second.sizes() != dst.sizes())
      throw FormatError("shape mismatch for tensor '" + prefix + name + "'");
    dst.copy_(it->second.to(dst.scalar_type()));
  };
  for (auto& p : module.named_parameters(true)) assign(p.key(), p.value());
  for (auto& b : module.named_buffers(true)) assign(b.key(), b.value());
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& state, const TensorArchive* optimizer,
                     const nlohmann::json& extra) {
  TensorArchive a;
  a.meta["kind"] = "kpdisc-checkpoint";
  a.meta["model"] = model_config_to_json(state.config);
  a.meta["step"] = state.step;
  a.meta["dtype"] = state.net->parameters().front().scalar_type() == torch::kFloat64 ? "f64" : "f32";
  a.meta["extra"] = extra.is_null() ? nlohmann::json::object() : extra;
  export_module(*state.net, "model/", a);
  if (optimizer) {
    for (const auto& [name, t] : optimizer->tensors) a.tensors["optim/" + name] = t;
    a.meta["optimizer"] = optimizer->meta;
  }
  a.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto a = TensorArchive::load(path);
  if (a.meta.value("kind", "") != "kpdisc-checkpoint") throw FormatError(path.string() + " is not a checkpoint");
  Checkpoint c;
  c.state.config = model_config_from_json(a.meta.at("model"));
  c.state.net = KeypointModel(c.state.config);
  if (a.meta.value("dtype", "f32") == "f64") c.state.net->to(torch::kFloat64);
  import_module(*c.state.net, "model/", a);
  c.state.step = a.meta.at("step").get<std::int64_t>();
  c.extra = a.meta.value("extra", nlohmann::json::object());
  if (a.meta.contains("optimizer")) c.optimizer.meta = a.meta.at("optimizer");
  for (const auto& [name, t] : a.tensors)
    if (name.rfind("optim/", 0) == 0) c.optimizer.tensors[name.substr(6)] = t;
  return c;
}

}  // namespace kpdisc
