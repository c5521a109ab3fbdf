#include <fstream>

#include <nlohmann/json.hpp>

#include "psvae/checkpoint.hpp"

namespace psvae {

namespace {

torch::Tensor default_cpu_rng_state() {
  auto gen = at::globalContext().defaultGenerator(at::kCPU);
  std::lock_guard<std::mutex> lock(gen.mutex());
  return gen.get_state();
}

void restore_cpu_rng_state(const torch::Tensor& state) {
  auto gen = at::globalContext().defaultGenerator(at::kCPU);
  std::lock_guard<std::mutex> lock(gen.mutex());
  gen.set_state(state);
}

constexpr uint32_t kParamsVersion = 1;
constexpr char kParamsMagic[4] = {'P', 'S', 'V', 'P'};

uint8_t dtype_code(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return 0;
    case torch::kInt64: return 1;
    case torch::kUInt8: return 2;
    case torch::kFloat64: return 3;
    default: throw DataError("unsupported tensor dtype in checkpoint");
  }
}

torch::ScalarType dtype_from_code(uint8_t c) {
  switch (c) {
    case 0: return torch::kFloat32;
    case 1: return torch::kInt64;
    case 2: return torch::kUInt8;
    case 3: return torch::kFloat64;
    default: throw DataError("unknown dtype code in checkpoint");
  }
}

void write_tensor(std::ostream& out, const std::string& name, const torch::Tensor& t) {
  auto tensor = t.detach().contiguous();
  const uint32_t name_len = static_cast<uint32_t>(name.size());
  out.write(reinterpret_cast<const char*>(&name_len), 4);
  out.write(name.data(), name_len);
  const uint8_t dtype = dtype_code(tensor.scalar_type());
  out.write(reinterpret_cast<const char*>(&dtype), 1);
  const uint32_t ndim = static_cast<uint32_t>(tensor.dim());
  out.write(reinterpret_cast<const char*>(&ndim), 4);
  for (int64_t i = 0; i < tensor.dim(); ++i) {
    const int64_t d = tensor.size(i);
    out.write(reinterpret_cast<const char*>(&d), 8);
  }
  const int64_t bytes = tensor.numel() * tensor.element_size();
  out.write(static_cast<const char*>(tensor.data_ptr()), bytes);
}

}  // namespace

void save_named_tensors(const std::filesystem::path& path,
                        const torch::OrderedDict<std::string, torch::Tensor>& params,
                        const torch::OrderedDict<std::string, torch::Tensor>& buffers) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kParamsMagic, 4);
  out.write(reinterpret_cast<const char*>(&kParamsVersion), 4);
  const uint64_t count = params.size() + buffers.size();
  out.write(reinterpret_cast<const char*>(&count), 8);
  for (const auto& item : params) write_tensor(out, "param/" + item.key(), item.value());
  for (const auto& item : buffers) write_tensor(out, "buffer/" + item.key(), item.value());
}

void load_named_tensors(const std::filesystem::path& path, torch::nn::Module& module) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  uint32_t version;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (!in || std::string(magic, 4) != std::string(kParamsMagic, 4) ||
      version != kParamsVersion) {
    throw DataError("unrecognized parameter container: " + path.string());
  }
  uint64_t count;
  in.read(reinterpret_cast<char*>(&count), 8);
  auto params = module.named_parameters();
  auto buffers = module.named_buffers();
  torch::NoGradGuard guard;
  for (uint64_t i = 0; i < count; ++i) {
    uint32_t name_len;
    in.read(reinterpret_cast<char*>(&name_len), 4);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    uint8_t dtype;
    in.read(reinterpret_cast<char*>(&dtype), 1);
    uint32_t ndim;
    in.read(reinterpret_cast<char*>(&ndim), 4);
    std::vector<int64_t> dims(ndim);
    for (auto& d : dims) in.read(reinterpret_cast<char*>(&d), 8);
    auto tensor = torch::empty(dims, dtype_from_code(dtype));
    in.read(static_cast<char*>(tensor.data_ptr()), tensor.numel() * tensor.element_size());
    if (!in) throw DataError("truncated parameter container: " + path.string());

    torch::Tensor* dest = nullptr;
    if (name.starts_with("param/")) {
      dest = params.find(name.substr(6));
    } else if (name.starts_with("buffer/")) {
      dest = buffers.find(name.substr(7));
    }
    if (dest == nullptr) throw DataError("checkpoint entry has no destination: " + name);
    if (dest->sizes() != tensor.sizes()) {
      throw DataError("checkpoint shape mismatch for " + name);
    }
    dest->copy_(tensor);
  }
}

void save_checkpoint(const std::filesystem::path& dir, ModelBundle bundle,
                     const CheckpointInfo& info, torch::optim::Optimizer* opt_g,
                     torch::optim::Optimizer* opt_d) {
  std::filesystem::create_directories(dir);
  save_named_tensors(dir / "params.bin", bundle->named_parameters(),
                     bundle->named_buffers());
  nlohmann::json manifest;
  manifest["format"] = "psvae-checkpoint";
  manifest["version"] = 1;
  manifest["network_spec"] = nlohmann::json::parse(info.spec.to_json());
  manifest["iteration"] = info.iteration;
  manifest["data_rng_state"] = info.data_rng_state;
  manifest["config_hash"] = info.config_hash;
  manifest["baseline"] = info.baseline;
  manifest["has_optimizers"] = (opt_g != nullptr && opt_d != nullptr);

  if (opt_g != nullptr && opt_d != nullptr) {
    torch::save(*opt_g, (dir / "opt_g.pt").string());
    torch::save(*opt_d, (dir / "opt_d.pt").string());
    torch::OrderedDict<std::string, torch::Tensor> rng_buffers;
    rng_buffers.insert("torch_rng", default_cpu_rng_state());
    save_named_tensors(dir / "rng.bin", {}, rng_buffers);
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DataError("cannot write checkpoint manifest");
  out << manifest.dump(2) << "\n";
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("missing checkpoint manifest in " + dir.string());
  nlohmann::json manifest = nlohmann::json::parse(in);
  if (manifest.value("format", "") != "psvae-checkpoint") {
    throw DataError("not a checkpoint directory: " + dir.string());
  }
  CheckpointInfo info;
  info.spec = NetworkSpec::from_json(manifest.at("network_spec").dump());
  info.iteration = manifest.value("iteration", int64_t{0});
  info.data_rng_state = manifest.value("data_rng_state", std::string());
  info.config_hash = manifest.value("config_hash", std::string());
  info.has_optimizers = manifest.value("has_optimizers", false);
  info.baseline = manifest.value("baseline", false);
  return info;
}

ModelBundle load_checkpoint_model(const std::filesystem::path& dir) {
  auto info = read_checkpoint_info(dir);
  ModelBundle bundle(info.spec);
  load_named_tensors(dir / "params.bin", *bundle);
  return bundle;
}

void load_checkpoint_optimizers(const std::filesystem::path& dir,
                                torch::optim::Optimizer& opt_g,
                                torch::optim::Optimizer& opt_d) {
  torch::load(opt_g, (dir / "opt_g.pt").string());
  torch::load(opt_d, (dir / "opt_d.pt").string());
  // restore the torch RNG stream
  struct RngHolder : torch::nn::Module {
    RngHolder() { rng = register_buffer("torch_rng", default_cpu_rng_state().clone()); }
    torch::Tensor rng;
  } holder;
  load_named_tensors(dir / "rng.bin", holder);
  restore_cpu_rng_state(holder.rng);
}

}  // namespace psvae
