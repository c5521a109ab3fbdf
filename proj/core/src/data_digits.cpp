#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "psvae/data.hpp"

namespace F = torch::nn::functional;

namespace psvae {

namespace {

uint32_t read_be32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("unexpected end of IDX file");
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | b[3];
}

void write_be32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(b), 4);
}

torch::Tensor to_unit_range(torch::Tensor u8_images) {
  return u8_images.to(torch::kFloat32).div(127.5).sub(1.0);
}

torch::Tensor resize_to_32(torch::Tensor images) {
  if (images.size(2) == kDigitSize && images.size(3) == kDigitSize) return images;
  return F::interpolate(images, F::InterpolateFuncOptions()
                                    .size(std::vector<int64_t>{kDigitSize, kDigitSize})
                                    .mode(torch::kBilinear)
                                    .align_corners(false));
}

}  // namespace

std::string to_string(DigitSource d) {
  switch (d) {
    case DigitSource::kMnist: return "mnist";
    case DigitSource::kUsps: return "usps";
    case DigitSource::kSvhn: return "svhn";
  }
  throw std::invalid_argument("unknown digit source");
}

DigitSource digit_source_from_string(const std::string& s) {
  if (s == "mnist") return DigitSource::kMnist;
  if (s == "usps") return DigitSource::kUsps;
  if (s == "svhn") return DigitSource::kSvhn;
  throw std::invalid_argument("unknown digit dataset: " + s);
}

torch::Tensor read_idx_images(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const uint32_t magic = read_be32(in);
  if ((magic & 0xffffff00) != 0x00000800 || (magic & 0xff) < 3 || (magic & 0xff) > 4) {
    throw DataError("not an IDX image file: " + path.string());
  }
  const int ndims = magic & 0xff;
  std::vector<int64_t> dims;
  int64_t total = 1;
  for (int i = 0; i < ndims; ++i) {
    dims.push_back(read_be32(in));
    total *= dims.back();
  }
  auto out = torch::empty(dims, torch::kUInt8);
  in.read(reinterpret_cast<char*>(out.data_ptr<uint8_t>()), total);
  if (!in) throw DataError("truncated IDX image file: " + path.string());
  return out;
}

torch::Tensor read_idx_labels(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  if (read_be32(in) != 0x00000801) throw DataError("not an IDX label file: " + path.string());
  const int64_t n = read_be32(in);
  auto raw = torch::empty({n}, torch::kUInt8);
  in.read(reinterpret_cast<char*>(raw.data_ptr<uint8_t>()), n);
  if (!in) throw DataError("truncated IDX label file: " + path.string());
  return raw.to(torch::kInt64);
}

void write_idx_images(const std::filesystem::path& path, const torch::Tensor& images) {
  auto u8 = images.to(torch::kUInt8).contiguous();
  if (u8.dim() != 3 && u8.dim() != 4) throw DataError("IDX images must be 3- or 4-d");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_be32(out, 0x00000800 | static_cast<uint32_t>(u8.dim()));
  for (int64_t i = 0; i < u8.dim(); ++i) {
    write_be32(out, static_cast<uint32_t>(u8.size(i)));
  }
  out.write(reinterpret_cast<const char*>(u8.data_ptr<uint8_t>()), u8.numel());
}

void write_idx_labels(const std::filesystem::path& path, const torch::Tensor& labels) {
  auto u8 = labels.to(torch::kUInt8).contiguous();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_be32(out, 0x00000801);
  write_be32(out, static_cast<uint32_t>(u8.size(0)));
  out.write(reinterpret_cast<const char*>(u8.data_ptr<uint8_t>()), u8.numel());
}

DigitDataset load_mnist_like(const std::filesystem::path& images_path,
                             const std::filesystem::path& labels_path) {
  auto images = read_idx_images(images_path);
  if (images.dim() == 3) images = images.unsqueeze(1);
  DigitDataset d;
  d.images = resize_to_32(to_unit_range(images));
  d.labels = read_idx_labels(labels_path);
  if (d.images.size(0) != d.labels.size(0)) {
    throw DataError("image/label count mismatch");
  }
  return d;
}

DigitDataset load_usps(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<float> pixels;
  std::vector<int64_t> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    double label;
    ls >> label;
    labels.push_back(static_cast<int64_t>(label));
    for (int i = 0; i < 256; ++i) {
      double v;
      if (!(ls >> v)) throw DataError("short USPS sample line");
      pixels.push_back(static_cast<float>(v));
    }
  }
  if (labels.empty()) throw DataError("empty USPS file: " + path.string());
  const int64_t n = static_cast<int64_t>(labels.size());
  auto images = torch::from_blob(pixels.data(), {n, 1, 16, 16}, torch::kFloat32).clone();
  DigitDataset d;
  d.images = resize_to_32(images.clamp(-1.0, 1.0));
  d.labels = torch::tensor(labels, torch::kInt64);
  return d;
}

void write_usps(const std::filesystem::path& path, const DigitDataset& data) {
  auto small = F::interpolate(data.images, F::InterpolateFuncOptions()
                                               .size(std::vector<int64_t>{16, 16})
                                               .mode(torch::kBilinear)
                                               .align_corners(false))
                   .clamp(-1.0, 1.0)
                   .contiguous();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  auto acc = small.accessor<float, 4>();
  auto lab = data.labels.accessor<int64_t, 1>();
  for (int64_t i = 0; i < small.size(0); ++i) {
    out << lab[i];
    for (int64_t r = 0; r < 16; ++r)
      for (int64_t c = 0; c < 16; ++c) out << ' ' << acc[i][0][r][c];
    out << '\n';
  }
}

// --------------------------- SVHN MAT reader -------------------------------

namespace {

struct MatElement {
  uint32_t type = 0;
  std::vector<char> data;
};

MatElement read_mat_element(const char*& p, const char* end) {
  if (end - p < 8) throw DataError("truncated MAT element");
  MatElement e;
  uint32_t type, bytes;
  std::memcpy(&type, p, 4);
  std::memcpy(&bytes, p + 4, 4);
  if (type > 0xffff) {  // small data element: type and length packed in one word
    e.type = type & 0xffff;
    bytes = type >> 16;
    e.data.assign(p + 4, p + 4 + bytes);
    p += 8;
    return e;
  }
  e.type = type;
  p += 8;
  if (end - p < bytes) throw DataError("truncated MAT element body");
  e.data.assign(p, p + bytes);
  p += bytes;
  p += (8 - (bytes % 8)) % 8;  // 64-bit alignment padding
  return e;
}

std::vector<char> zlib_inflate(const std::vector<char>& in) {
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw DataError("zlib init failed");
  std::vector<char> out;
  out.reserve(in.size() * 4);
  std::vector<char> buf(1 << 16);
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
  zs.avail_in = static_cast<uInt>(in.size());
  int ret = Z_OK;
  while (ret != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef*>(buf.data());
    zs.avail_out = static_cast<uInt>(buf.size());
    ret = inflate(&zs, Z_NO_FLUSH);
    if (ret != Z_OK && ret != Z_STREAM_END) {
      inflateEnd(&zs);
      throw DataError("zlib inflate failed");
    }
    out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
  }
  inflateEnd(&zs);
  return out;
}

struct MatArray {
  std::string name;
  std::vector<int64_t> dims;
  torch::Tensor values;  // flat, column-major order preserved
};

MatArray parse_matrix(const std::vector<char>& body) {
  const char* p = body.data();
  const char* end = p + body.size();
  auto flags = read_mat_element(p, end);    // array flags
  auto dims_el = read_mat_element(p, end);  // dimensions, miINT32
  auto name_el = read_mat_element(p, end);  // array name
  auto data_el = read_mat_element(p, end);  // real part
  (void)flags;
  MatArray arr;
  arr.name.assign(name_el.data.begin(), name_el.data.end());
  const auto ndims = dims_el.data.size() / 4;
  for (size_t i = 0; i < ndims; ++i) {
    int32_t d;
    std::memcpy(&d, dims_el.data.data() + 4 * i, 4);
    arr.dims.push_back(d);
  }
  int64_t count = static_cast<int64_t>(data_el.data.size());
  switch (data_el.type) {
    case 2:  // miUINT8
    case 1:  // miINT8
      arr.values = torch::from_blob(data_el.data.data(), {count}, torch::kUInt8)
                       .clone().to(torch::kFloat32);
      break;
    case 9:  // miDOUBLE
      arr.values = torch::from_blob(data_el.data.data(), {count / 8}, torch::kFloat64)
                       .clone().to(torch::kFloat32);
      break;
    case 7:  // miSINGLE
      arr.values =
          torch::from_blob(data_el.data.data(), {count / 4}, torch::kFloat32).clone();
      break;
    default:
      throw DataError("unsupported MAT data type " + std::to_string(data_el.type));
  }
  return arr;
}

}  // namespace

DigitDataset load_svhn(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
  if (raw.size() < 128) throw DataError("not a MAT 5 file: " + path.string());
  const char* p = raw.data() + 128;  // skip descriptive header
  const char* end = raw.data() + raw.size();
  std::vector<MatArray> arrays;
  while (p < end) {
    auto el = read_mat_element(p, end);
    if (el.type == 15) {  // miCOMPRESSED
      auto body = zlib_inflate(el.data);
      const char* q = body.data();
      auto inner = read_mat_element(q, body.data() + body.size());
      if (inner.type == 14) arrays.push_back(parse_matrix(inner.data));
    } else if (el.type == 14) {  // miMATRIX
      arrays.push_back(parse_matrix(el.data));
    }
  }
  torch::Tensor x, y;
  for (auto& arr : arrays) {
    if (arr.name == "X" && arr.dims.size() == 4) {
      // column-major (h, w, c, n) -> (n, c, h, w)
      x = arr.values
              .as_strided({arr.dims[0], arr.dims[1], arr.dims[2], arr.dims[3]},
                          {1, arr.dims[0], arr.dims[0] * arr.dims[1],
                           arr.dims[0] * arr.dims[1] * arr.dims[2]})
              .permute({3, 2, 0, 1})
              .contiguous();
    } else if (arr.name == "y") {
      y = arr.values.to(torch::kInt64).flatten();
    }
  }
  if (!x.defined() || !y.defined()) throw DataError("SVHN arrays X/y not found");
  y = torch::where(y == 10, torch::zeros_like(y), y);  // label 10 means digit zero
  DigitDataset d;
  d.images = x.div(127.5).sub(1.0);
  d.labels = y;
  return d;
}

// ------------------------- imbalance protocol ------------------------------

int64_t class1_count(int64_t per_other, double rate) {
  if (rate <= 0.0 || rate >= 1.0) throw DataError("imbalance rate must be in (0,1)");
  return std::llround(9.0 * static_cast<double>(per_other) * rate / (1.0 - rate));
}

int64_t table_per_other_count(DigitSource dataset, double rate) {
  const int r = static_cast<int>(std::llround(rate * 10));
  if (r < 1 || r > 5 || std::abs(rate - r / 10.0) > 1e-9) {
    throw DataError("unsupported imbalance rate");
  }
  switch (dataset) {
    case DigitSource::kUsps:
      return 500;
    case DigitSource::kMnist:
      switch (r) {
        case 1: return 4000;
        case 2: return 2000;
        case 3: return 1400;
        case 4: return 1000;
        case 5: return 700;
      }
      break;
    case DigitSource::kSvhn:
      if (r == 1) return 4000;
      throw DataError("SVHN is a source domain only and has no imbalanced setting");
  }
  throw DataError("unsupported imbalance rate");
}

std::vector<SplitEntry> make_imbalanced_split(const DigitDataset& data,
                                              const ImbalanceSpec& spec,
                                              uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<SplitEntry> out;
  auto labels = data.labels.accessor<int64_t, 1>();
  for (int64_t cls = 0; cls < kNumDigitClasses; ++cls) {
    std::vector<int64_t> pool;
    for (int64_t i = 0; i < data.size(); ++i) {
      if (labels[i] == cls) pool.push_back(i);
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    const int64_t wanted = cls == spec.special_class
                               ? class1_count(spec.per_other_class, spec.rate)
                               : spec.per_other_class;
    if (static_cast<int64_t>(pool.size()) >= wanted) {
      for (int64_t i = 0; i < wanted; ++i) out.push_back({pool[i], 0});
    } else if (spec.dataset == DigitSource::kUsps && cls == spec.special_class) {
      // over-sample with shifted copies
      for (int64_t i : pool) out.push_back({i, 0});
      std::uniform_int_distribution<int> shift_pick(0, 3);
      static constexpr int kShifts[4] = {-2, -1, 1, 2};
      for (int64_t i = pool.size(); i < wanted; ++i) {
        const int64_t base = pool[i % pool.size()];
        out.push_back({base, kShifts[shift_pick(rng)]});
      }
    } else {
      throw DataError("insufficient samples for class " + std::to_string(cls));
    }
  }
  return out;
}

DigitDataset materialize_split(const DigitDataset& data,
                               const std::vector<SplitEntry>& split) {
  std::vector<torch::Tensor> images;
  std::vector<int64_t> labels;
  images.reserve(split.size());
  auto lab = data.labels.accessor<int64_t, 1>();
  for (const auto& e : split) {
    auto img = data.images[e.index];
    if (e.dx != 0) img = augment_shift(img, e.dx);
    images.push_back(img);
    labels.push_back(lab[e.index]);
  }
  DigitDataset d;
  d.images = torch::stack(images);
  d.labels = torch::tensor(labels, torch::kInt64);
  return d;
}

std::map<int64_t, int64_t> split_class_counts(const DigitDataset& data,
                                              const std::vector<SplitEntry>& split) {
  std::map<int64_t, int64_t> counts;
  auto lab = data.labels.accessor<int64_t, 1>();
  for (const auto& e : split) counts[lab[e.index]]++;
  return counts;
}

torch::Tensor augment_shift(const torch::Tensor& img, int dx) {
  if (dx == 0 || std::abs(dx) > 2) {
    throw std::invalid_argument("augment_shift: dx must be in {-2,-1,1,2}");
  }
  const int64_t w = img.size(-1);
  auto idx = torch::arange(w, torch::kInt64);
  idx = torch::clamp(idx - dx, 0, w - 1);
  return img.index_select(-1, idx);
}

torch::Tensor invert_pixels_randomly(const torch::Tensor& img, double p,
                                     std::mt19937_64& rng) {
  if (p > 0.0 && std::bernoulli_distribution(p)(rng)) return -img;
  return img;
}

// ------------------------- synthetic stand-ins -----------------------------

namespace {

const char* kGlyphs[10][7] = {
    {"01110", "10001", "10011", "10101", "11001", "10001", "01110"},
    {"00100", "01100", "00100", "00100", "00100", "00100", "01110"},
    {"01110", "10001", "00001", "00110", "01000", "10000", "11111"},
    {"11111", "00010", "00100", "00010", "00001", "10001", "01110"},
    {"00010", "00110", "01010", "10010", "11111", "00010", "00010"},
    {"11111", "10000", "11110", "00001", "00001", "10001", "01110"},
    {"00110", "01000", "10000", "11110", "10001", "10001", "01110"},
    {"11111", "00001", "00010", "00100", "01000", "01000", "01000"},
    {"01110", "10001", "10001", "01110", "10001", "10001", "01110"},
    {"01110", "10001", "10001", "01111", "00001", "00010", "01100"},
};

torch::Tensor glyph_tensor(int digit) {
  auto t = torch::zeros({7, 5});
  auto acc = t.accessor<float, 2>();
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 5; ++c) acc[r][c] = kGlyphs[digit][r][c] == '1' ? 1.0f : 0.0f;
  return t;
}

torch::Tensor gaussian_blur(const torch::Tensor& img, int ksize, double sigma) {
  auto coords = torch::arange(ksize, torch::kFloat32) - (ksize - 1) / 2.0;
  auto kernel1d = torch::exp(-coords.square() / (2 * sigma * sigma));
  kernel1d /= kernel1d.sum();
  auto kh = kernel1d.reshape({1, 1, ksize, 1});
  auto kw = kernel1d.reshape({1, 1, 1, ksize});
  auto x = img.unsqueeze(0);
  x = torch::conv2d(x, kh, {}, 1, torch::IntArrayRef{ksize / 2, 0});
  x = torch::conv2d(x, kw, {}, 1, torch::IntArrayRef{0, ksize / 2});
  return x.squeeze(0);
}

}  // namespace

DigitDataset make_synthetic_digits(int64_t per_class, DigitStyle style, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> box_h(17, 23);
  std::uniform_real_distribution<double> aspect(0.85, 1.2);
  std::uniform_real_distribution<double> intensity(0.75, 1.0);
  std::normal_distribution<double> noise(0.0, 0.04);

  std::vector<torch::Tensor> images;
  std::vector<int64_t> labels;
  for (int64_t cls = 0; cls < kNumDigitClasses; ++cls) {
    auto glyph = glyph_tensor(static_cast<int>(cls)).unsqueeze(0).unsqueeze(0);
    for (int64_t i = 0; i < per_class; ++i) {
      const int h = box_h(rng);
      const int w = std::clamp<int>(static_cast<int>(h * 5.0 / 7.0 * aspect(rng)), 8, 22);
      auto digit = F::interpolate(glyph, F::InterpolateFuncOptions()
                                             .size(std::vector<int64_t>{h, w})
                                             .mode(torch::kBilinear)
                                             .align_corners(false))
                       .squeeze(0);
      if (style == DigitStyle::kSourceStyle) {
        digit = torch::max_pool2d(digit.unsqueeze(0), 3, 1, 1).squeeze(0);
        digit = gaussian_blur(digit, 3, 0.6);
      } else {
        digit = gaussian_blur(digit, 5, 1.0);
      }
      auto canvas = torch::zeros({1, kDigitSize, kDigitSize});
      std::uniform_int_distribution<int> off_r(0, static_cast<int>(kDigitSize) - h);
      std::uniform_int_distribution<int> off_c(0, static_cast<int>(kDigitSize) - w);
      const int r0 = off_r(rng), c0 = off_c(rng);
      canvas.narrow(1, r0, h).narrow(2, c0, w) = digit * intensity(rng);
      auto noise_map = torch::empty({1, kDigitSize, kDigitSize});
      auto nacc = noise_map.accessor<float, 3>();
      for (int64_t r = 0; r < kDigitSize; ++r)
        for (int64_t c = 0; c < kDigitSize; ++c) nacc[0][r][c] = noise(rng);
      canvas = (canvas + noise_map).clamp(0.0, 1.0);
      // source style: bright strokes on dark; target style: inverted polarity
      auto img = style == DigitStyle::kSourceStyle ? canvas * 2.0 - 1.0 : 1.0 - canvas * 2.0;
      images.push_back(img);
      labels.push_back(cls);
    }
  }
  DigitDataset d;
  d.images = torch::stack(images);
  d.labels = torch::tensor(labels, torch::kInt64);
  return d;
}

}  // namespace psvae
