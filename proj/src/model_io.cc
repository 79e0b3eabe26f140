#include "ctc/model_io.h"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include <boost/crc.hpp>

namespace ctc {
namespace {

constexpr char kMagic[4] = {'C', 'T', 'C', 'M'};
constexpr std::uint8_t kModelVersion = 1;

using Crc64 = boost::crc_optimal<64, 0x42F0E1EBA9EA3693ULL, ~0ULL, ~0ULL, true, true>;

void put(std::vector<std::uint8_t>& out, std::uint64_t v, int n) {
  for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get(std::span<const std::uint8_t> in, std::size_t& pos, int n) {
  require(in.size() - pos >= static_cast<std::size_t>(n), ErrorKind::kFormat,
          "model file is truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
  pos += n;
  return v;
}

std::vector<std::uint8_t> frame(ModelKind kind, int slot, int radius, MlpShape shape,
                                const TemperatureBounds& bounds, std::span<const double> weights) {
  std::vector<std::uint8_t> out;
  for (char c : kMagic) out.push_back(static_cast<std::uint8_t>(c));
  out.push_back(kModelVersion);
  out.push_back(static_cast<std::uint8_t>(kind));
  out.push_back(static_cast<std::uint8_t>(slot));
  out.push_back(static_cast<std::uint8_t>(radius));
  put(out, static_cast<std::uint32_t>(shape.inputs), 4);
  put(out, static_cast<std::uint32_t>(shape.hidden), 4);
  put(out, static_cast<std::uint32_t>(shape.outputs), 4);
  put(out, std::bit_cast<std::uint64_t>(bounds.low), 8);
  put(out, std::bit_cast<std::uint64_t>(bounds.high), 8);
  put(out, weights.size(), 4);
  for (double w : weights) put(out, std::bit_cast<std::uint32_t>(static_cast<float>(w)), 4);
  put(out, crc64(out), 8);
  return out;
}

}  // namespace

std::uint64_t crc64(std::span<const std::uint8_t> bytes) {
  Crc64 crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

std::vector<std::uint8_t> serialize_crr(const CrrModel& model, int slot,
                                        const TemperatureBounds& bounds) {
  return frame(ModelKind::kCrr, slot, model.radius(), model.net().shape(), bounds,
               model.net().parameters());
}

std::vector<std::uint8_t> serialize_cdr(const CdrModel& model, int slot) {
  return frame(ModelKind::kCdr, slot, model.radius(), model.net().shape(), TemperatureBounds{0, 0},
               model.net().parameters());
}

std::vector<std::uint8_t> serialize_synthesis(const SynthesisWeights& w) {
  const int k = w.coefficients();
  std::vector<double> flat(w.matrix.data(), w.matrix.data() + w.matrix.size());
  flat.insert(flat.end(), w.bias.data(), w.bias.data() + w.bias.size());
  return frame(ModelKind::kSynthesis, 0, 0, {k, 0, k}, TemperatureBounds{0, 0}, flat);
}

LoadedModel parse_model(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  for (char c : kMagic)
    require(get(bytes, pos, 1) == static_cast<std::uint8_t>(c), ErrorKind::kFormat,
            "bad model magic");
  require(get(bytes, pos, 1) == kModelVersion, ErrorKind::kFormat, "unsupported model version");
  LoadedModel m;
  const auto kind = get(bytes, pos, 1);
  require(kind >= 1 && kind <= 3, ErrorKind::kFormat, "unknown model kind");
  m.kind = static_cast<ModelKind>(kind);
  m.slot = static_cast<int>(get(bytes, pos, 1));
  const int radius = static_cast<int>(get(bytes, pos, 1));
  MlpShape shape;
  shape.inputs = static_cast<int>(get(bytes, pos, 4));
  shape.hidden = static_cast<int>(get(bytes, pos, 4));
  shape.outputs = static_cast<int>(get(bytes, pos, 4));
  m.bounds.low = std::bit_cast<double>(get(bytes, pos, 8));
  m.bounds.high = std::bit_cast<double>(get(bytes, pos, 8));
  const std::size_t count = get(bytes, pos, 4);
  require(shape.inputs >= 0 && shape.inputs < (1 << 20) && shape.hidden >= 0 &&
              shape.hidden < (1 << 16) && shape.outputs >= 0 && shape.outputs < (1 << 16),
          ErrorKind::kFormat, "model dimensions out of range");
  require((bytes.size() - pos) / 4 >= count, ErrorKind::kFormat, "model file is truncated");
  std::vector<double> weights(count);
  for (double& w : weights) {
    w = std::bit_cast<float>(static_cast<std::uint32_t>(get(bytes, pos, 4)));
    require(std::isfinite(w), ErrorKind::kFormat, "model file holds a non-finite weight");
  }
  const std::uint64_t expected = crc64(bytes.first(pos));
  require(get(bytes, pos, 8) == expected, ErrorKind::kFormat, "model checksum mismatch");
  require(pos == bytes.size(), ErrorKind::kFormat, "trailing bytes after the model");
  require(m.slot >= 0 && m.slot <= 2, ErrorKind::kFormat, "model slot out of range");

  if (m.kind == ModelKind::kSynthesis) {
    const int k = shape.inputs;
    require(k > 0 && shape.outputs == k && count == static_cast<std::size_t>(k) * k + k,
            ErrorKind::kFormat, "synthesis model size mismatch");
    SynthesisWeights s;
    s.matrix = Eigen::Map<const Eigen::MatrixXd>(weights.data(), k, k);
    s.bias = Eigen::Map<const Eigen::VectorXd>(weights.data() + k * k, k);
    m.synthesis = std::move(s);
    return m;
  }
  Perceptron net(shape);
  require(net.parameter_count() == count, ErrorKind::kFormat, "model weight count mismatch");
  std::copy(weights.begin(), weights.end(), net.parameters().begin());
  if (m.kind == ModelKind::kCrr) {
    require(shape.inputs == CrrModel::feature_count(radius) && shape.outputs == 4,
            ErrorKind::kFormat, "rate model shape mismatch");
    m.bounds.validate();
    m.crr = CrrModel(radius, std::move(net));
  } else {
    require(shape.inputs == CdrModel::feature_count(radius) && shape.outputs == 1,
            ErrorKind::kFormat, "distortion model shape mismatch");
    m.cdr = CdrModel(radius, std::move(net));
  }
  return m;
}

void ModelSet::round_to_float() {
  for (auto& s : crr.slots)
    if (s) s->net().round_to_float();
  for (auto& s : cdr.slots)
    if (s) s->net().round_to_float();
  if (synthesis) synthesis->round_to_float();
}

std::uint64_t ModelSet::checksum() const {
  if (empty()) return 0;
  std::vector<std::uint8_t> all;
  // Each file ends in its own CRC, which would collapse a CRC over the
  // concatenation to a constant residue, so the trailers are left out.
  const auto append = [&](const std::vector<std::uint8_t>& b) {
    all.insert(all.end(), b.begin(), b.end() - 8);
  };
  for (int i = 0; i < 3; ++i)
    if (crr.slots[i]) append(serialize_crr(*crr.slots[i], i, bounds));
  for (int i = 0; i < 3; ++i)
    if (cdr.slots[i]) append(serialize_cdr(*cdr.slots[i], i));
  if (synthesis) append(serialize_synthesis(*synthesis));
  const std::uint64_t c = crc64(all);
  return c == 0 ? 1 : c;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  require(!in.bad(), ErrorKind::kIo, "cannot read " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
}

void save_models(const ModelSet& models, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorKind::kIo, "cannot create " + dir.string());
  for (int i = 0; i < 3; ++i) {
    if (models.crr.slots[i])
      write_file(dir / ("crr_" + std::to_string(i) + ".ctcm"),
                 serialize_crr(*models.crr.slots[i], i, models.bounds));
    if (models.cdr.slots[i])
      write_file(dir / ("cdr_" + std::to_string(i) + ".ctcm"),
                 serialize_cdr(*models.cdr.slots[i], i));
  }
  if (models.synthesis) write_file(dir / "synthesis.ctcm", serialize_synthesis(*models.synthesis));
}

ModelSet load_models(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), ErrorKind::kIo,
          "model directory " + dir.string() + " does not exist");
  ModelSet set;
  bool have_bounds = false;
  const auto load = [&](const std::string& name, ModelKind kind, int slot) {
    const auto path = dir / name;
    if (!std::filesystem::exists(path)) return;
    LoadedModel m = parse_model(read_file(path));
    require(m.kind == kind && m.slot == slot, ErrorKind::kFormat,
            path.string() + " holds a different model");
    if (m.crr) {
      require(!have_bounds || (m.bounds.low == set.bounds.low && m.bounds.high == set.bounds.high),
              ErrorKind::kModelMismatch, "rate models disagree on temperature bounds");
      set.bounds = m.bounds;
      have_bounds = true;
      set.crr.slots[slot] = std::move(m.crr);
    }
    if (m.cdr) set.cdr.slots[slot] = std::move(m.cdr);
    if (m.synthesis) set.synthesis = std::move(m.synthesis);
  };
  for (int i = 0; i < 3; ++i) {
    load("crr_" + std::to_string(i) + ".ctcm", ModelKind::kCrr, i);
    load("cdr_" + std::to_string(i) + ".ctcm", ModelKind::kCdr, i);
  }
  load("synthesis.ctcm", ModelKind::kSynthesis, 0);
  return set;
}

}  // namespace ctc
