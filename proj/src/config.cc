#include "ctc/config.h"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace ctc {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T number(std::string_view key, std::string_view v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc() && ptr == v.data() + v.size(), ErrorKind::kInvalidArgument,
          "config key " + std::string(key) + ": bad number '" + std::string(v) + "'");
  return out;
}

bool flag(std::string_view key, std::string_view v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  fail(ErrorKind::kInvalidArgument,
       "config key " + std::string(key) + ": expected on/off, got '" + std::string(v) + "'");
}

template <typename E>
E choice(std::string_view key, std::string_view v, std::initializer_list<std::pair<const char*, E>> opts) {
  for (const auto& [name, value] : opts)
    if (v == name) return value;
  fail(ErrorKind::kInvalidArgument,
       "config key " + std::string(key) + ": unknown value '" + std::string(v) + "'");
}

const char* on_off(bool b) { return b ? "on" : "off"; }

}  // namespace

void CodecConfig::validate() const {
  require(max_depth >= 1 && max_depth <= 19, ErrorKind::kInvalidArgument,
          "max_depth must be in 1..19");
  require(fixed_depth >= 0 && fixed_depth <= 19, ErrorKind::kInvalidArgument,
          "depth must be in 0..19");
  require(chunk_size >= 1, ErrorKind::kInvalidArgument, "chunk_size must be positive");
  bounds.validate();
  require(block >= 1 && block <= 128 && (block & (block - 1)) == 0, ErrorKind::kInvalidArgument,
          "block must be a power of two up to 128");
  require(crr_train.radius >= 0 && crr_train.radius <= 8 && cdr_train.radius >= 0 &&
              cdr_train.radius <= 8,
          ErrorKind::kInvalidArgument, "context radius must be in 0..8");
  require(crr_train.hidden >= 1 && cdr_train.hidden >= 1, ErrorKind::kInvalidArgument,
          "hidden width must be positive");
  require(crr_train.epochs >= 0 && cdr_train.steps >= 0 && crr_train.batch >= 1,
          ErrorKind::kInvalidArgument, "training lengths must be non-negative");
}

CodecConfig CodecConfig::parse(std::string_view text) {
  CodecConfig c;
  using Setter = std::function<void(std::string_view, std::string_view)>;
  const std::map<std::string, Setter, std::less<>> setters = {
      {"max_depth", [&](auto k, auto v) { c.max_depth = number<int>(k, v); }},
      {"depth", [&](auto k, auto v) { c.fixed_depth = number<int>(k, v); }},
      {"chunk_size", [&](auto k, auto v) { c.chunk_size = number<std::uint32_t>(k, v); }},
      {"s_low", [&](auto k, auto v) { c.bounds.low = number<double>(k, v); }},
      {"s_high", [&](auto k, auto v) { c.bounds.high = number<double>(k, v); }},
      {"order",
       [&](auto k, auto v) {
         c.order = choice<OrderMode>(k, v, {{"rd", OrderMode::kRdPriority}, {"raster", OrderMode::kRaster}});
       }},
      {"priority",
       [&](auto k, auto v) {
         c.raw_priority = choice<bool>(k, v, {{"refined", false}, {"raw", true}});
       }},
      {"params",
       [&](auto k, auto v) {
         c.param_mode = choice<ParamMode>(
             k, v, {{"channel", ParamMode::kPerChannel}, {"element", ParamMode::kPerElement}});
       }},
      {"source",
       [&](auto k, auto v) {
         c.source = choice<SourceMode>(
             k, v, {{"latent", SourceMode::kSyntheticLatent}, {"image", SourceMode::kImageLinear}});
       }},
      {"block", [&](auto k, auto v) { c.block = number<int>(k, v); }},
      {"crr", [&](auto k, auto v) { c.use_crr = flag(k, v); }},
      {"cdr", [&](auto k, auto v) { c.use_cdr = flag(k, v); }},
      {"refit", [&](auto k, auto v) { c.use_refit = flag(k, v); }},
      {"refit_objective",
       [&](auto k, auto v) {
         c.refit_objective = choice<RefitObjective>(
             k, v, {{"norm", RefitObjective::kNorm}, {"squared", RefitObjective::kSquared}});
       }},
      {"crr_radius", [&](auto k, auto v) { c.crr_train.radius = number<int>(k, v); }},
      {"crr_hidden", [&](auto k, auto v) { c.crr_train.hidden = number<int>(k, v); }},
      {"crr_epochs", [&](auto k, auto v) { c.crr_train.epochs = number<int>(k, v); }},
      {"crr_batch", [&](auto k, auto v) { c.crr_train.batch = number<int>(k, v); }},
      {"crr_lr", [&](auto k, auto v) { c.crr_train.learning_rate = number<double>(k, v); }},
      {"crr_max_samples",
       [&](auto k, auto v) { c.crr_train.max_samples = number<std::size_t>(k, v); }},
      {"cdr_radius", [&](auto k, auto v) { c.cdr_train.radius = number<int>(k, v); }},
      {"cdr_hidden", [&](auto k, auto v) { c.cdr_train.hidden = number<int>(k, v); }},
      {"cdr_steps", [&](auto k, auto v) { c.cdr_train.steps = number<int>(k, v); }},
      {"cdr_lr", [&](auto k, auto v) { c.cdr_train.learning_rate = number<double>(k, v); }},
      {"cdr_elements",
       [&](auto k, auto v) { c.cdr_train.elements_per_position = number<std::size_t>(k, v); }},
      {"seed",
       [&](auto k, auto v) {
         c.crr_train.seed = c.cdr_train.seed = number<std::uint64_t>(k, v);
       }},
      {"models", [&](auto, auto v) { c.models_dir = std::string(v); }},
  };

  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string_view::npos, ErrorKind::kInvalidArgument,
            "config line " + std::to_string(line_no) + ": expected key=value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    require(it != setters.end(), ErrorKind::kInvalidArgument,
            "config line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
    it->second(key, value);
  }
  c.validate();
  return c;
}

CodecConfig CodecConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string CodecConfig::to_text() const {
  std::ostringstream o;
  o << "max_depth=" << max_depth << '\n'
    << "depth=" << fixed_depth << '\n'
    << "chunk_size=" << chunk_size << '\n'
    << "s_low=" << bounds.low << '\n'
    << "s_high=" << bounds.high << '\n'
    << "order=" << (order == OrderMode::kRaster ? "raster" : "rd") << '\n'
    << "priority=" << (raw_priority ? "raw" : "refined") << '\n'
    << "params=" << (param_mode == ParamMode::kPerElement ? "element" : "channel") << '\n'
    << "source=" << (source == SourceMode::kImageLinear ? "image" : "latent") << '\n'
    << "block=" << block << '\n'
    << "crr=" << on_off(use_crr) << '\n'
    << "cdr=" << on_off(use_cdr) << '\n'
    << "refit=" << on_off(use_refit) << '\n'
    << "refit_objective=" << (refit_objective == RefitObjective::kSquared ? "squared" : "norm")
    << '\n'
    << "crr_radius=" << crr_train.radius << '\n'
    << "crr_hidden=" << crr_train.hidden << '\n'
    << "crr_epochs=" << crr_train.epochs << '\n'
    << "crr_batch=" << crr_train.batch << '\n'
    << "crr_lr=" << crr_train.learning_rate << '\n'
    << "crr_max_samples=" << crr_train.max_samples << '\n'
    << "cdr_radius=" << cdr_train.radius << '\n'
    << "cdr_hidden=" << cdr_train.hidden << '\n'
    << "cdr_steps=" << cdr_train.steps << '\n'
    << "cdr_lr=" << cdr_train.learning_rate << '\n'
    << "cdr_elements=" << cdr_train.elements_per_position << '\n'
    << "seed=" << crr_train.seed << '\n';
  if (!models_dir.empty()) o << "models=" << models_dir.string() << '\n';
  return o.str();
}

}  // namespace ctc
