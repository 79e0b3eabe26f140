#include "cli.h"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "ctc/eval.h"
#include "ctc/selftest.h"

namespace ctc {
namespace {

struct Options {
  std::string config_path;
  std::string models_dir;
  std::uint64_t seed = 1;
  bool raster = false;
  bool no_crr = false;
  bool no_cdr = false;
  bool no_refit = false;
  std::string budget = "full";
  std::vector<std::string> budget_list;
  int budget_count = 30;

  std::vector<std::string> images;
  std::string synthetic;
  std::string synthetic_image;
  int assets = 1;

  std::string input;
  std::string output;
  std::string csv;
};

Shape parse_dims(const std::string& text) {
  Shape s;
  char extra = 0;
  const int n = std::sscanf(text.c_str(), "%dx%dx%d%c", &s.channels, &s.height, &s.width, &extra);
  require(n == 3 && s.valid() && s.channels <= 4096 && s.height <= 4096 && s.width <= 4096,
          ErrorKind::kInvalidArgument, "dimensions must look like CxHxW, got '" + text + "'");
  return s;
}

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

class Command {
 public:
  Command(Options o, std::ostream& out) : o_(std::move(o)), out_(out) {}

  // Flag checks that must pass before any work starts.
  void prepare(const std::string& name) {
    name_ = name;
    config_ = o_.config_path.empty() ? CodecConfig{} : CodecConfig::load(o_.config_path);
    if (o_.raster) config_.order = OrderMode::kRaster;
    if (o_.no_crr) config_.use_crr = false;
    if (o_.no_cdr) config_.use_cdr = false;
    if (o_.no_refit) config_.use_refit = false;
    if (!o_.models_dir.empty()) config_.models_dir = o_.models_dir;
    config_.crr_train.seed = config_.cdr_train.seed = o_.seed;
    budget_ = Budget::parse(o_.budget);
    for (const std::string& b : o_.budget_list) budgets_.push_back(Budget::parse(b));
    const int sources = !o_.images.empty() + !o_.synthetic.empty() + !o_.synthetic_image.empty();
    require(sources <= 1, ErrorKind::kInvalidArgument,
            "choose one of --image, --synthetic and --synthetic-image");
    if (!o_.synthetic.empty()) synthetic_ = parse_dims(o_.synthetic);
    if (!o_.synthetic_image.empty()) synthetic_image_ = parse_dims(o_.synthetic_image);
    require(o_.assets >= 1, ErrorKind::kInvalidArgument, "--assets must be positive");
    require(o_.budget_count >= 1, ErrorKind::kInvalidArgument, "--budgets must be positive");
    if (!o_.images.empty() || synthetic_image_) config_.source = SourceMode::kImageLinear;
    if (synthetic_) config_.source = SourceMode::kSyntheticLatent;
    config_.validate();
  }

  int run() {
    if (name_ == "encode") return encode_cmd();
    if (name_ == "decode") return decode_cmd();
    if (name_ == "truncate") return truncate_cmd();
    if (name_ == "train-crr") return train_crr_cmd();
    if (name_ == "train-cdr") return train_cdr_cmd();
    if (name_ == "refit-decoder") return refit_cmd();
    if (name_ == "sweep") return sweep_cmd();
    if (name_ == "ablate") return ablate_cmd();
    if (name_ == "selftest") return selftest_cmd();
    fail(ErrorKind::kInvalidArgument, "unknown command " + name_);
  }

 private:
  bool has_source() const { return !o_.images.empty() || synthetic_ || synthetic_image_; }

  std::vector<Source> sources(int count) const {
    require(has_source(), ErrorKind::kInvalidArgument,
            "need --image, --synthetic or --synthetic-image");
    std::vector<Source> out;
    if (!o_.images.empty()) {
      for (const std::string& p : o_.images) out.push_back(image_source(read_pnm(p), config_.block));
      return out;
    }
    for (int i = 0; i < count; ++i) {
      const std::uint64_t seed = o_.seed + static_cast<std::uint64_t>(i);
      if (synthetic_) {
        const SyntheticLatent s = generate_latents(SyntheticSpec::with_shape(*synthetic_, seed));
        out.push_back(latent_source(s.y, s.field));
      } else {
        const Shape d = *synthetic_image_;
        out.push_back(image_source(generate_image(d.channels, d.height, d.width, seed), config_.block));
      }
    }
    return out;
  }

  Source source() const { return sources(1).front(); }

  ModelSet models() const {
    if (config_.models_dir.empty()) return {};
    return load_models(config_.models_dir);
  }

  std::filesystem::path models_out() const {
    require(!config_.models_dir.empty(), ErrorKind::kInvalidArgument,
            "training commands need --models DIR");
    return config_.models_dir;
  }

  std::vector<std::uint8_t> input() const {
    require(!o_.input.empty(), ErrorKind::kInvalidArgument, "need --input");
    return read_file(o_.input);
  }

  void summary(const std::vector<std::pair<std::string, std::string>>& kv) {
    out_ << "command=" << name_;
    for (const auto& [k, v] : kv) out_ << ' ' << k << '=' << v;
    out_ << '\n';
  }

  int encode_cmd() {
    require(!o_.output.empty(), ErrorKind::kInvalidArgument, "encode needs --output");
    const Source s = source();
    const Encoded e = encode(s, config_, models());
    write_file(o_.output, e.bytes);
    summary({{"bytes", std::to_string(e.bytes.size())},
             {"bpp", num(8.0 * e.bytes.size() / pixel_count(s))},
             {"depth", std::to_string(e.container.header.depth)},
             {"chunks", std::to_string(e.container.symbols.chunks.size())},
             {"clamped", std::to_string(e.clamped)},
             {"checksum", hex(e.container.header.model_checksum)}});
    return kExitOk;
  }

  int decode_cmd() {
    const auto bytes = input();
    const Decoded d = decode_at(bytes, budget_, models(), {config_.use_cdr, config_.use_refit});
    if (!o_.output.empty()) {
      if (d.image) {
        write_pnm(o_.output, *d.image);
      } else {
        std::vector<std::uint8_t> raw;
        for (double v : d.latent.values())
          for (int i = 0; i < 8; ++i)
            raw.push_back(static_cast<std::uint8_t>(std::bit_cast<std::uint64_t>(v) >> (8 * i)));
        write_file(o_.output, raw);
      }
    }
    std::vector<std::pair<std::string, std::string>> kv = {
        {"bytes", std::to_string(d.bytes)},
        {"chunks", std::to_string(d.chunks)},
        {"level", num(d.level)}};
    if (has_source()) {
      const Source s = source();
      kv.push_back({"bpp", num(8.0 * d.bytes / pixel_count(s))});
      kv.push_back({"psnr", num(decoded_quality(s, d))});
    }
    summary(kv);
    return kExitOk;
  }

  int truncate_cmd() {
    require(!o_.output.empty(), ErrorKind::kInvalidArgument, "truncate needs --output");
    const Container c = parse(input());
    std::size_t keep = c.symbols.chunks.size();
    if (budget_.kind == Budget::Kind::kBytes) {
      keep = chunks_within(c, budget_.bytes);
    } else if (budget_.kind == Budget::Kind::kLevel) {
      ProgressiveDecoder d(c, models());
      d.advance(budget_);
      keep = d.chunks_decoded();
    }
    const auto bytes = serialize(truncate(c, keep));
    write_file(o_.output, bytes);
    summary({{"bytes", std::to_string(bytes.size())}, {"chunks", std::to_string(keep)}});
    return kExitOk;
  }

  std::vector<TrainingAsset> corpus() const {
    std::vector<TrainingAsset> out;
    for (const Source& s : sources(o_.assets)) out.push_back(training_asset(s));
    return out;
  }

  int train_crr_cmd() {
    const auto dir = models_out();
    const auto assets = corpus();
    const int depth = corpus_depth(assets, config_);
    const auto data = crr_dataset(assets, config_, depth);
    ModelSet set = std::filesystem::is_directory(dir) ? load_models(dir) : ModelSet{};
    set.bounds = config_.bounds;
    std::vector<std::pair<std::string, std::string>> kv = {{"depth", std::to_string(depth)}};
    for (int slot = 0; slot < 3; ++slot) {
      set.crr.slots[slot].reset();
      if (data[slot].empty()) continue;
      TrainOptions opt = config_.crr_train;
      opt.seed += static_cast<std::uint64_t>(slot);
      const CrrTrainResult r = train_crr(data[slot], config_.bounds, opt);
      set.crr.slots[slot] = r.model;
      const std::string p = "slot" + std::to_string(slot) + "_";
      kv.push_back({p + "ce", num(r.held_out_loss)});
      kv.push_back({p + "entropy", num(r.held_out_entropy)});
    }
    save_models(set, dir);
    summary(kv);
    return kExitOk;
  }

  int train_cdr_cmd() {
    const auto dir = models_out();
    const auto assets = corpus();
    const int depth = corpus_depth(assets, config_);
    ModelSet set = std::filesystem::is_directory(dir) ? load_models(dir) : ModelSet{};
    const CrrRouter* crr = config_.use_crr && !set.crr.empty() ? &set.crr : nullptr;
    CodecConfig c = config_;
    if (crr) c.bounds = set.bounds;
    const auto data = cdr_dataset(assets, c, depth, crr);
    std::vector<std::pair<std::string, std::string>> kv = {{"depth", std::to_string(depth)}};
    for (int slot = 0; slot < 3; ++slot) {
      CdrTrainOptions opt = config_.cdr_train;
      opt.seed += static_cast<std::uint64_t>(slot);
      const CdrTrainResult r = train_cdr(data, slot, opt);
      set.cdr.slots[slot] = r.model;
      const std::string p = "slot" + std::to_string(slot) + "_";
      kv.push_back({p + "refined", num(r.held_out_loss)});
      kv.push_back({p + "unrefined", num(r.held_out_unrefined)});
    }
    for (auto& s : set.crr.slots)
      if (!config_.use_crr) s.reset();
    save_models(set, dir);
    summary(kv);
    return kExitOk;
  }

  int refit_cmd() {
    const auto dir = models_out();
    require(config_.source == SourceMode::kImageLinear, ErrorKind::kInvalidArgument,
            "refit-decoder needs image sources");
    const auto assets = corpus();
    const int depth = corpus_depth(assets, config_);
    ModelSet set = std::filesystem::is_directory(dir) ? load_models(dir) : ModelSet{};
    const LinearTransform t(config_.block);
    const SynthesisWeights start = set.synthesis ? *set.synthesis : t.default_synthesis();
    const auto data = refit_dataset(assets, config_, depth, set);
    RefitReport rep;
    SynthesisWeights w = retrain_decoder(t, data, config_.refit_objective, start, &rep);
    w.round_to_float();
    set.synthesis = std::move(w);
    save_models(set, dir);
    summary({{"depth", std::to_string(depth)},
             {"iterations", std::to_string(rep.iterations)},
             {"objective_before", num(rep.objective_before)},
             {"objective_after", num(rep.objective_after)},
             {"ridge_fallback", rep.rank_deficient ? "1" : "0"}});
    return kExitOk;
  }

  int sweep_cmd() {
    const Source s = source();
    const ModelSet m = models();
    const Encoded e = encode(s, config_, m);
    const std::vector<Budget> budgets =
        budgets_.empty() ? log_spaced_budgets(e.bytes, o_.budget_count) : budgets_;
    const auto rows =
        sweep_stream(s, e.bytes, effective_models(m, config_, s.image_mode()), budgets);
    const std::string csv = sweep_csv(rows);
    if (o_.output.empty()) {
      out_ << csv;
    } else {
      const std::vector<std::uint8_t> b(csv.begin(), csv.end());
      write_file(o_.output, b);
    }
    summary({{"points", std::to_string(rows.size())}, {"bytes", std::to_string(e.bytes.size())}});
    return kExitOk;
  }

  int ablate_cmd() {
    const auto assets = sources(o_.assets);
    const ModelSet m = models();
    const auto methods = ablation_methods(assets.front().image_mode());
    const auto rows = ablation(assets, config_, m, methods, std::min(o_.budget_count, 24));
    out_ << ablation_table(rows);
    if (!o_.csv.empty()) {
      const std::string csv = ablation_csv(rows);
      write_file(o_.csv, std::vector<std::uint8_t>(csv.begin(), csv.end()));
    }
    std::vector<std::pair<std::string, std::string>> kv;
    for (const AblationRow& r : rows) kv.push_back({"bd_" + r.method, num(r.bd_rate)});
    summary(kv);
    return kExitOk;
  }

  int selftest_cmd() {
    const auto cases = run_selftest();
    int passed = 0;
    for (const SelftestCase& c : cases) {
      out_ << (c.passed ? "PASS " : "FAIL ") << c.name;
      if (!c.detail.empty()) out_ << " (" << c.detail << ')';
      out_ << '\n';
      passed += c.passed;
    }
    const int failed = static_cast<int>(cases.size()) - passed;
    summary({{"passed", std::to_string(passed)}, {"failed", std::to_string(failed)}});
    return failed == 0 ? kExitOk : kExitData;
  }

  Options o_;
  std::ostream& out_;
  std::string name_;
  CodecConfig config_;
  Budget budget_;
  std::vector<Budget> budgets_;
  std::optional<Shape> synthetic_;
  std::optional<Shape> synthetic_image_;
};

void common_flags(CLI::App* app, Options& o) {
  app->add_option("--config", o.config_path, "key=value codec configuration")->check(CLI::ExistingFile);
  app->add_option("--models", o.models_dir, "model directory");
  app->add_option("--seed", o.seed, "seed of synthetic assets and training");
  app->add_flag("--raster-order", o.raster, "serialize trits in raster order");
  app->add_flag("--no-crr", o.no_crr, "disable rate refinement");
  app->add_flag("--no-cdr", o.no_cdr, "disable distortion refinement");
  app->add_flag("--no-refit", o.no_refit, "use the original synthesis");
}

void source_flags(CLI::App* app, Options& o) {
  app->add_option("--image", o.images, "PGM/PPM input")->check(CLI::ExistingFile);
  app->add_option("--synthetic", o.synthetic, "AR(1) latent CxHxW");
  app->add_option("--synthetic-image", o.synthetic_image, "generated picture CxHxW");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Progressive trit-plane latent codec"};
  app.require_subcommand(1);
  Options o;

  auto* enc = app.add_subcommand("encode", "encode a source");
  common_flags(enc, o);
  source_flags(enc, o);
  enc->add_option("-o,--output", o.output, "stream path")->required();

  auto* dec = app.add_subcommand("decode", "decode a stream at a budget");
  common_flags(dec, o);
  source_flags(dec, o);
  dec->add_option("-i,--input", o.input, "stream path")->required()->check(CLI::ExistingFile);
  dec->add_option("-o,--output", o.output, "PGM/PPM in image mode, raw f64 latent otherwise");
  dec->add_option("--budget", o.budget, "full, bytes, or L<level>");

  auto* trunc = app.add_subcommand("truncate", "cut a stream down to a budget");
  common_flags(trunc, o);
  trunc->add_option("-i,--input", o.input, "stream path")->required()->check(CLI::ExistingFile);
  trunc->add_option("-o,--output", o.output, "truncated stream path")->required();
  trunc->add_option("--budget", o.budget, "full, bytes, or L<level>")->required();

  for (const char* name : {"train-crr", "train-cdr", "refit-decoder"}) {
    auto* t = app.add_subcommand(name, "train models into --models");
    common_flags(t, o);
    source_flags(t, o);
    t->add_option("--assets", o.assets, "number of seeded synthetic assets");
  }

  auto* sw = app.add_subcommand("sweep", "rate-quality sweep as CSV");
  common_flags(sw, o);
  source_flags(sw, o);
  sw->add_option("--budget", o.budget_list, "explicit budgets");
  sw->add_option("--budgets", o.budget_count, "number of log-spaced budgets");
  sw->add_option("-o,--output", o.output, "CSV path (default stdout)");

  auto* ab = app.add_subcommand("ablate", "BD-rates of the refinement toggles");
  common_flags(ab, o);
  source_flags(ab, o);
  ab->add_option("--assets", o.assets, "number of seeded synthetic assets");
  ab->add_option("--budgets", o.budget_count, "budgets per curve");
  ab->add_option("--csv", o.csv, "CSV report path");

  auto* st = app.add_subcommand("selftest", "run the invariant suite");
  (void)st;

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  Command cmd(o, out);
  try {
    cmd.prepare(app.get_subcommands().front()->get_name());
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::kInvalidArgument ? kExitUsage : kExitData;
  }
  try {
    return cmd.run();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    switch (e.kind()) {
      case ErrorKind::kInvalidArgument:
        return kExitUsage;
      case ErrorKind::kModelMismatch:
        return kExitModelMismatch;
      default:
        return kExitData;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace ctc
