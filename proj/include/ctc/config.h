#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "ctc/cdr.h"
#include "ctc/crr.h"
#include "ctc/latent_model.h"
#include "ctc/transform.h"
#include "ctc/tritplane.h"

namespace ctc {

enum class SourceMode { kSyntheticLatent, kImageLinear };

struct CodecConfig {
  int max_depth = kDefaultMaxDepth;
  int fixed_depth = 0;  // 0 picks the depth from the data
  std::uint32_t chunk_size = 1024;
  TemperatureBounds bounds;
  OrderMode order = OrderMode::kRdPriority;
  bool raw_priority = false;
  ParamMode param_mode = ParamMode::kPerChannel;
  SourceMode source = SourceMode::kSyntheticLatent;
  int block = 8;

  bool use_crr = true;
  bool use_cdr = true;
  bool use_refit = true;
  RefitObjective refit_objective = RefitObjective::kNorm;

  TrainOptions crr_train;
  CdrTrainOptions cdr_train;
  std::filesystem::path models_dir;

  void validate() const;
  std::string to_text() const;

  // key=value lines; '#' starts a comment. Unknown keys are errors.
  static CodecConfig parse(std::string_view text);
  static CodecConfig load(const std::filesystem::path& path);
};

}  // namespace ctc
