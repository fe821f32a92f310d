#pragma once

#include "satcalc/model.hpp"

#include <filesystem>

namespace satcalc {

// Layout: config.txt (key=value), params.tsv (name<TAB>relative path) and
// one float32 SATC tensor per trainable group under params/. The frozen
// backbone is rebuilt from the config on load.
void save_checkpoint(const std::filesystem::path& dir, const ModelParams& m);
ModelParams load_checkpoint(const std::filesystem::path& dir);

} // namespace satcalc
