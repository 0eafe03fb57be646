#pragma once

#include "tsasr/mixer/mixer.hpp"

#include <filesystem>

namespace tsasr {

/// Writes `<dir>/manifest.txt` (corpus spec, split sizes, one line per mixture
/// example) plus one versioned binary file per split. Output bytes depend only
/// on the corpus contents.
void save_corpus(const std::filesystem::path& dir, const Corpus& corpus);

/// Throws ConfigError when the directory or manifest is missing and
/// FormatError on a corrupt split file.
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace tsasr
