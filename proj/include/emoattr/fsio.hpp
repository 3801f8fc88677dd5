#pragma once

#include <string>

namespace emoattr {

// Whole-file write via a temp file in the same directory plus rename, so
// readers never observe a partial file.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_text_file(const std::string& path);

}  // namespace emoattr
