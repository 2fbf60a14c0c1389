#pragma once

#include <filesystem>
#include <fstream>
#include <string>

namespace phenoeval::detail {

// Drops a torn final line of an append-only JSONL file so the next append
// starts on a fresh line.
inline void truncate_torn_tail(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) return;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec || size == 0) return;
  std::string text(size, '\0');
  {
    std::ifstream in(path, std::ios::binary);
    in.read(text.data(), static_cast<std::streamsize>(size));
  }
  if (text.back() == '\n') return;
  const auto last = text.rfind('\n');
  std::filesystem::resize_file(path, last == std::string::npos ? 0 : last + 1, ec);
}

}  // namespace phenoeval::detail
