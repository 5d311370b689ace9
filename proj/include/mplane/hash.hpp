#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace mplane {

/// SHA-1 of "blob <size>\0<content>" in lowercase hex, as `git hash-object` prints it.
std::string git_blob_hash(std::string_view content);
std::string hash_file(const std::filesystem::path& file);
/// Hash over the sorted "<blob hash> <relative path>" lines of every regular file below `dir`.
std::string hash_tree(const std::filesystem::path& dir);

}  // namespace mplane
