#pragma once

// JSON helpers shared by the scene, checkpoint and config readers. Every read goes through
// Reader, which remembers the JSON path so parse errors can say where they happened.

#include <json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "skinrf/kinematics.hpp"
#include "skinrf/renderer.hpp"

namespace skinrf::jsonio {

using nlohmann::json;

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(&j), path_(std::move(path)) {}

  Reader operator[](std::string_view key) const;
  std::optional<Reader> optional(std::string_view key) const;
  bool has(std::string_view key) const { return j_->is_object() && j_->contains(key); }
  Reader at(std::size_t i) const;
  std::size_t size() const;  // array length

  double number() const;
  int integer() const;
  long long integer64() const;
  bool boolean() const;
  std::string string() const;
  std::vector<double> numbers(std::size_t expected = 0) const;  // 0 = any length
  std::vector<int> integers() const;
  Vec3 vec3() const;
  Mat3 mat3() const;  // nine numbers, row-major

  // Convenience for optional scalars with defaults.
  double number_or(std::string_view key, double fallback) const;
  int integer_or(std::string_view key, int fallback) const;
  bool boolean_or(std::string_view key, bool fallback) const;
  std::string string_or(std::string_view key, const std::string& fallback) const;

  const json& raw() const { return *j_; }
  const std::string& path() const { return path_; }
  [[noreturn]] void fail(const std::string& what) const;

 private:
  const json* j_;
  std::string path_;
};

// Parses text, reporting syntax errors with the source name.
json parse(const std::string& text, const std::string& source);
json read_file(const std::string& path);

json to_json(const Vec3& v);
json to_json(const Mat3& m);
json to_json(const Se3& t);
json to_json(const Pose& p);
json to_json(const Skeleton& s);
json to_json(const Camera& c);

Se3 se3_from(const Reader& r);
Pose pose_from(const Reader& r, int part_count);
Skeleton skeleton_from(const Reader& r);
Camera camera_from(const Reader& r);

}  // namespace skinrf::jsonio
