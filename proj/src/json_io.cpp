#include "json_io.hpp"

#include <fstream>
#include <sstream>

#include "skinrf/error.hpp"

namespace skinrf::jsonio {

void Reader::fail(const std::string& what) const { throw ParseError(path_ + ": " + what); }

Reader Reader::operator[](std::string_view key) const {
  if (!j_->is_object()) fail("expected an object");
  const auto it = j_->find(key);
  if (it == j_->end()) throw ParseError(path_ + "." + std::string(key) + ": missing required field");
  return Reader(*it, path_ + "." + std::string(key));
}

std::optional<Reader> Reader::optional(std::string_view key) const {
  if (!j_->is_object()) fail("expected an object");
  const auto it = j_->find(key);
  if (it == j_->end()) return std::nullopt;
  return Reader(*it, path_ + "." + std::string(key));
}

Reader Reader::at(std::size_t i) const {
  if (!j_->is_array()) fail("expected an array");
  if (i >= j_->size()) fail("index " + std::to_string(i) + " out of range");
  return Reader((*j_)[i], path_ + "[" + std::to_string(i) + "]");
}

std::size_t Reader::size() const {
  if (!j_->is_array()) fail("expected an array");
  return j_->size();
}

double Reader::number() const {
  if (!j_->is_number()) fail("expected a number");
  return j_->get<double>();
}

int Reader::integer() const {
  if (!j_->is_number_integer()) fail("expected an integer");
  return j_->get<int>();
}

long long Reader::integer64() const {
  if (!j_->is_number_integer()) fail("expected an integer");
  return j_->get<long long>();
}

bool Reader::boolean() const {
  if (!j_->is_boolean()) fail("expected true or false");
  return j_->get<bool>();
}

std::string Reader::string() const {
  if (!j_->is_string()) fail("expected a string");
  return j_->get<std::string>();
}

std::vector<double> Reader::numbers(std::size_t expected) const {
  const std::size_t n = size();
  if (expected && n != expected) fail("expected " + std::to_string(expected) + " numbers, got " + std::to_string(n));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = at(i).number();
  return out;
}

std::vector<int> Reader::integers() const {
  std::vector<int> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i).integer();
  return out;
}

Vec3 Reader::vec3() const {
  const auto v = numbers(3);
  return {v[0], v[1], v[2]};
}

Mat3 Reader::mat3() const {
  const auto v = numbers(9);
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m(r, c) = v[static_cast<std::size_t>(3 * r + c)];
  }
  return m;
}

double Reader::number_or(std::string_view key, double fallback) const {
  const auto r = optional(key);
  return r ? r->number() : fallback;
}
int Reader::integer_or(std::string_view key, int fallback) const {
  const auto r = optional(key);
  return r ? r->integer() : fallback;
}
bool Reader::boolean_or(std::string_view key, bool fallback) const {
  const auto r = optional(key);
  return r ? r->boolean() : fallback;
}
std::string Reader::string_or(std::string_view key, const std::string& fallback) const {
  const auto r = optional(key);
  return r ? r->string() : fallback;
}

json parse(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(source + ": " + e.what());
  }
}

json read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json to_json(const Mat3& m) {
  json a = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
  }
  return a;
}

json to_json(const Se3& t) { return {{"rotation", to_json(t.rotation)}, {"translation", to_json(t.translation)}}; }

json to_json(const Pose& p) {
  json joints = json::array();
  for (const Vec3& r : p.joint_rotations) joints.push_back(to_json(r));
  return {{"root", to_json(p.root)}, {"joints", joints}};
}

json to_json(const Skeleton& s) {
  json offsets = json::array();
  for (const Se3& o : s.rest_offsets) offsets.push_back(to_json(o));
  return {{"parents", s.parents}, {"rest_offsets", offsets}};
}

json to_json(const Camera& c) {
  return {{"fx", c.fx},         {"fy", c.fy},         {"cx", c.cx},
          {"cy", c.cy},         {"width", c.width},   {"height", c.height},
          {"world_to_camera", to_json(c.world_to_camera)}};
}

Se3 se3_from(const Reader& r) {
  Se3 t;
  t.rotation = r["rotation"].mat3();
  t.translation = r["translation"].vec3();
  if (!t.is_valid()) r["rotation"].fail("not a proper rotation matrix");
  return t;
}

Pose pose_from(const Reader& r, int part_count) {
  Pose p;
  p.root = se3_from(r["root"]);
  const Reader joints = r["joints"];
  if (static_cast<int>(joints.size()) != part_count) {
    joints.fail("expected " + std::to_string(part_count) + " joint rotations, got " + std::to_string(joints.size()));
  }
  for (std::size_t i = 0; i < joints.size(); ++i) p.joint_rotations.push_back(joints.at(i).vec3());
  try {
    p.validate(part_count);
  } catch (const Error& e) {
    r.fail(e.what());
  }
  return p;
}

Skeleton skeleton_from(const Reader& r) {
  Skeleton s;
  s.parents = r["parents"].integers();
  const Reader offsets = r["rest_offsets"];
  if (offsets.size() != s.parents.size()) offsets.fail("one rest offset per part is required");
  for (std::size_t i = 0; i < offsets.size(); ++i) s.rest_offsets.push_back(se3_from(offsets.at(i)));
  try {
    s.validate();
  } catch (const Error& e) {
    r.fail(e.what());
  }
  return s;
}

Camera camera_from(const Reader& r) {
  Camera c;
  c.fx = r["fx"].number();
  c.fy = r["fy"].number();
  c.cx = r["cx"].number();
  c.cy = r["cy"].number();
  c.width = r["width"].integer();
  c.height = r["height"].integer();
  c.world_to_camera = se3_from(r["world_to_camera"]);
  try {
    c.validate();
  } catch (const Error& e) {
    r.fail(e.what());
  }
  return c;
}

}  // namespace skinrf::jsonio
