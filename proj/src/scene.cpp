#include "skinrf/scene.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json_io.hpp"
#include "skinrf/error.hpp"

namespace skinrf {

namespace fs = std::filesystem;
using jsonio::json;
using jsonio::Reader;

const Frame* SceneDataset::find(int frame, int camera) const {
  for (const Frame& f : frames) {
    if (f.index == frame && f.camera == camera) return &f;
  }
  return nullptr;
}

void SceneDataset::validate() const {
  const int k = body.skeleton.part_count();
  body.skeleton.validate();
  body.mesh.validate();
  if (body.mesh.part_count() != k) {
    throw StructuralError("template weights have " + std::to_string(body.mesh.part_count()) + " parts, skeleton has " +
                          std::to_string(k));
  }
  for (const Camera& c : cameras) c.validate();
  for (const Pose& p : poses) p.validate(k);
  for (const Frame& f : frames) {
    const std::string where = "frame " + std::to_string(f.index) + " camera " + std::to_string(f.camera);
    if (f.camera < 0 || f.camera >= static_cast<int>(cameras.size())) throw StructuralError(where + ": unknown camera");
    if (f.index < 0 || f.index >= frame_count()) throw StructuralError(where + ": no pose for this frame");
    const Camera& cam = cameras[static_cast<std::size_t>(f.camera)];
    if (f.image.width != cam.width || f.image.height != cam.height || f.image.channels != 3) {
      throw StructuralError(where + ": image does not match the camera resolution");
    }
    if (!f.mask.same_shape(Image(cam.width, cam.height, 1))) throw StructuralError(where + ": mask has the wrong shape");
  }
  auto check = [](const std::vector<int>& ids, int limit, const char* what) {
    for (const int i : ids) {
      if (i < 0 || i >= limit) throw StructuralError(std::string("split references unknown ") + what + " " + std::to_string(i));
    }
  };
  check(split.train_cameras, static_cast<int>(cameras.size()), "camera");
  check(split.test_cameras, static_cast<int>(cameras.size()), "camera");
  check(split.train_frames, frame_count(), "frame");
  check(split.test_frames, frame_count(), "frame");
}

void write_obj(const fs::path& path, const TriangleMesh& mesh) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  for (const Vec3& v : mesh.vertices) std::fprintf(f, "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
  for (const Face& t : mesh.faces) std::fprintf(f, "f %d %d %d\n", t[0] + 1, t[1] + 1, t[2] + 1);
  std::fclose(f);
}

TriangleMesh read_obj(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open mesh " + path.string());
  TriangleMesh mesh;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z())) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad vertex");
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      Face face;
      for (int& idx : face) {
        std::string tok;
        if (!(ls >> tok)) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": faces must be triangles");
        idx = std::stoi(tok.substr(0, tok.find('/'))) - 1;
        if (idx < 0 || idx >= static_cast<int>(mesh.vertices.size())) {
          throw ParseError(path.string() + ":" + std::to_string(line_no) + ": face index out of range");
        }
      }
      std::string extra;
      if (ls >> extra) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": faces must be triangles");
      mesh.faces.push_back(face);
    }
  }
  return mesh;
}

void save_template(const BodyModel& body, const fs::path& obj_path, const fs::path& sidecar_path) {
  write_obj(obj_path, body.mesh.triangle_mesh());
  json weights = json::array();
  for (Eigen::Index v = 0; v < body.mesh.vertex_weights.rows(); ++v) {
    json row = json::array();
    for (Eigen::Index k = 0; k < body.mesh.vertex_weights.cols(); ++k) row.push_back(body.mesh.vertex_weights(v, k));
    weights.push_back(row);
  }
  json side = {{"part_count", body.skeleton.part_count()},
               {"part_names", body.part_names},
               {"skeleton", jsonio::to_json(body.skeleton)},
               {"vertex_weights", weights}};
  std::ofstream out(sidecar_path, std::ios::binary);
  if (!out) throw Error("cannot open " + sidecar_path.string() + " for writing");
  out << side.dump(1) << "\n";
}

BodyModel load_template(const fs::path& obj_path, const fs::path& sidecar_path) {
  BodyModel body;
  const TriangleMesh mesh = read_obj(obj_path);
  body.mesh.vertices = mesh.vertices;
  body.mesh.faces = mesh.faces;
  const json side = jsonio::read_file(sidecar_path.string());
  const Reader r(side, "$");
  body.skeleton = jsonio::skeleton_from(r["skeleton"]);
  const int k = r["part_count"].integer();
  if (k != body.skeleton.part_count()) r["part_count"].fail("does not match the skeleton");
  if (const auto names = r.optional("part_names")) {
    for (std::size_t i = 0; i < names->size(); ++i) body.part_names.push_back(names->at(i).string());
  }
  const Reader weights = r["vertex_weights"];
  if (weights.size() != body.mesh.vertices.size()) {
    weights.fail(std::to_string(weights.size()) + " rows for " + std::to_string(body.mesh.vertices.size()) + " vertices");
  }
  body.mesh.vertex_weights.resize(static_cast<Eigen::Index>(weights.size()), k);
  for (std::size_t v = 0; v < weights.size(); ++v) {
    const auto row = weights.at(v).numbers(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) body.mesh.vertex_weights(static_cast<Eigen::Index>(v), j) = row[static_cast<std::size_t>(j)];
  }
  try {
    body.mesh.validate();
  } catch (const Error& e) {
    throw ParseError(sidecar_path.string() + ": " + e.what());
  }
  return body;
}

SceneDataset load_scene(const fs::path& dir) {
  const json doc = jsonio::read_file((dir / "scene.json").string());
  const Reader r(doc, "$");
  const int version = r["schema_version"].integer();
  if (version != kSceneSchemaVersion) r["schema_version"].fail("unsupported schema version " + std::to_string(version));

  SceneDataset s;
  const Reader tmpl = r["template"];
  s.body = load_template(dir / tmpl["mesh"].string(), dir / tmpl["sidecar"].string());
  const Skeleton skel = jsonio::skeleton_from(r["skeleton"]);
  if (skel.parents != s.body.skeleton.parents) r["skeleton"].fail("does not match the template sidecar");
  s.body.skeleton = skel;
  const int k = skel.part_count();

  const Reader cams = r["cameras"];
  for (std::size_t i = 0; i < cams.size(); ++i) s.cameras.push_back(jsonio::camera_from(cams.at(i)));
  const Reader poses = r["poses"];
  for (std::size_t i = 0; i < poses.size(); ++i) s.poses.push_back(jsonio::pose_from(poses.at(i), k));

  const Reader frames = r["frames"];
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Reader fr = frames.at(i);
    Frame f;
    f.index = fr["frame"].integer();
    f.camera = fr["camera"].integer();
    if (f.index < 0 || f.index >= static_cast<int>(s.poses.size())) fr["frame"].fail("no pose for this frame");
    if (f.camera < 0 || f.camera >= static_cast<int>(s.cameras.size())) fr["camera"].fail("unknown camera");
    f.image_path = fr["image"].string();
    f.mask_path = fr["mask"].string();
    const std::string where = "frame " + std::to_string(f.index) + " (camera " + std::to_string(f.camera) + ")";
    if (!fs::exists(dir / f.image_path)) throw ParseError(fr.path() + ": image for " + where + " not found: " + f.image_path);
    if (!fs::exists(dir / f.mask_path)) throw ParseError(fr.path() + ": mask for " + where + " not found: " + f.mask_path);
    f.image = read_png(dir / f.image_path, 3);
    f.mask = read_png(dir / f.mask_path, 1);
    const Camera& cam = s.cameras[static_cast<std::size_t>(f.camera)];
    if (f.image.width != cam.width || f.image.height != cam.height || f.mask.width != cam.width ||
        f.mask.height != cam.height) {
      throw ParseError(fr.path() + ": image or mask size for " + where + " differs from the camera resolution");
    }
    s.frames.push_back(std::move(f));
  }

  const Reader split = r["split"];
  s.split.train_cameras = split["train_cameras"].integers();
  s.split.test_cameras = split["test_cameras"].integers();
  s.split.train_frames = split["train_frames"].integers();
  s.split.test_frames = split["test_frames"].integers();
  try {
    s.validate();
  } catch (const StructuralError& e) {
    throw ParseError((dir / "scene.json").string() + ": " + e.what());
  }
  return s;
}

void save_scene(const SceneDataset& scene, const fs::path& dir) {
  scene.validate();
  fs::create_directories(dir);
  save_template(scene.body, dir / "template.obj", dir / "template.json");

  json cams = json::array();
  for (const Camera& c : scene.cameras) cams.push_back(jsonio::to_json(c));
  json poses = json::array();
  for (const Pose& p : scene.poses) poses.push_back(jsonio::to_json(p));
  json frames = json::array();
  for (const Frame& f : scene.frames) {
    frames.push_back({{"frame", f.index}, {"camera", f.camera}, {"image", f.image_path}, {"mask", f.mask_path}});
    for (const std::string* rel : {&f.image_path, &f.mask_path}) {
      const fs::path parent = (dir / *rel).parent_path();
      if (!parent.empty()) fs::create_directories(parent);
    }
    write_png(dir / f.image_path, f.image);
    write_png(dir / f.mask_path, f.mask);
  }
  json doc = {{"schema_version", kSceneSchemaVersion},
              {"template", {{"mesh", "template.obj"}, {"sidecar", "template.json"}}},
              {"skeleton", jsonio::to_json(scene.body.skeleton)},
              {"cameras", cams},
              {"poses", poses},
              {"frames", frames},
              {"split",
               {{"train_cameras", scene.split.train_cameras},
                {"test_cameras", scene.split.test_cameras},
                {"train_frames", scene.split.train_frames},
                {"test_frames", scene.split.test_frames}}}};
  std::ofstream out(dir / "scene.json", std::ios::binary);
  if (!out) throw Error("cannot write " + (dir / "scene.json").string());
  out << doc.dump(1) << "\n";
}

std::vector<Pose> load_poses(const fs::path& path, int part_count) {
  const json j = jsonio::read_file(path.string());
  const Reader r(j, "$");
  const Reader poses = r["poses"];
  std::vector<Pose> out;
  for (std::size_t i = 0; i < poses.size(); ++i) out.push_back(jsonio::pose_from(poses.at(i), part_count));
  return out;
}

void save_poses(const std::vector<Pose>& poses, const fs::path& path) {
  json list = json::array();
  for (const Pose& p : poses) list.push_back(jsonio::to_json(p));
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << json{{"poses", list}}.dump(1) << "\n";
}

}  // namespace skinrf
