#include "anglereloc/dataset_io.h"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "anglereloc/error.h"
#include "anglereloc/json_io.h"

namespace anglereloc {

namespace fs = std::filesystem;

namespace {

struct Token {
  std::string text;
  int line;
  int column;
};

// Whitespace-separated tokens per line, '#' comments stripped. Lines with
// no tokens are dropped.
std::vector<std::vector<Token>> Tokenize(const std::string& text) {
  std::vector<std::vector<Token>> lines;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line.resize(hash);
    }
    std::vector<Token> tokens;
    size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) {
        ++i;
      }
      const size_t start = i;
      while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) {
        ++i;
      }
      if (i > start) {
        tokens.push_back({line.substr(start, i - start), line_no,
                          static_cast<int>(start) + 1});
      }
    }
    if (!tokens.empty()) {
      lines.push_back(std::move(tokens));
    }
  }
  return lines;
}

[[noreturn]] void ThrowParse(const std::string& source, const Token& tok,
                             const std::string& what) {
  throw Error(ErrorCode::kParseError,
              source + ":" + std::to_string(tok.line) + ":" +
                  std::to_string(tok.column) + ": " + what + " (got '" +
                  tok.text + "')");
}

double ParseDouble(const std::string& source, const Token& tok) {
  double v = 0.0;
  const char* begin = tok.text.data();
  const char* end = begin + tok.text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) {
    ThrowParse(source, tok, "expected a number");
  }
  return v;
}

PointId ParseId(const std::string& source, const Token& tok) {
  PointId v = 0;
  const char* begin = tok.text.data();
  const char* end = begin + tok.text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) {
    ThrowParse(source, tok, "expected an integer id");
  }
  return v;
}

json IntrinsicsToJson(const CameraIntrinsics& c) {
  return {{"f", c.f}, {"cx", c.cx}, {"cy", c.cy}};
}

CameraIntrinsics JsonToIntrinsics(const json& j) {
  return {j.at("f").get<double>(), j.at("cx").get<double>(),
          j.at("cy").get<double>()};
}

std::string FrameStem(ImageId id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame-%06d", id);
  return buf;
}

std::string FormatDescriptors(const std::vector<Observation>& observations) {
  std::string out;
  for (const Observation& o : observations) {
    out += std::to_string(o.point);
    for (Eigen::Index k = 0; k < o.descriptor.size(); ++k) {
      out += ' ';
      out += FormatDouble(o.descriptor[k]);
    }
    out += '\n';
  }
  return out;
}

// Lines `k d1 ... dn`, returned in file order.
std::vector<std::pair<PointId, Descriptor>> ParseDescriptors(
    const std::string& text, const std::string& source) {
  std::vector<std::pair<PointId, Descriptor>> out;
  for (const auto& line : Tokenize(text)) {
    Descriptor d(static_cast<Eigen::Index>(line.size()) - 1);
    for (size_t k = 1; k < line.size(); ++k) {
      d[static_cast<Eigen::Index>(k) - 1] = ParseDouble(source, line[k]);
    }
    out.emplace_back(ParseId(source, line[0]), std::move(d));
  }
  return out;
}

}  // namespace

std::string FormatDouble(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string ReadTextFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteTextFile(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  }
  out << text;
  if (!out) {
    throw Error(ErrorCode::kIo, "write failed for " + path.string());
  }
}

PoseParseResult ParseSevenScenesPose(const std::string& text,
                                     const PoseParseOptions& options,
                                     const std::string& source) {
  const auto lines = Tokenize(text);
  if (lines.size() != 4) {
    throw Error(ErrorCode::kParseError,
                source + ": expected 4 rows, found " +
                    std::to_string(lines.size()));
  }
  Mat4 m;
  for (int r = 0; r < 4; ++r) {
    if (lines[r].size() != 4) {
      const Token& tok = lines[r].size() > 4 ? lines[r][4] : lines[r].back();
      ThrowParse(source, tok,
                 "expected 4 columns, found " + std::to_string(lines[r].size()));
    }
    for (int c = 0; c < 4; ++c) {
      m(r, c) = ParseDouble(source, lines[r][c]);
    }
  }
  const Eigen::RowVector4d last(0.0, 0.0, 0.0, 1.0);
  if ((m.row(3) - last).cwiseAbs().maxCoeff() > 1e-6) {
    ThrowParse(source, lines[3][0], "last row must be 0 0 0 1");
  }

  PoseParseResult result;
  Mat3 r = m.topLeftCorner<3, 3>();
  const PoseSE3 raw(r, m.topRightCorner<3, 1>());
  const double deviation = raw.OrthonormalityError();
  if (deviation > kNonRigidTolerance) {
    if (options.strict) {
      throw Error(ErrorCode::kNonRigid,
                  source + ": rotation block deviates from orthonormality by " +
                      FormatDouble(deviation));
    }
    result.warning = source + ": rotation block deviates from orthonormality by " +
                     FormatDouble(deviation) + "; projected to nearest rotation";
  }
  // Printed poses carry a few digits of rounding; anything beyond the pose
  // validity tolerance is projected.
  if (deviation > 1e-9) {
    r = NearestRotation(r);
  }
  result.pose = PoseSE3(r, m.topRightCorner<3, 1>());
  if (options.invert) {
    result.pose = result.pose.Inverse();
  }
  return result;
}

PoseParseResult ReadSevenScenesPose(const fs::path& path,
                                    const PoseParseOptions& options) {
  return ParseSevenScenesPose(ReadTextFile(path), options, path.string());
}

std::string FormatSevenScenesPose(const PoseSE3& pose) {
  const Mat4 m = pose.Matrix();
  std::string out;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      if (c > 0) out += ' ';
      out += FormatDouble(m(r, c));
    }
    out += '\n';
  }
  return out;
}

std::vector<Correspondence2D3D> ParseCorrespondences(const std::string& text,
                                                     const std::string& source) {
  std::vector<Correspondence2D3D> out;
  for (const auto& line : Tokenize(text)) {
    if (line.size() != 6) {
      ThrowParse(source, line.front(),
                 "expected `k x y X Y Z`, found " +
                     std::to_string(line.size()) + " fields");
    }
    Correspondence2D3D c;
    c.id = ParseId(source, line[0]);
    c.pixel = Vec2(ParseDouble(source, line[1]), ParseDouble(source, line[2]));
    c.world = Vec3(ParseDouble(source, line[3]), ParseDouble(source, line[4]),
                   ParseDouble(source, line[5]));
    out.push_back(c);
  }
  return out;
}

std::vector<Correspondence2D3D> ReadCorrespondences(const fs::path& path) {
  return ParseCorrespondences(ReadTextFile(path), path.string());
}

std::string FormatCorrespondences(
    const std::vector<Correspondence2D3D>& correspondences) {
  std::string out = "# k x y X Y Z\n";
  for (const auto& c : correspondences) {
    out += std::to_string(c.id) + ' ' + FormatDouble(c.pixel.x()) + ' ' +
           FormatDouble(c.pixel.y()) + ' ' + FormatDouble(c.world.x()) + ' ' +
           FormatDouble(c.world.y()) + ' ' + FormatDouble(c.world.z()) + '\n';
  }
  return out;
}

void WriteCorrespondences(const fs::path& path,
                          const std::vector<Correspondence2D3D>& correspondences) {
  WriteTextFile(path, FormatCorrespondences(correspondences));
}

void SaveDataset(const Dataset& ds, const fs::path& dir) {
  std::error_code ec;
  std::vector<std::string> subs = {"poses", "observations", "descriptors"};
  if (std::any_of(ds.frames.begin(), ds.frames.end(),
                  [](const DatasetFrame& f) { return f.image.has_value(); })) {
    subs.push_back("images");
  }
  for (const std::string& sub : subs) {
    fs::create_directories(dir / sub, ec);
    if (ec) {
      throw Error(ErrorCode::kIo,
                  "cannot create " + (dir / sub).string() + ": " + ec.message());
    }
  }

  json planes = json::array();
  for (const TexturedPlane& p : ds.scene.planes) {
    planes.push_back({{"origin", Vec3ToJson(p.origin)},
                      {"edge_u", Vec3ToJson(p.edge_u)},
                      {"edge_v", Vec3ToJson(p.edge_v)},
                      {"texture_seed", p.texture_seed}});
  }
  json frames = json::array();
  for (const DatasetFrame& f : ds.frames) {
    const std::string stem = FrameStem(f.id);
    json jf = {{"id", f.id},
               {"sequence_index", f.sequence_index},
               {"split", SplitName(f.split)},
               {"pose", "poses/" + stem + ".pose.txt"},
               {"observations", "observations/" + stem + ".txt"},
               {"descriptors", "descriptors/" + stem + ".txt"}};
    WriteTextFile(dir / "poses" / (stem + ".pose.txt"),
                  FormatSevenScenesPose(f.pose));
    std::vector<Correspondence2D3D> obs;
    obs.reserve(f.observations.size());
    for (const Observation& o : f.observations) {
      obs.push_back({o.point, o.pixel, o.gt_world});
    }
    WriteCorrespondences(dir / "observations" / (stem + ".txt"), obs);
    WriteTextFile(dir / "descriptors" / (stem + ".txt"),
                  FormatDescriptors(f.observations));
    if (f.image) {
      const std::string name =
          stem + (f.image->channels == 1 ? ".pgm" : ".ppm");
      WritePnm(dir / "images" / name, *f.image);
      jf["image"] = "images/" + name;
    }
    frames.push_back(std::move(jf));
  }

  std::string points;
  for (size_t i = 0; i < ds.scene.points.size(); ++i) {
    const Vec3& p = ds.scene.points[i];
    points += std::to_string(ds.scene.ids[i]) + ' ' + FormatDouble(p.x()) +
              ' ' + FormatDouble(p.y()) + ' ' + FormatDouble(p.z()) + '\n';
  }
  WriteTextFile(dir / "scene_points.txt", points);
  std::vector<Observation> scene_desc(ds.scene.ids.size());
  for (size_t i = 0; i < ds.scene.ids.size(); ++i) {
    scene_desc[i].point = ds.scene.ids[i];
    scene_desc[i].descriptor = ds.scene.descriptors[i];
  }
  WriteTextFile(dir / "scene_descriptors.txt", FormatDescriptors(scene_desc));
  std::string covis;
  for (PointId id : ds.covis_points) {
    covis += std::to_string(id) + '\n';
  }
  WriteTextFile(dir / "covis_points.txt", covis);

  const json manifest = {
      {"schema_version", Dataset::kSchemaVersion},
      {"config", json(ds.config)},
      {"intrinsics", IntrinsicsToJson(ds.intr)},
      {"width", ds.width},
      {"height", ds.height},
      {"image_intrinsics", IntrinsicsToJson(ds.image_intr)},
      {"image_width", ds.image_width},
      {"image_height", ds.image_height},
      {"grid_aligned", ds.grid_aligned},
      {"scene",
       {{"diameter", ds.scene.diameter},
        {"bounds_min", Vec3ToJson(ds.scene.bounds.min)},
        {"bounds_max", Vec3ToJson(ds.scene.bounds.max)},
        {"planes", planes}}},
      {"frames", frames}};
  WriteTextFile(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset LoadDataset(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(ReadTextFile(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError,
                (dir / "manifest.json").string() + ": " + e.what());
  }
  Dataset ds;
  try {
    const int version = manifest.at("schema_version").get<int>();
    if (version != Dataset::kSchemaVersion) {
      throw Error(ErrorCode::kParseError,
                  "unsupported dataset schema version " + std::to_string(version));
    }
    ds.config = manifest.at("config").get<DatasetConfig>();
    ds.intr = JsonToIntrinsics(manifest.at("intrinsics"));
    ds.width = manifest.at("width").get<int>();
    ds.height = manifest.at("height").get<int>();
    ds.image_intr = JsonToIntrinsics(manifest.at("image_intrinsics"));
    ds.image_width = manifest.at("image_width").get<int>();
    ds.image_height = manifest.at("image_height").get<int>();
    ds.grid_aligned = manifest.at("grid_aligned").get<bool>();
    const json& scene = manifest.at("scene");
    ds.scene.diameter = scene.at("diameter").get<double>();
    ds.scene.bounds.min = JsonToVec3(scene.at("bounds_min"));
    ds.scene.bounds.max = JsonToVec3(scene.at("bounds_max"));
    for (const json& jp : scene.at("planes")) {
      TexturedPlane p;
      p.origin = JsonToVec3(jp.at("origin"));
      p.edge_u = JsonToVec3(jp.at("edge_u"));
      p.edge_v = JsonToVec3(jp.at("edge_v"));
      p.texture_seed = jp.at("texture_seed").get<std::uint64_t>();
      ds.scene.planes.push_back(p);
    }

    const fs::path points_path = dir / "scene_points.txt";
    for (const auto& line : Tokenize(ReadTextFile(points_path))) {
      if (line.size() != 4) {
        ThrowParse(points_path.string(), line.front(), "expected `k X Y Z`");
      }
      ds.scene.ids.push_back(ParseId(points_path.string(), line[0]));
      ds.scene.points.emplace_back(ParseDouble(points_path.string(), line[1]),
                                   ParseDouble(points_path.string(), line[2]),
                                   ParseDouble(points_path.string(), line[3]));
    }
    const fs::path scene_desc_path = dir / "scene_descriptors.txt";
    for (auto& [id, d] :
         ParseDescriptors(ReadTextFile(scene_desc_path), scene_desc_path.string())) {
      ds.scene.descriptors.push_back(std::move(d));
    }
    const fs::path covis_path = dir / "covis_points.txt";
    for (const auto& line : Tokenize(ReadTextFile(covis_path))) {
      ds.covis_points.push_back(ParseId(covis_path.string(), line.front()));
    }

    for (const json& jf : manifest.at("frames")) {
      DatasetFrame f;
      f.id = jf.at("id").get<int>();
      f.sequence_index = jf.at("sequence_index").get<int>();
      f.split = ParseSplit(jf.at("split").get<std::string>());
      f.pose = ReadSevenScenesPose(dir / jf.at("pose").get<std::string>()).pose;
      const auto obs =
          ReadCorrespondences(dir / jf.at("observations").get<std::string>());
      const fs::path desc_path = dir / jf.at("descriptors").get<std::string>();
      auto descs = ParseDescriptors(ReadTextFile(desc_path), desc_path.string());
      if (descs.size() != obs.size()) {
        throw Error(ErrorCode::kParseError,
                    desc_path.string() + ": descriptor count does not match "
                                         "observations");
      }
      for (size_t i = 0; i < obs.size(); ++i) {
        if (descs[i].first != obs[i].id) {
          throw Error(ErrorCode::kParseError,
                      desc_path.string() + ": descriptor ids out of order");
        }
        Observation o;
        o.point = obs[i].id;
        o.pixel = obs[i].pixel;
        o.gt_world = obs[i].world;
        o.gt_depth = WorldToCamera(f.pose, o.gt_world).z();
        o.descriptor = std::move(descs[i].second);
        f.observations.push_back(std::move(o));
      }
      if (jf.contains("image")) {
        f.image = ReadPnm(dir / jf.at("image").get<std::string>());
      }
      ds.frames.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError,
                (dir / "manifest.json").string() + ": " + e.what());
  }
  return ds;
}

}  // namespace anglereloc
