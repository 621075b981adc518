/*
    Copyright (C) 2026 The Panoscope Authors

    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#include "panoscope/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

#include "panoscope/error.hpp"

namespace panoscope {

synth::SceneSpec default_scene() {
  synth::SceneSpec s;
  s.polyps.push_back({unfold::SurfacePoint{unfold::CubeId::A, unfold::Face::PosZ, 0.5, 0.55}, 0.08, 0.08, 0.5});
  s.spots = {4, 1.5, 4.0};
  s.noise_sigma = 0.01;
  return s;
}

void PipelineConfig::finalize() {
  scene.geometry = geometry;
  scene.intrinsics = calib;
  scene.seed = seed;
  scene.path = synth::pan_path(n_frames, pan_step, camera_z);
  train.seed = seed;
  dataset.seed = seed;
}

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& why) {
  throw Error(ErrorKind::Config, "config key '" + key + "': invalid value '" + value + "' (" + why + ")");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  T v{};
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) bad_value(key, text, "not a number");
  return v;
}

template <typename T>
std::string format_number(T v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Entry {
  ConfigKey info;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

std::string range_text(double lo, double hi, bool open_lo) {
  return std::string(open_lo ? "(" : "[") + format_number(lo) + ", " + format_number(hi) + "]";
}

template <typename T, typename Access>
Entry number(std::string key, Access acc, double lo, double hi, std::string status, std::string doc,
             bool open_lo = false) {
  Entry e{{key, std::move(status), range_text(lo, hi, open_lo), std::move(doc)}, {}, {}};
  e.set = [key, acc, lo, hi, open_lo](PipelineConfig& c, const std::string& v) {
    const T x = parse_number<T>(key, v);
    const double d = static_cast<double>(x);
    if (!(open_lo ? d > lo : d >= lo) || !(d <= hi)) bad_value(key, v, "outside " + range_text(lo, hi, open_lo));
    acc(c) = x;
  };
  e.get = [acc](const PipelineConfig& c) { return format_number(acc(const_cast<PipelineConfig&>(c))); };
  return e;
}

template <typename Access>
Entry real_list(std::string key, Access acc, double lo, double hi, std::string status, std::string doc,
                bool open_lo = false) {
  Entry e{{key, std::move(status), "comma list in " + range_text(lo, hi, open_lo), std::move(doc)}, {}, {}};
  e.set = [key, acc, lo, hi, open_lo](PipelineConfig& c, const std::string& v) {
    std::vector<double> out;
    for (const auto& item : split(v, ',')) {
      const double x = parse_number<double>(key, item);
      if (!(open_lo ? x > lo : x >= lo) || !(x <= hi)) bad_value(key, v, "element outside " + range_text(lo, hi, open_lo));
      out.push_back(x);
    }
    if (out.empty()) bad_value(key, v, "empty list");
    acc(c) = std::move(out);
  };
  e.get = [acc](const PipelineConfig& c) {
    std::string s;
    for (double x : acc(const_cast<PipelineConfig&>(c))) s += (s.empty() ? "" : ",") + format_number(x);
    return s;
  };
  return e;
}

std::optional<unfold::Face> parse_face(const std::string& s) {
  for (auto f : unfold::kFaces) {
    if (s == unfold::face_name(f)) return f;
  }
  return std::nullopt;
}

Entry polyp_entry() {
  Entry e{{"synth.polyps", "invented", "';'-separated 'cube face u v radius_u radius_v brightness'",
           "Polyps of the stitching scene; radii in world units"},
          {}, {}};
  e.set = [](PipelineConfig& c, const std::string& v) {
    std::vector<synth::Polyp> polyps;
    for (const auto& item : split(v, ';')) {
      std::istringstream ss(item);
      std::string cube, face;
      synth::Polyp p;
      ss >> cube >> face >> p.center.u >> p.center.v >> p.radius_u >> p.radius_v >> p.brightness;
      const auto f = parse_face(face);
      std::string rest;
      if (!ss || (cube != "A" && cube != "B") || !f || (ss >> rest)) bad_value("synth.polyps", item, "malformed polyp");
      if (p.center.u < 0.0 || p.center.u > 1.0 || p.center.v < 0.0 || p.center.v > 1.0 || !(p.radius_u > 0.0) ||
          !(p.radius_v > 0.0) || p.brightness < 0.0) {
        bad_value("synth.polyps", item, "uv must lie in [0,1] and radii be positive");
      }
      p.center.cube = cube == "A" ? unfold::CubeId::A : unfold::CubeId::B;
      p.center.face = *f;
      polyps.push_back(p);
    }
    c.scene.polyps = std::move(polyps);
  };
  e.get = [](const PipelineConfig& c) {
    std::ostringstream out;
    for (std::size_t i = 0; i < c.scene.polyps.size(); ++i) {
      const auto& p = c.scene.polyps[i];
      out << (i ? "; " : "") << unfold::cube_name(p.center.cube) << ' ' << unfold::face_name(p.center.face) << ' '
          << format_number(p.center.u) << ' ' << format_number(p.center.v) << ' ' << format_number(p.radius_u)
          << ' ' << format_number(p.radius_v) << ' ' << format_number(p.brightness);
    }
    return out.str();
  };
  return e;
}

template <typename Enum, typename Access>
Entry choice(std::string key, Access acc, std::vector<std::pair<std::string, Enum>> options, std::string status,
             std::string doc) {
  std::string names;
  for (const auto& [n, v] : options) names += (names.empty() ? "" : " | ") + n;
  Entry e{{key, std::move(status), names, std::move(doc)}, {}, {}};
  e.set = [key, acc, options, names](PipelineConfig& c, const std::string& v) {
    for (const auto& [n, x] : options) {
      if (trim(v) == n) {
        acc(c) = x;
        return;
      }
    }
    bad_value(key, v, "expected " + names);
  };
  e.get = [acc, options](const PipelineConfig& c) {
    for (const auto& [n, x] : options) {
      if (acc(const_cast<PipelineConfig&>(c)) == x) return n;
    }
    return std::string("?");
  };
  return e;
}

#define FIELD(expr) [](PipelineConfig& c) -> auto& { return c.expr; }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    constexpr double kBig = 1e9;
    std::vector<Entry> t;
    t.push_back(number<std::uint64_t>("seed", FIELD(seed), 0, 1.8e19, "invented", "Seed for every random stream"));

    t.push_back(number<double>("calib.fx", FIELD(calib.fx), 0, kBig, "invented", "Focal length x, px", true));
    t.push_back(number<double>("calib.fy", FIELD(calib.fy), 0, kBig, "invented", "Focal length y, px", true));
    t.push_back(number<double>("calib.cx", FIELD(calib.cx), 0, kBig, "invented", "Principal point x, px", true));
    t.push_back(number<double>("calib.cy", FIELD(calib.cy), 0, kBig, "invented", "Principal point y, px", true));
    t.push_back(number<double>("calib.k1", FIELD(calib.k1), -1, 1, "invented", "Radial coefficient of r^2"));
    t.push_back(number<double>("calib.k2", FIELD(calib.k2), -1, 1, "invented", "Radial coefficient of r^4"));

    t.push_back(number<int>("register.max_keypoints", FIELD(max_keypoints), 4, 100000, "invented",
                            "Harris corners kept per frame"));
    t.push_back(number<double>("register.match_ratio", FIELD(match_ratio), 0, 1, "invented",
                               "Nearest / second-nearest descriptor distance ratio", true));
    t.push_back(number<double>("register.harris_k", FIELD(harris.k), 0, 0.25, "invented", "Harris trace weight", true));
    t.push_back(number<double>("register.presmooth", FIELD(harris.presmooth), 0, 20, "invented",
                               "Gaussian sigma applied before corner detection, px"));
    t.push_back(number<int>("register.nms_radius", FIELD(harris.nms_radius), 1, 100, "invented",
                            "Corner suppression radius, px"));
    t.push_back(number<int>("register.root_patch", FIELD(hpft.root_size), 4, 4096, "invented",
                            "Side of the coarsest patch blocks, px"));
    t.push_back(number<int>("register.min_patch", FIELD(hpft.min_size), 2, 4096, "invented",
                            "Smallest patch side before subdivision stops, px"));
    t.push_back(number<double>("register.median_tolerance", FIELD(hpft.median_tolerance), 0, kBig, "invented",
                               "Median transfer error a patch homography must meet, px", true));
    t.push_back(number<double>("register.kl_threshold", FIELD(hpft.kl_threshold), 0, kBig, "invented",
                               "Symmetric KL bound for warped patch histograms", true));
    t.push_back(number<double>("register.inlier_tolerance", FIELD(hpft.inlier_tolerance), 0, kBig, "invented",
                               "Per-match transfer error bound, px", true));
    t.push_back(number<int>("register.min_fit_matches", FIELD(hpft.min_fit_matches), 4, 100000, "invented",
                            "Matches needed to fit a patch homography"));
    t.push_back(number<double>("register.consistent_fraction", FIELD(hpft.min_consistent_fraction), 0, 1,
                               "invented", "Share of patch matches that must agree with the patch homography"));
    t.push_back(number<double>("register.ransac_threshold", FIELD(hpft.ransac.inlier_threshold), 0, kBig, "invented",
                               "RANSAC inlier distance, px", true));
    t.push_back(number<int>("register.ransac_iterations", FIELD(hpft.ransac.iterations), 1, 1000000, "invented",
                            "RANSAC hypotheses"));

    t.push_back(number<double>("chain.tau_loop", FIELD(chain.tau_loop), 0, kBig, "invented",
                               "Loop residual accepted without filtering", true));
    t.push_back(number<std::size_t>("chain.min_matches", FIELD(chain.min_matches), 4, kBig, "invented",
                                    "Valid matches a link must keep"));
    t.push_back(number<int>("chain.max_removals", FIELD(chain.max_removals), 0, kBig, "invented",
                            "Upper bound on greedy removals"));
    t.push_back(number<double>("chain.inlier_threshold", FIELD(chain.ransac.inlier_threshold), 0, kBig, "invented",
                               "Symmetric transfer error separating consensus from flagged matches, px"));

    t.push_back(number<double>("fusion.beta", FIELD(fusion_beta), 0, kBig, "invented",
                               "Weight of the transform regularizer"));
    t.push_back(number<double>("fusion.presmooth", FIELD(seams.presmooth), 0, 20, "invented",
                               "Gaussian sigma of the frames compared by the seam term, pixels"));
    t.push_back(number<double>("fusion.saturation_level", FIELD(seams.saturation_level), 0, 1e9, "invented",
                               "Seam samples near values at or above this are dropped; above 255 disables"));
    t.push_back(number<int>("fusion.saturation_guard", FIELD(seams.saturation_guard), 0, 64, "invented",
                            "Guard radius around saturated pixels, pixels"));
    t.push_back(choice<fusion::WeightMode>("fusion.weight_mode", FIELD(seams.weight_mode),
                                           {{"uniform", fusion::WeightMode::Uniform},
                                            {"feather", fusion::WeightMode::Feather}},
                                           "invented", "Seam weight: constant or distance-to-border feather"));
    t.push_back(number<double>("fusion.feather_px", FIELD(seams.feather_px), 0, kBig, "invented",
                               "Feather ramp width, px", true));
    t.push_back(number<int>("fusion.seam_stride", FIELD(seams.stride), 1, 1000, "invented",
                            "Canvas stride between seam samples, px"));
    t.push_back(number<double>("fusion.seam_margin", FIELD(seams.margin), 0, kBig, "invented",
                               "Inward frame margin for seam samples, px"));
    t.push_back(number<double>("fusion.tol", FIELD(fusion.tol), 0, 1, "invented",
                               "Relative loss decrease that ends the alternation"));
    t.push_back(number<int>("fusion.max_rounds", FIELD(fusion.max_rounds), 1, 100000, "invented",
                            "Alternation rounds"));

    t.push_back(number<double>("unfold.edge_a", FIELD(geometry.edge_a), 0, kBig, "invented", "Cube A edge", true));
    t.push_back(number<double>("unfold.edge_b", FIELD(geometry.edge_b), 0, kBig, "invented", "Cube B edge", true));
    t.push_back(number<double>("unfold.offset", FIELD(geometry.offset), 0, kBig, "invented",
                               "Distance between cube centres along -Z", true));
    t.push_back(number<int>("unfold.face_px", FIELD(face_px), 1, 8192, "invented", "Atlas tile side, px"));

    t.push_back(real_list("detect.scales", FIELD(arch.scales), 0, kBig, "invented", "Anchor sides, px", true));
    t.push_back(real_list("detect.aspects", FIELD(arch.aspects), 0, kBig, "invented", "Anchor width/height ratios", true));
    t.push_back(number<int>("detect.channels1", FIELD(arch.channels[0]), 1, 1024, "invented", "Stage 1 width"));
    t.push_back(number<int>("detect.channels2", FIELD(arch.channels[1]), 1, 1024, "invented", "Stage 2 width"));
    t.push_back(number<int>("detect.channels3", FIELD(arch.channels[2]), 1, 1024, "invented", "Stage 3 width"));
    t.push_back(number<double>("detect.negative_ratio", FIELD(train.negative_ratio), 0, HUGE_VAL, "invented",
                               "Kept negatives per positive; inf keeps all (plain loss)", true));
    t.push_back(number<double>("detect.positive_iou", FIELD(train.thresholds.positive_iou), 0, 1, "paper",
                               "Anchor positive above this IOU"));
    t.push_back(number<double>("detect.negative_iou", FIELD(train.thresholds.negative_iou), 0, 1, "invented",
                               "Anchor negative below this IOU"));
    t.push_back(number<double>("detect.conf_threshold", FIELD(conf_threshold), 0, 1, "invented",
                               "Minimum confidence of an emitted detection"));
    t.push_back(number<double>("detect.nms_iou", FIELD(nms_iou), 0, 1, "invented", "Suppression overlap"));
    t.push_back(number<int>("detect.steps", FIELD(train.steps), 0, 10000000, "invented", "SGD steps"));
    t.push_back(number<int>("detect.batch_size", FIELD(train.batch_size), 1, 4096, "invented", "Images per step"));
    t.push_back(number<double>("detect.learning_rate", FIELD(train.learning_rate), 0, 10, "invented", "SGD step size"));
    t.push_back(number<double>("detect.momentum", FIELD(train.momentum), 0, 1, "invented", "SGD momentum"));
    t.push_back(number<double>("detect.weight_decay", FIELD(train.weight_decay), 0, 1, "invented", "L2 penalty"));
    t.push_back(number<double>("detect.box_weight", FIELD(train.box_weight), 0, kBig, "invented",
                               "Weight of the smooth-L1 box term"));

    t.push_back(number<int>("synth.frame_width", FIELD(scene.frame_width), 8, 8192, "invented", "Frame width, px"));
    t.push_back(number<int>("synth.frame_height", FIELD(scene.frame_height), 8, 8192, "invented", "Frame height, px"));
    t.push_back(number<int>("synth.n_frames", FIELD(n_frames), 1, 10000, "invented", "Poses on the sweep path"));
    t.push_back(number<double>("synth.pan_step", FIELD(pan_step), -kBig, kBig, "invented",
                               "Camera spacing along X, world units"));
    t.push_back(number<double>("synth.camera_z", FIELD(camera_z), -kBig, kBig, "invented",
                               "Camera depth along Z, world units"));
    t.push_back(number<double>("synth.noise_sigma", FIELD(scene.noise_sigma), 0, 1, "paper",
                               "Gaussian noise sigma as a fraction of 255"));
    t.push_back(number<int>("synth.spots", FIELD(scene.spots.count), 0, 10000, "invented", "Specular spots per frame"));
    t.push_back(number<double>("synth.spot_min_radius", FIELD(scene.spots.min_radius), 0, kBig, "invented",
                               "Smallest spot radius, px"));
    t.push_back(number<double>("synth.spot_max_radius", FIELD(scene.spots.max_radius), 0, kBig, "invented",
                               "Largest spot radius, px"));
    t.push_back(number<int>("synth.supersample", FIELD(scene.supersample), 1, 16, "invented",
                            "Render samples per pixel axis"));
    t.push_back(choice<synth::TexturePattern>("synth.texture", FIELD(scene.texture.pattern),
                                              {{"mottled", synth::TexturePattern::Mottled},
                                               {"checker", synth::TexturePattern::Checker}},
                                              "invented", "Procedural surface texture"));
    t.push_back(number<std::uint64_t>("synth.texture_seed", FIELD(scene.texture.seed), 0, 1.8e19, "invented",
                                      "Seed of the mottling lattice"));
    t.push_back(number<double>("synth.cell_size", FIELD(scene.texture.cell_size), 0, kBig, "invented",
                               "Coarsest mottling lattice spacing, world units", true));
    t.push_back(polyp_entry());

    t.push_back(number<int>("dataset.n_scenes", FIELD(dataset.n_scenes), 2, 1000000, "invented", "Scenes generated"));
    t.push_back(number<double>("dataset.train_fraction", FIELD(dataset.train_fraction), 0, 1, "invented",
                               "Share of scenes in the training split", true));
    t.push_back(real_list("dataset.augment_sigmas", FIELD(dataset.augment_sigmas), 0, 100, "invented",
                          "Gaussian smoothing sigmas applied to training images (0 keeps the original)"));
    t.push_back(number<int>("dataset.image_px", FIELD(dataset.image_px), 8, 4096, "invented", "Image side, px"));
    t.push_back(number<int>("dataset.min_polyps", FIELD(dataset.min_polyps), 0, 100, "invented", "Polyps per image, low"));
    t.push_back(number<int>("dataset.max_polyps", FIELD(dataset.max_polyps), 0, 100, "invented", "Polyps per image, high"));
    t.push_back(number<double>("dataset.min_radius", FIELD(dataset.min_radius), 0, 0.45, "invented",
                               "Smallest polyp semi-axis, fraction of the face", true));
    t.push_back(number<double>("dataset.max_radius", FIELD(dataset.max_radius), 0, 0.45, "invented",
                               "Largest polyp semi-axis, fraction of the face", true));
    t.push_back(number<double>("dataset.noise_sigma", FIELD(dataset.noise_sigma), 0, 1, "paper",
                               "Gaussian noise sigma as a fraction of 255"));
    t.push_back(number<int>("dataset.spots", FIELD(dataset.spots.count), 0, 10000, "invented", "Specular spots per image"));
    return t;
  }();
  return table;
}

#undef FIELD

const Entry* find_entry(const std::string& key) {
  for (const auto& e : entries()) {
    if (e.info.key == key) return &e;
  }
  return nullptr;
}

void validate(const PipelineConfig& c) {
  if (c.train.thresholds.negative_iou > c.train.thresholds.positive_iou) {
    throw Error(ErrorKind::Config, "detect.negative_iou must not exceed detect.positive_iou");
  }
  if (c.hpft.min_size > c.hpft.root_size) {
    throw Error(ErrorKind::Config, "register.min_patch must not exceed register.root_patch");
  }
  if (c.dataset.min_polyps > c.dataset.max_polyps || c.dataset.min_radius > c.dataset.max_radius) {
    throw Error(ErrorKind::Config, "dataset ranges must satisfy min <= max");
  }
  if (c.scene.spots.min_radius > c.scene.spots.max_radius) {
    throw Error(ErrorKind::Config, "synth.spot_min_radius must not exceed synth.spot_max_radius");
  }
  try {
    c.geometry.validate();
    c.calib.validate(c.scene.frame_width, c.scene.frame_height);
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, e.what());
  }
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& e : entries()) k.push_back(e.info);
    return k;
  }();
  return keys;
}

std::string config_value(const PipelineConfig& cfg, const std::string& key) {
  const Entry* e = find_entry(key);
  if (!e) throw Error(ErrorKind::Config, "unknown config key '" + key + "'");
  return e->get(cfg);
}

void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  const Entry* e = find_entry(key);
  if (!e) throw Error(ErrorKind::Config, "unknown config key '" + key + "'");
  e->set(cfg, value);
}

PipelineConfig parse_config(std::istream& in) {
  PipelineConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::Config, "line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  validate(cfg);
  cfg.finalize();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config file " + path.string());
  return parse_config(in);
}

void write_config(std::ostream& out, const PipelineConfig& cfg) {
  for (const auto& e : entries()) {
    out << "# " << e.info.doc << "; " << e.info.status << "; " << e.info.range << '\n';
    out << e.info.key << " = " << e.get(cfg) << '\n';
  }
}

}  // namespace panoscope
