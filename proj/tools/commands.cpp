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

#include "commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "panoscope/chain.hpp"
#include "panoscope/error.hpp"
#include "panoscope/fusion.hpp"
#include "panoscope/image_io.hpp"
#include "panoscope/register.hpp"
#include "panoscope/synth.hpp"
#include "panoscope/unfold.hpp"

namespace panoscope::cli {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + p.string());
  return out;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + p.string());
  return in;
}

std::string numbered(const char* stem, std::size_t k, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu%s", stem, k, ext);
  return buf;
}

void write_homography_line(std::ostream& out, std::size_t from, std::size_t to, const Homography& h) {
  out << from << ' ' << to;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out << ' ' << h.matrix()(r, c);
  }
  out << '\n';
}

struct PairHomography {
  std::size_t from = 0;
  std::size_t to = 0;
  Homography h;
};

std::vector<PairHomography> read_homographies(const fs::path& p) {
  std::ifstream in = open_in(p);
  std::vector<PairHomography> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    PairHomography ph;
    Eigen::Matrix3d m;
    ss >> ph.from >> ph.to;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) ss >> m(r, c);
    }
    if (!ss) throw Error(ErrorKind::Decode, "malformed homography record in " + p.string());
    ph.h = Homography(m);
    out.push_back(ph);
  }
  return out;
}

void write_transforms(const fs::path& p, std::span<const fusion::SimTransform4> ts) {
  std::ofstream out = open_out(p);
  out.precision(17);
  for (const auto& t : ts) out << t.r1 << ' ' << t.r2 << ' ' << t.t1 << ' ' << t.t2 << '\n';
}

std::vector<fusion::SimTransform4> read_transforms(const fs::path& p) {
  std::ifstream in = open_in(p);
  std::vector<fusion::SimTransform4> out;
  fusion::SimTransform4 t;
  while (in >> t.r1 >> t.r2 >> t.t1 >> t.t2) out.push_back(t);
  if (!in.eof()) throw Error(ErrorKind::Decode, "malformed transform file " + p.string());
  return out;
}

struct LoadedFrames {
  std::vector<Raster> color;
  std::vector<Raster> gray;
};

LoadedFrames load_undistorted(const PipelineConfig& cfg, const fs::path& dir) {
  LoadedFrames f;
  for (const auto& p : list_images(dir)) {
    const Raster img = load_image(p);
    cfg.calib.validate(img.width(), img.height());
    f.color.push_back(calib::undistort_image(img, cfg.calib));
    f.gray.push_back(to_gray(f.color.back()));
  }
  if (f.gray.empty()) throw Error(ErrorKind::EmptyInput, "no PNG frames in " + dir.string());
  return f;
}

/// Consecutive links, closed back to the first frame when there are at least three frames.
std::vector<std::pair<std::size_t, std::size_t>> link_pairs(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t k = 0; k + 1 < n; ++k) pairs.emplace_back(k, k + 1);
  if (n >= 3) pairs.emplace_back(n - 1, 0);
  return pairs;
}

}  // namespace

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::Io, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void cmd_synth(const PipelineConfig& cfg, const fs::path& out_dir) {
  const synth::SceneSpec& scene = cfg.scene;
  scene.validate();
  fs::create_directories(out_dir / "frames");
  for (std::size_t k = 0; k < scene.path.size(); ++k) {
    const auto frame = synth::render_frame(scene, k);
    save_image(frame.image, out_dir / "frames" / numbered("frame", k, ".png"));
    std::ofstream ann = open_out(out_dir / "frames" / numbered("frame", k, ".txt"));
    detect::write_annotations(ann, frame.polyp_boxes);
  }
  {
    std::ofstream poses = open_out(out_dir / "poses.txt");
    unfold::write_poses(poses, scene.path);
  }
  {
    std::ofstream truth = open_out(out_dir / "truth_homographies.txt");
    truth.precision(17);
    for (const auto& [a, b] : link_pairs(scene.path.size())) {
      write_homography_line(truth, a, b, synth::face_homography(scene, a, b, unfold::CubeId::A, unfold::Face::PosZ));
    }
  }
  synth::write_dataset(synth::make_dataset(scene, cfg.dataset), out_dir / "dataset");
  std::ofstream used = open_out(out_dir / "config_used.txt");
  write_config(used, cfg);
}

void cmd_stitch(const PipelineConfig& cfg, const fs::path& frames_dir, const fs::path& out_dir) {
  const LoadedFrames frames = load_undistorted(cfg, frames_dir);
  const std::size_t n = frames.gray.size();
  fs::create_directories(out_dir);
  const int w = frames.gray[0].width(), h = frames.gray[0].height();

  std::vector<fusion::SimTransform4> init(n);
  std::vector<fusion::SimTransform4> final_t(n);
  std::vector<double> trace;
  fusion::Canvas canvas;
  if (n == 1) {
    canvas = fusion::composite(frames.gray, init);
  } else {
    std::vector<std::vector<reg::Keypoint>> kps;
    for (const auto& g : frames.gray) kps.push_back(reg::detect_keypoints(g, cfg.max_keypoints, cfg.harris));
    chain::TransformChain chain;
    const auto pairs = link_pairs(n);
    for (std::size_t l = 0; l < pairs.size(); ++l) {
      const auto [a, b] = pairs[l];
      const reg::MatchSet initial = reg::match_descriptors(kps[a], kps[b], cfg.match_ratio);
      const reg::HpftResult refined = reg::hpft_refine(frames.gray[a], frames.gray[b], initial, cfg.hpft);
      std::ofstream patches = open_out(out_dir / numbered("link", l, "_patches.txt"));
      reg::write_patch_tree(patches, refined.roots);
      chain.links.push_back({reg::fit_homography(refined.matches, cfg.hpft.ransac), refined.matches});
    }
    if (n >= 3) {
      const auto filtered = chain::filter_matches_closed_chain(chain, cfg.chain);
      chain = filtered.chain;
      std::ofstream res = open_out(out_dir / "chain_residual.txt");
      res.precision(17);
      for (double r : filtered.residual_trace) res << r << '\n';
    }
    {
      std::ofstream links = open_out(out_dir / "links.txt");
      links.precision(17);
      for (std::size_t l = 0; l < pairs.size(); ++l) {
        write_homography_line(links, pairs[l].first, pairs[l].second, chain.links[l].h);
        std::ofstream m = open_out(out_dir / numbered("link", l, "_matches.txt"));
        reg::write_matches(m, chain.links[l].matches);
      }
    }
    // Frame k maps into frame 0 through the inverse links k-1, ..., 0.
    Homography to_first;
    for (std::size_t k = 0; k < n; ++k) {
      if (k > 0) to_first = to_first.after(chain.links[k - 1].h.inverse());
      init[k] = fusion::fit_sim4(to_first, w, h);
    }
    const auto result = fusion::optimize_alternating(
        fusion::make_problem(frames.gray, init, cfg.fusion_beta, cfg.seams), cfg.fusion);
    final_t = result.transforms;
    trace = result.loss_trace;
    // The optimized c may come from smoothed frames; the c-step on the
    // originals gives the same minimizer for the final transforms.
    const Raster values = fusion::average_canvas(frames.gray, final_t, result.grid);
    canvas = fusion::composite(frames.gray, final_t, &values, &result.grid);
  }
  save_image(canvas.image, out_dir / "panorama.png");
  write_transforms(out_dir / "transforms_initial.txt", init);
  write_transforms(out_dir / "transforms.txt", final_t);
  std::ofstream loss = open_out(out_dir / "loss_trace.txt");
  fusion::write_loss_trace(loss, trace);
}

void cmd_unfold(const PipelineConfig& cfg, const fs::path& frames_dir, const fs::path& poses_file,
                const fs::path& out_dir) {
  std::vector<Raster> frames;
  for (const auto& p : list_images(frames_dir)) frames.push_back(load_image(p));
  std::ifstream in = open_in(poses_file);
  const auto poses = unfold::read_poses(in);
  if (frames.empty()) throw Error(ErrorKind::EmptyInput, "no PNG frames in " + frames_dir.string());
  if (poses.size() != frames.size()) {
    throw Error(ErrorKind::InvalidArgument, "pose count does not match the frame count");
  }
  const auto layout = unfold::AtlasLayout::cross(cfg.geometry, cfg.face_px);
  const auto atlas = unfold::bake_atlas(cfg.geometry, layout, poses, frames, cfg.calib);
  fs::create_directories(out_dir);
  save_image(atlas.raster, out_dir / "atlas.png");
  std::ofstream manifest = open_out(out_dir / "atlas_layout.txt");
  unfold::write_layout_manifest(manifest, layout);
}

void cmd_train(const PipelineConfig& cfg, const fs::path& dataset_dir, const fs::path& model_out) {
  const fs::path dir = fs::is_directory(dataset_dir / "train") ? dataset_dir / "train" : dataset_dir;
  const detect::Dataset data = detect::load_dataset(dir);
  detect::TinyDetector model(cfg.arch, cfg.seed);
  const auto result = detect::train(model, data, cfg.train);
  std::ofstream out = open_out(model_out);
  model.save(out);
  fs::path curve = model_out;
  curve += ".loss.txt";
  std::ofstream loss = open_out(curve);
  loss.precision(17);
  for (double v : result.loss_curve) loss << v << '\n';
}

void cmd_detect(const PipelineConfig& cfg, const fs::path& model_path, const fs::path& image, std::ostream& json_out) {
  std::ifstream in = open_in(model_path);
  const auto model = detect::TinyDetector::load(in);
  const auto dets = detect::infer(model, load_image(image), cfg.conf_threshold, cfg.nms_iou);
  json_out << detect::detections_to_json(dets) << '\n';
}

evalx::EvalReport cmd_eval(const PipelineConfig& cfg, const EvalInputs& in) {
  evalx::EvalReport report;
  if (in.stitch && in.frames) {
    const LoadedFrames frames = load_undistorted(cfg, *in.frames);
    for (const char* which : {"initial", "final"}) {
      const auto ts = read_transforms(*in.stitch / (std::string(which) == "initial" ? "transforms_initial.txt"
                                                                                   : "transforms.txt"));
      if (ts.size() != frames.gray.size()) throw Error(ErrorKind::InvalidArgument, "transform count mismatch");
      const auto canvas = fusion::composite(frames.gray, ts);
      report.metrics[std::string("tme_") + which] = evalx::texture_metric_error(canvas, frames.gray, ts);
    }
  }
  if (in.stitch && in.truth) {
    const auto truth = read_homographies(*in.truth / "truth_homographies.txt");
    const auto links = read_homographies(*in.stitch / "links.txt");
    const std::vector<double> thresholds{0.5, 1.0, 2.0, 3.0, 5.0};
    std::vector<std::size_t> counts(thresholds.size(), 0);
    std::size_t total = 0;
    for (std::size_t l = 0; l < links.size(); ++l) {
      const auto it = std::find_if(truth.begin(), truth.end(), [&](const PairHomography& t) {
        return t.from == links[l].from && t.to == links[l].to;
      });
      if (it == truth.end()) continue;
      std::ifstream mf = open_in(*in.stitch / numbered("link", l, "_matches.txt"));
      std::vector<reg::Match> valid;
      for (const auto& m : reg::read_matches(mf).pairs) {
        if (m.valid) valid.push_back(m);
      }
      // Forward step: the tracked displacement; backward step: the true inverse.
      const Homography back = it->h.inverse();
      for (const auto& m : valid) {
        const reg::Match one[1] = {m};
        const auto c = evalx::fb_curve(one, Homography::translation(m.dst.x - m.src.x, m.dst.y - m.src.y), back,
                                       thresholds);
        for (std::size_t t = 0; t < c.size(); ++t) counts[t] += c[t];
      }
      total += valid.size();
    }
    report.metrics["fb_matches"] = static_cast<double>(total);
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      char key[32];
      std::snprintf(key, sizeof key, "fb_below_%gpx", thresholds[t]);
      report.metrics[key] = static_cast<double>(counts[t]);
    }
  }
  if (in.model && in.dataset) {
    std::ifstream mf = open_in(*in.model);
    const auto model = detect::TinyDetector::load(mf);
    const fs::path dir = fs::is_directory(*in.dataset / "test") ? *in.dataset / "test" : *in.dataset;
    const auto data = detect::load_dataset(dir);
    std::vector<std::vector<detect::Detection>> dets;
    std::vector<std::vector<detect::Box>> gts;
    for (const auto& s : data.samples) {
      dets.push_back(detect::infer(model, s.image, cfg.conf_threshold, cfg.nms_iou));
      gts.push_back(s.boxes);
    }
    const auto det_report = evalx::detection_report(dets, gts);
    for (const auto& [k, v] : det_report.metrics) report.metrics["detect_" + k] = v;
  }
  if (report.metrics.empty()) {
    throw Error(ErrorKind::InvalidArgument,
                "nothing to evaluate: give --frames with --stitch, --stitch with --truth, or --model with --dataset");
  }
  return report;
}

namespace {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateConfiguration:
    case ErrorKind::NonInvertibleLink:
    case ErrorKind::InsufficientMatches:
    case ErrorKind::NoSeams:
    case ErrorKind::DegenerateRay:
    case ErrorKind::EmptyTrainingSet:
    case ErrorKind::OutOfFrame:
      return kNumericFailure;
    default:
      return kDataError;
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"panoscope: panoramic mosaicking, double-cube unfolding and lesion detection"};
  app.require_subcommand(1);
  std::string config_path, out_path;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "Flat key = value configuration file");
  app.add_option("--seed", seed, "Override the configured seed");
  app.add_option("--out", out_path, "Output path (directory or file, per subcommand)");

  auto* synth = app.add_subcommand("synth", "Render a synthetic scene and a detector dataset");
  auto* stitch = app.add_subcommand("stitch", "Register, filter, fuse and composite frames");
  std::string frames_dir;
  stitch->add_option("frames", frames_dir, "Directory of PNG frames")->required();
  auto* unfold_cmd = app.add_subcommand("unfold", "Bake frames onto the double-cube atlas");
  std::string unfold_frames, poses;
  unfold_cmd->add_option("frames", unfold_frames, "Directory of PNG frames")->required();
  unfold_cmd->add_option("poses", poses, "Pose file, one camera per line")->required();
  auto* train_cmd = app.add_subcommand("train", "Train the detector");
  std::string dataset_dir;
  train_cmd->add_option("dataset", dataset_dir, "Detector dataset directory")->required();
  auto* detect_cmd = app.add_subcommand("detect", "Run the detector on one image");
  std::string model_path, image_path;
  detect_cmd->add_option("model", model_path, "Trained model file")->required();
  detect_cmd->add_option("image", image_path, "Image to scan")->required();
  auto* eval_cmd = app.add_subcommand("eval", "Compute the evaluation report");
  std::string e_frames, e_stitch, e_truth, e_model, e_dataset;
  eval_cmd->add_option("--frames", e_frames, "Frame directory used for stitching");
  eval_cmd->add_option("--stitch", e_stitch, "Stitch output directory");
  eval_cmd->add_option("--truth", e_truth, "Synth output directory with truth homographies");
  eval_cmd->add_option("--model", e_model, "Trained model file");
  eval_cmd->add_option("--dataset", e_dataset, "Detector dataset directory");
  for (auto* sub : {synth, stitch, unfold_cmd, train_cmd, detect_cmd, eval_cmd}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : load_config(config_path);
    if (seed) cfg.seed = *seed;
    cfg.finalize();
    auto need_out = [&](const char* what) {
      if (out_path.empty()) throw CLI::RequiredError(std::string("--out (") + what + ")");
      return fs::path(out_path);
    };
    if (*synth) {
      cmd_synth(cfg, need_out("output directory"));
    } else if (*stitch) {
      cmd_stitch(cfg, frames_dir, need_out("output directory"));
    } else if (*unfold_cmd) {
      cmd_unfold(cfg, unfold_frames, poses, need_out("output directory"));
    } else if (*train_cmd) {
      cmd_train(cfg, dataset_dir, need_out("model file"));
    } else if (*detect_cmd) {
      if (out_path.empty()) {
        cmd_detect(cfg, model_path, image_path, out);
      } else {
        std::ofstream f = open_out(out_path);
        cmd_detect(cfg, model_path, image_path, f);
      }
    } else if (*eval_cmd) {
      EvalInputs in;
      if (!e_frames.empty()) in.frames = e_frames;
      if (!e_stitch.empty()) in.stitch = e_stitch;
      if (!e_truth.empty()) in.truth = e_truth;
      if (!e_model.empty()) in.model = e_model;
      if (!e_dataset.empty()) in.dataset = e_dataset;
      const auto report = cmd_eval(cfg, in);
      if (out_path.empty()) {
        out << report.to_table();
      } else {
        fs::create_directories(out_path);
        std::ofstream(fs::path(out_path) / "report.json") << report.to_json();
        std::ofstream(fs::path(out_path) / "report.txt") << report.to_table();
      }
    }
  } catch (const CLI::Error& e) {
    err << "error: missing " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kOk;
}

}  // namespace panoscope::cli
