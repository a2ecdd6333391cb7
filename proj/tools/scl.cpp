// scl: command-line front end for the connectivity-aware segmentation toolkit.
//
//   scl ccl <mask.png> [--out labels.png] [--stats]
//   scl loss --pred <pfm|png> --gt <png> [--soft] [--threshold 0.5] [--lambda 1.0[,..]] [--seg-loss ce]
//   scl eval --manifest m.json --pred-dir dir [--report report.json] [--threads N]
//   scl split --manifest m.json --scenes 11,6,6 [--seed 0] [--out-dir dir]
//   scl composite --manifest m.json --backgrounds dir --out dir [--per-frame 3] [--seed 0] [--feather]
//   scl net --spec spec.json|default [--params] [--forward in.pfm.. --out probs.pfm|--out-dir dir]
//
// Exit status: 0 success, 1 validation error, 2 I/O error. Errors are also
// written to stderr as JSON {"error": {"kind", "message"}}.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "scl/ccl.hpp"
#include "scl/connectivity.hpp"
#include "scl/dataset.hpp"
#include "scl/evaluate.hpp"
#include "scl/io.hpp"
#include "scl/nnblocks.hpp"
#include "scl/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

/// Everything a subcommand needs, collected from flags and validated before
/// any file is touched.
struct RunConfig {
  std::string subcommand;
  // shared
  std::string manifest;
  std::string out;
  std::string report;
  double threshold = 0.5;
  std::uint64_t seed = 0;
  std::size_t threads = scl::default_threads();
  // ccl
  std::string mask;
  bool stats = false;
  std::string algorithm = "bbdt";
  // loss
  std::string pred;
  std::string gt;
  bool soft = false;
  std::string lambdas = "1.0";
  std::string seg_loss = "ce";
  std::string grad_out;
  // eval
  std::string pred_dir;
  // split
  std::string scenes;
  std::string out_dir;
  // composite
  std::string backgrounds;
  std::size_t per_frame = 1;
  bool feather = false;
  // net
  std::string spec;
  std::string dump_spec;
  std::string weights;
  std::string save_weights;
  bool params = false;
  std::vector<std::string> forward;
};

void print_json(const json& j, const std::string& path = {}) {
  if (path.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream out(path);
  if (!out) throw scl::IoError("cannot write " + path);
  out << j.dump(2) << "\n";
  if (!out) throw scl::IoError("failed writing " + path);
}

std::vector<double> parse_doubles(const std::string& csv, const char* what) {
  std::vector<double> out;
  std::stringstream ss(csv);
  for (std::string tok; std::getline(ss, tok, ',');) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != tok.size()) {
      throw scl::ValidationError(std::string("invalid ") + what + " value '" + tok + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw scl::ValidationError(std::string("empty ") + what + " list");
  return out;
}

void validate(const RunConfig& c) {
  if (!(c.threshold > 0.0 && c.threshold < 1.0)) {
    throw scl::ValidationError("--threshold must lie in (0,1)");
  }
  if (c.threads == 0) throw scl::ValidationError("--threads must be >= 1");
  if (c.subcommand == "loss") {
    for (double l : parse_doubles(c.lambdas, "--lambda")) scl::combined_loss(0.0, 0.0, l);
    if (c.seg_loss != "ce" && c.seg_loss != "none") {
      throw scl::ValidationError("--seg-loss must be 'ce' or 'none'");
    }
  }
  if (c.subcommand == "split") {
    if (parse_doubles(c.scenes, "--scenes").size() != 3) {
      throw scl::ValidationError("--scenes takes three counts: train,val,test");
    }
  }
  if (c.subcommand == "composite" && c.per_frame == 0) {
    throw scl::ValidationError("--per-frame must be >= 1");
  }
  if (c.subcommand == "net" && !c.forward.empty() && c.out.empty() && c.out_dir.empty()) {
    throw scl::ValidationError("--forward needs --out (single input) or --out-dir");
  }
  if (c.subcommand == "net" && c.forward.size() > 1 && c.out_dir.empty()) {
    throw scl::ValidationError("several --forward inputs need --out-dir");
  }
}

// ---------------------------------------------------------------------------

int run_ccl(const RunConfig& c) {
  const scl::BinaryMask m = scl::read_mask_png(c.mask);
  const scl::LabelMap lm = c.algorithm == "floodfill" ? scl::label_components_floodfill(m)
                                                      : scl::label_components_bbdt(m);
  const int k = lm.num_components();
  if (!c.out.empty()) {
    // Distinct gray levels for up to 255 components; wraps beyond that.
    std::vector<std::uint8_t> gray(lm.size(), 0);
    for (std::size_t i = 0; i < lm.size(); ++i) {
      const int l = lm[i];
      if (l == 0) continue;
      gray[i] = static_cast<std::uint8_t>(k <= 255 ? (l * 255) / k : 1 + (l - 1) % 255);
    }
    scl::write_gray_png(c.out, lm.width(), lm.height(), gray);
  }
  json j{{"num_components", k}, {"width", lm.width()}, {"height", lm.height()},
         {"foreground_area", scl::mask_area(m)}};
  if (c.stats) {
    json comps = json::array();
    for (const auto& s : scl::component_stats(lm)) {
      comps.push_back({{"id", s.id},
                       {"area", s.area},
                       {"bbox", {s.bbox.min_x, s.bbox.min_y, s.bbox.max_x, s.bbox.max_y}}});
    }
    j["components"] = std::move(comps);
  }
  print_json(j);
  return kExitOk;
}

json report_json(const scl::ConnectivityReport& r) {
  json per = json::array();
  for (const auto& g : r.per_gt_connectivity) {
    per.push_back({{"gt_id", g.gt_id}, {"connectivity", g.connectivity},
                   {"matched_preds", g.matched_preds}});
  }
  return {{"sc", r.sc},
          {"loss", r.loss},
          {"n_terms", r.n_terms},
          {"cold_start", r.cold_start},
          {"per_component", std::move(per)},
          {"isolated_preds", r.isolated_preds}};
}

int run_loss(const RunConfig& c) {
  const scl::ProbabilityMap q = scl::read_prediction(c.pred);
  const scl::BinaryMask gt = scl::read_mask_png(c.gt);
  scl::require_same_shape(q, gt, "loss");

  scl::ConnectivityReport r;
  if (c.soft) {
    auto soft = scl::sc_loss_soft(q, gt, c.threshold);
    r = std::move(soft.report);
    if (!c.grad_out.empty()) {
      scl::FloatImage img{q.width(), q.height(), 1, {}};
      for (double v : soft.grad.data()) img.values.push_back(static_cast<float>(v));
      scl::write_pfm(c.grad_out, img);
    }
  } else {
    r = scl::sc_loss_hard(gt, scl::binarize(q, c.threshold));
  }

  json j = report_json(r);
  j["mode"] = c.soft ? "soft" : "hard";
  j["threshold"] = c.threshold;
  const double seg = c.seg_loss == "ce" ? scl::binary_cross_entropy(q, gt) : 0.0;
  j["seg_loss_type"] = c.seg_loss;
  j["seg_loss"] = seg;
  json combined = json::array();
  for (double l : parse_doubles(c.lambdas, "--lambda")) {
    combined.push_back({{"lambda", l}, {"total_loss", scl::combined_loss(seg, r.loss, l)}});
  }
  j["combined"] = std::move(combined);
  print_json(j);
  return kExitOk;
}

int run_eval(const RunConfig& c) {
  const fs::path mpath(c.manifest);
  const auto m = scl::load_manifest(mpath);
  const auto images = scl::evaluate_manifest(m, mpath.parent_path(), c.pred_dir,
                                             {c.threshold, c.threads});
  json report = scl::eval_report(images);
  if (c.report.empty()) {
    print_json(report);
  } else {
    print_json(report, c.report);
    print_json({{"miou", report["miou"]}, {"pixel_acc", report["pixel_acc"]},
                {"mean_sc", report["mean_sc"]}, {"num_images", report["num_images"]},
                {"report", c.report}});
  }
  return kExitOk;
}

// Re-expresses manifest-relative paths against a new manifest location.
scl::DatasetManifest rebase(scl::DatasetManifest m, const fs::path& from, const fs::path& to) {
  const fs::path a = fs::absolute(from).lexically_normal();
  const fs::path b = fs::absolute(to).lexically_normal();
  if (a == b) return m;
  for (auto& f : m.frames) {
    for (std::string* p : {&f.image_path, &f.mask_path}) {
      if (!fs::path(*p).is_absolute()) *p = (a / *p).lexically_normal().lexically_relative(b).generic_string();
    }
  }
  return m;
}

int run_split(const RunConfig& c) {
  const fs::path mpath(c.manifest);
  const auto m = scl::load_manifest(mpath);
  const auto counts = parse_doubles(c.scenes, "--scenes");
  for (double v : counts) {
    if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
      throw scl::ValidationError("--scenes counts must be non-negative integers");
    }
  }
  const auto split = scl::scene_split(
      m, {static_cast<std::size_t>(counts[0]), static_cast<std::size_t>(counts[1]),
          static_cast<std::size_t>(counts[2])},
      c.seed);
  const fs::path out_dir = c.out_dir.empty() ? mpath.parent_path() : fs::path(c.out_dir);
  if (!out_dir.empty()) fs::create_directories(out_dir);
  json summary{{"seed", c.seed}};
  for (const auto& [name, part] : {std::pair{"train", &split.train}, std::pair{"val", &split.val},
                                   std::pair{"test", &split.test}}) {
    const fs::path file = out_dir / (std::string(name) + ".json");
    scl::save_manifest(file, rebase(*part, mpath.parent_path(), out_dir));
    summary[name] = {{"manifest", file.generic_string()},
                     {"scenes", part->scenes()},
                     {"num_scenes", part->scenes().size()},
                     {"num_videos", part->videos.size()},
                     {"num_frames", part->frames.size()}};
  }
  print_json(summary);
  return kExitOk;
}

int run_composite(const RunConfig& c) {
  const fs::path mpath(c.manifest);
  const auto m = scl::load_manifest(mpath);
  const auto result = scl::composite_batch(m, mpath.parent_path(), c.backgrounds, c.out,
                                           {c.per_frame, c.seed, c.feather, c.threads});
  const fs::path out_manifest = fs::path(c.out) / "manifest.json";
  scl::save_manifest(out_manifest, result.manifest);
  for (const auto& e : result.errors) {
    std::cerr << json{{"warning", {{"kind", "io"}, {"message", e}}}}.dump() << "\n";
  }
  print_json({{"manifest", out_manifest.generic_string()},
              {"num_frames", result.manifest.frames.size()},
              {"errors", result.errors}});
  if (!m.frames.empty() && result.manifest.frames.empty()) return kExitIo;
  return kExitOk;
}

scl::nn::Tensor4 load_network_input(const fs::path& path, int channels) {
  std::vector<float> planar;
  int w = 0, h = 0, src_channels = 0;
  std::vector<float> interleaved;
  if (path.extension() == ".pfm") {
    const auto img = scl::read_pfm(path);
    w = img.width;
    h = img.height;
    src_channels = img.channels;
    interleaved = img.values;
  } else {
    const auto img = scl::read_rgb_png(path);
    w = img.width;
    h = img.height;
    src_channels = 3;
    for (auto v : img.pixels) interleaved.push_back(static_cast<float>(v) / 255.0f);
  }
  if (src_channels != channels && src_channels != 1) {
    throw scl::ValidationError(path.string() + " has " + std::to_string(src_channels) +
                               " channels, network expects " + std::to_string(channels));
  }
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  planar.resize(plane * channels);
  for (int ch = 0; ch < channels; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) {
      planar[ch * plane + i] = interleaved[i * src_channels + (src_channels == 1 ? 0 : ch)];
    }
  }
  return scl::nn::Tensor4({1, channels, h, w}, std::move(planar));
}

int run_net(const RunConfig& c) {
  namespace nn = scl::nn;
  nn::NetSpec spec;
  if (c.spec == "default") {
    spec = nn::default_netspec();
  } else {
    std::ifstream in(c.spec);
    if (!in) throw scl::IoError("cannot open net spec " + c.spec);
    json j;
    try {
      in >> j;
    } catch (const json::parse_error& e) {
      throw scl::ValidationError("net spec " + c.spec + " is not valid JSON: " + e.what());
    }
    spec = nn::netspec_from_json(j);
  }
  if (!c.dump_spec.empty()) print_json(nn::to_json(spec), c.dump_spec);

  const nn::NetWeights weights = c.weights.empty()
                                     ? nn::init_weights(spec, c.seed)
                                     : nn::load_weights(c.weights, c.weights + ".json", spec);
  if (!c.save_weights.empty()) {
    nn::save_weights(c.save_weights, c.save_weights + ".json", spec, weights);
  }

  json j{{"params", nn::count_params(spec)}, {"layers", spec.layers.size()},
         {"total_stride", nn::total_stride(spec)}};
  if (c.params) {
    json per = json::array();
    const auto counts = nn::layer_param_counts(spec);
    for (std::size_t i = 0; i < counts.size(); ++i) {
      per.push_back({{"index", i}, {"type", nn::kind_name(spec.layers[i].kind)},
                     {"params", counts[i]}});
    }
    j["per_layer"] = std::move(per);
  }

  if (!c.forward.empty()) {
    if (!c.out_dir.empty()) fs::create_directories(c.out_dir);
    std::vector<std::string> outputs(c.forward.size());
    scl::parallel_for(c.forward.size(), c.threads, [&](std::size_t i) {
      const fs::path in(c.forward[i]);
      const auto x = load_network_input(in, spec.in_channels);
      const auto scores = nn::connectnet_forward(x, spec, weights);
      const scl::ProbabilityMap probs(x.w(), x.h(), nn::person_probability(scores));
      const fs::path out = c.out_dir.empty() ? fs::path(c.out)
                                             : fs::path(c.out_dir) / (in.stem().string() + ".pfm");
      scl::write_probability_pfm(out, probs);
      outputs[i] = out.generic_string();
    });
    j["outputs"] = outputs;
  }
  print_json(j);
  return kExitOk;
}

int report_error(const char* kind, const std::string& msg, int code) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", msg}}}}.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Connectivity-aware portrait segmentation toolkit"};
  app.require_subcommand(1);
  app.allow_extras(false);
  RunConfig c;

  auto* ccl = app.add_subcommand("ccl", "Label 8-connected components of a mask PNG");
  ccl->add_option("mask", c.mask, "Binary mask PNG (any value > 0 is foreground)")
      ->required();
  ccl->add_option("--out", c.out, "Write a gray-level label visualisation PNG");
  ccl->add_flag("--stats", c.stats, "Include per-component area and bounding box");
  ccl->add_option("--algorithm", c.algorithm, "bbdt or floodfill")
      ->check(CLI::IsMember({"bbdt", "floodfill"}));

  auto* loss = app.add_subcommand("loss", "Semantic connectivity and SC loss for one image");
  loss->add_option("--pred", c.pred, "Prediction: PFM probabilities or PNG mask")->required();
  loss->add_option("--gt", c.gt, "Ground-truth mask PNG")->required();
  loss->add_flag("--soft", c.soft, "Differentiable variant on probabilities");
  loss->add_option("--threshold", c.threshold, "Binarisation threshold (inclusive)");
  loss->add_option("--lambda", c.lambdas, "SC loss weight, or comma-separated sweep");
  loss->add_option("--seg-loss", c.seg_loss, "Segmentation loss term: ce or none");
  loss->add_option("--grad-out", c.grad_out, "With --soft: write dLoss/dq as a PFM");

  auto* eval = app.add_subcommand("eval", "mIoU, pixel accuracy and mean SC over a manifest");
  eval->add_option("--manifest", c.manifest, "Dataset manifest JSON")->required();
  eval->add_option("--pred-dir", c.pred_dir, "Directory of <image stem>.png|.pfm predictions")
      ->required();
  eval->add_option("--report", c.report, "Write the full JSON report here");
  eval->add_option("--threshold", c.threshold, "Binarisation threshold for PFM predictions");
  eval->add_option("--threads", c.threads, "Worker threads");

  auto* split = app.add_subcommand("split", "Scene-level train/val/test split");
  split->add_option("--manifest", c.manifest, "Dataset manifest JSON")->required();
  split->add_option("--scenes", c.scenes, "Scene counts train,val,test")->required();
  split->add_option("--seed", c.seed, "Shuffle seed");
  split->add_option("--out-dir", c.out_dir, "Where train/val/test.json go (default: beside input)");

  auto* comp = app.add_subcommand("composite", "Paste masked portraits onto backgrounds");
  comp->add_option("--manifest", c.manifest, "Dataset manifest JSON")->required();
  comp->add_option("--backgrounds", c.backgrounds, "Directory of background PNGs")->required();
  comp->add_option("--out", c.out, "Output directory")->required();
  comp->add_option("--per-frame", c.per_frame, "Backgrounds per frame");
  comp->add_option("--seed", c.seed, "Background assignment seed");
  comp->add_flag("--feather", c.feather, "Blend a 1-pixel edge");
  comp->add_option("--threads", c.threads, "Worker threads");

  auto* net = app.add_subcommand("net", "Inspect or run the segmentation network");
  net->add_option("--spec", c.spec, "NetSpec JSON, or 'default'")->required();
  net->add_option("--dump-spec", c.dump_spec, "Write the resolved NetSpec JSON");
  net->add_flag("--params", c.params, "Report per-layer parameter counts");
  net->add_option("--weights", c.weights, "Flat float32 weights (sidecar <file>.json)");
  net->add_option("--save-weights", c.save_weights, "Write the weights in use");
  net->add_option("--seed", c.seed, "Seed for random weights");
  net->add_option("--forward", c.forward, "Input image(s): RGB PNG or PFM");
  net->add_option("--out", c.out, "Output person-probability PFM (single input)");
  net->add_option("--out-dir", c.out_dir, "Output directory for several inputs");
  net->add_option("--threads", c.threads, "Worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("validation", e.what(), kExitValidation);
  }

  for (auto* sub : app.get_subcommands()) c.subcommand = sub->get_name();

  try {
    validate(c);
    if (c.subcommand == "ccl") return run_ccl(c);
    if (c.subcommand == "loss") return run_loss(c);
    if (c.subcommand == "eval") return run_eval(c);
    if (c.subcommand == "split") return run_split(c);
    if (c.subcommand == "composite") return run_composite(c);
    if (c.subcommand == "net") return run_net(c);
  } catch (const scl::IoError& e) {
    return report_error("io", e.what(), kExitIo);
  } catch (const fs::filesystem_error& e) {
    return report_error("io", e.what(), kExitIo);
  } catch (const scl::ValidationError& e) {
    return report_error("validation", e.what(), kExitValidation);
  } catch (const std::exception& e) {
    return report_error("validation", e.what(), kExitValidation);
  }
  return kExitValidation;
}
