#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "anchorface/anchorface.hpp"

namespace fs = std::filesystem;
using namespace anchorface;

namespace {

struct Options {
  std::uint64_t seed = 0;

  // synth
  std::string synth_out;
  std::size_t synth_count = 100;
  SyntheticDistribution dist{};

  // gen-templates
  std::string tmpl_data;
  std::string tmpl_out;
  std::string provenance = "kmeans";
  int n_base = 3;
  double roll_step = 45.0;
  double gamma = 6.0;
  int image_side = 64;
  std::size_t landmarks = kFaceLandmarks;

  // train
  std::string train_data;
  std::string train_templates;
  std::string train_out;
  bool baseline = false;
  int epochs = 15;
  int batch_size = 8;
  double lr = 1e-3;
  double beta = kDeskBeta;
  double lambda = 0.5;
  int grid = 7;
  double area = 16.0;
  std::string con_loss = "bce";

  // eval
  std::string preds;
  std::string gts;
  std::string norm = "face";
  std::string eval_model;
  std::string eval_data;
  std::string errors_out;
  std::string ced_out;
  std::string json_out;

  // predict
  std::string predict_model;
  std::string image;
  std::string plot;
  std::string pred_out;

  // shared aggregation flags
  std::string strategy;
  std::optional<double> c_th;

  // ablate
  std::string plan = "default";
  std::string ablate_out = "ablation";
  int threads = 1;
  std::optional<int> plan_epochs;
  std::optional<std::size_t> train_count;
  std::optional<std::size_t> eval_count;
  bool no_cache = false;

  // plot
  std::string plot_kind = "bins";
  std::vector<std::string> plot_inputs;
  std::string plot_out;
};

std::vector<LandmarkShape> load_shapes(const std::string& path, std::size_t L, int side) {
  fs::path p(path);
  if (fs::is_directory(p)) {
    std::vector<LandmarkShape> shapes;
    for (const auto& s : read_synthetic_dataset(p)) shapes.push_back(s.gt);
    return shapes;
  }
  std::vector<LandmarkShape> shapes;
  for (const auto& r : load_annotations(path, L)) shapes.emplace_back(r.landmarks, Frame::pixel(side, side));
  return shapes;
}

AggregateConfig aggregation_from(const Options& o, AggregateConfig base) {
  if (!o.strategy.empty()) base.strategy = parse_strategy(o.strategy);
  if (o.c_th) base.c_th = *o.c_th;
  return base;
}

void print_report(const EvalReport& r) {
  std::printf("NME %.6f\n", r.nme);
  std::printf("AUC@0.1 %.6f\n", r.auc_01);
  std::printf("FR@0.1 %.6f\n", r.failure_rate_01);
  for (auto b : kYawBins) {
    if (r.bin(b).count) std::printf("%-7s n=%zu NME %.6f\n", to_string(b).c_str(), r.bin(b).count, r.bin(b).nme);
  }
  if (r.pearson) std::printf("P %.6f (%zu images)\n", r.pearson->p, r.pearson->used);
}

std::string errors_csv(std::span<const double> errors) {
  std::string s = "error\n";
  char buf[64];
  for (double e : errors) {
    std::snprintf(buf, sizeof buf, "%.17g\n", e);
    s += buf;
  }
  return s;
}

std::vector<double> read_errors_csv(const std::string& path) {
  std::istringstream in(detail::read_file(path));
  std::string line;
  std::vector<double> out;
  std::getline(in, line);
  if (line != "error") detail::fail(ErrorKind::Parse, path + ": expected an 'error' header");
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(std::stod(line));
  }
  return out;
}

int cmd_synth(const Options& o) {
  write_synthetic_dataset(o.synth_out, o.dist, o.seed, o.synth_count);
  std::printf("wrote %zu samples to %s\n", o.synth_count, o.synth_out.c_str());
  return 0;
}

int cmd_gen_templates(const Options& o) {
  const auto shapes = load_shapes(o.tmpl_data, o.landmarks, o.image_side);
  TemplateSpec spec;
  spec.provenance = parse_provenance(o.provenance);
  spec.n_base = o.n_base;
  spec.roll_step = o.roll_step;
  spec.gamma = o.gamma;
  spec.seed = o.seed;
  const auto set = build_templates(spec, shapes);
  detail::write_file(o.tmpl_out, to_json(set).dump(2) + "\n");
  std::printf("K=%zu templates written to %s\n", set.size(), o.tmpl_out.c_str());
  return 0;
}

int cmd_train(const Options& o) {
  const auto data = read_synthetic_dataset(o.train_data);
  if (data.empty()) detail::fail(ErrorKind::EmptyInput, "training set is empty");
  const int side = data.front().image.width;
  ModelBundle b;
  b.config.input_side = side;
  b.config.L = static_cast<int>(data.front().gt.size());
  b.config.grid_rows = b.config.grid_cols = o.grid;
  b.config.seed = o.seed;
  b.schedule.epochs = o.epochs;
  b.schedule.batch_size = o.batch_size;
  b.schedule.adam.lr = o.lr;
  b.schedule.seed = derive_seed(o.seed, 1);
  b.loss.beta = o.beta;
  b.loss.lambda = o.lambda;
  b.loss.con_loss_form = o.con_loss == "literal" ? ConLossForm::TargetInLog : ConLossForm::StandardBCE;
  b.aggregate = aggregation_from(o, {});
  auto log = [](int e, double loss) { std::fprintf(stderr, "epoch %d loss %.6f\n", e + 1, loss); };
  if (o.baseline) {
    b.config.head = HeadKind::Direct;
    b.params = train_baseline(data, b.config, b.schedule, log).params;
  } else {
    if (o.train_templates.empty()) {
      std::vector<LandmarkShape> shapes;
      for (const auto& s : data) shapes.push_back(s.gt);
      b.templates = kmeans_templates(shapes, 3, 45.0, o.seed);
    } else {
      b.templates = template_set_from_json(nlohmann::json::parse(detail::read_file(o.train_templates)));
    }
    b.grid = AnchorGridConfig{static_cast<double>(side), o.area, o.grid, o.grid};
    b.config.K = static_cast<int>(b.templates->size());
    b.params = train(data, b.setup(), b.config, b.schedule, b.loss, log).params;
  }
  save_bundle(o.train_out, b);
  std::printf("model written to %s (+ .json)\n", o.train_out.c_str());
  return 0;
}

int cmd_eval(const Options& o) {
  EvalReport report;
  std::vector<double> errors;
  if (!o.eval_model.empty()) {
    const auto b = load_bundle(o.eval_model);
    const auto data = read_synthetic_dataset(o.eval_data);
    std::vector<LandmarkShape> preds, gts;
    std::optional<PearsonResult> pr;
    if (b.config.head == HeadKind::Direct) {
      preds = predict_direct(b.config, b.params, data);
    } else {
      const auto setup = b.setup();
      const auto fields = predict_fields(b.config, b.params, data);
      const auto agg = aggregation_from(o, b.aggregate);
      std::vector<PearsonImage> series;
      for (std::size_t i = 0; i < fields.size(); ++i) {
        preds.push_back(aggregate(fields[i], setup.grid, setup.templates, agg, setup.table).landmarks);
        series.push_back(pearson_series(fields[i], data[i].gt, setup));
      }
      pr = pearson_analysis(series);
    }
    for (const auto& s : data) gts.push_back(s.gt);
    errors = per_image_errors(preds, gts, face_size_factors(data));
    report = make_report(errors, yaw_list(data));
    report.pearson = pr;
  } else {
    if (o.preds.empty() || o.gts.empty()) detail::fail(ErrorKind::Config, "eval needs --preds and --gts, or --model and --data");
    const auto p = load_annotations(o.preds, o.landmarks);
    const auto g = load_annotations(o.gts, o.landmarks);
    if (p.size() != g.size()) detail::fail(ErrorKind::CountMismatch, "prediction and ground-truth files differ in length");
    NormFactor norm = FaceSizeNorm{};
    if (o.norm == "diagonal") {
      norm = BoxDiagonalNorm{};
    } else if (o.norm == "interocular") {
      norm = InterOcularNorm{kFaceEyes.left_outer, kFaceEyes.right_outer};
    } else if (o.norm != "face") {
      detail::fail(ErrorKind::Config, "unknown normalization '" + o.norm + "'");
    }
    std::vector<LandmarkShape> ps, gs;
    std::vector<double> factors;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ps.emplace_back(p[i].landmarks);
      gs.emplace_back(g[i].landmarks);
      factors.push_back(resolve_norm(norm, gs.back(), g[i].box));
    }
    errors = per_image_errors(ps, gs, factors);
    report = make_report(errors, {});
  }
  print_report(report);
  if (!o.errors_out.empty()) detail::write_file(o.errors_out, errors_csv(errors));
  if (!o.ced_out.empty()) detail::write_file(o.ced_out, ced_csv(errors));
  if (!o.json_out.empty()) detail::write_file(o.json_out, to_json(report).dump(2) + "\n");
  return 0;
}

int cmd_predict(const Options& o) {
  auto b = load_bundle(o.predict_model);
  b.aggregate = aggregation_from(o, b.aggregate);
  const Image img = read_image(o.image);
  const LandmarkShape pred = predict_shape(b, img);
  AnnotationRecord rec{fs::path(o.image).filename().string(),
                       BoundingBox{0.0, 0.0, static_cast<double>(img.width), static_cast<double>(img.height)},
                       std::vector<Point2>(pred.begin(), pred.end())};
  const std::string line = serialize_annotation(rec);
  if (o.pred_out.empty()) {
    std::fputs(line.c_str(), stdout);
  } else {
    detail::write_file(o.pred_out, line);
  }
  if (!o.plot.empty()) detail::write_file(o.plot, svg_landmarks(img, pred));
  return 0;
}

int cmd_ablate(const Options& o) {
  ExperimentPlan plan = plan_by_name(o.plan);
  scale_plan(plan, o.plan_epochs, o.train_count, o.eval_count);
  RunOptions ro;
  ro.out_dir = o.ablate_out;
  ro.threads = o.threads;
  ro.use_cache = !o.no_cache;
  ro.log = [](const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); };
  const auto res = run_plan(plan, ro);
  std::printf("%-28s %-6s %-10s %-10s %-10s %s\n", "variant", "status", "NME", "Heavy", "seed-mean", "P");
  for (const auto& r : res.results) {
    if (r.status == VariantStatus::Failed) {
      std::printf("%-28s failed %s\n", r.variant.c_str(), r.error.c_str());
      continue;
    }
    std::printf("%-28s %-6s %-10.6f %-10.6f %-10.6f %s\n", r.variant.c_str(),
                r.status == VariantStatus::Cached ? "cached" : "ok", r.report.nme, r.report.bin(YawBin::Heavy).nme,
                r.mean_seed_nme(), r.report.pearson ? std::to_string(r.report.pearson->p).c_str() : "-");
  }
  for (const auto& r : res.results) {
    if (r.status == VariantStatus::Failed) return 1;
  }
  return 0;
}

int cmd_plot(const Options& o) {
  if (o.plot_inputs.empty()) detail::fail(ErrorKind::Config, "plot needs at least one --input");
  std::string svg;
  if (o.plot_kind == "bins") {
    std::vector<NamedReport> rows;
    for (const auto& in : o.plot_inputs) {
      const auto j = nlohmann::json::parse(detail::read_file(in));
      for (const auto& v : j.at("variants")) {
        if (v.at("status") == "ok") rows.push_back({v.at("variant").get<std::string>(), report_from_json(v.at("report"))});
      }
    }
    svg = svg_yaw_bins(rows);
  } else if (o.plot_kind == "ced") {
    std::vector<NamedErrors> curves;
    for (const auto& in : o.plot_inputs) {
      const auto eq = in.find('=');
      const std::string name = eq == std::string::npos ? fs::path(in).stem().string() : in.substr(0, eq);
      const std::string path = eq == std::string::npos ? in : in.substr(eq + 1);
      curves.push_back({name, read_errors_csv(path)});
    }
    svg = svg_ced(curves);
  } else {
    detail::fail(ErrorKind::Config, "unknown plot kind '" + o.plot_kind + "'");
  }
  detail::write_file(o.plot_out, svg);
  return 0;
}

void add_aggregation_flags(CLI::App* sub, Options& o) {
  sub->add_option("--strategy", o.strategy, "Aggregation: weighted, argmax or mean (default: stored in the model)")
      ->check(CLI::IsMember({"weighted", "argmax", "mean"}));
  sub->add_option("--c-th", o.c_th, "Confidence threshold for weighted aggregation");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anchor-based facial landmark detection toolkit"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.set_config("--config", "", "TOML config file; flags given on the command line take precedence");
  Options o;
  app.add_option("--seed", o.seed, "Seed for all randomness")->envname("ANCHORFACE_SEED")->capture_default_str();

  auto* synth = app.add_subcommand("synth", "Generate a synthetic landmark dataset");
  synth->add_option("--out", o.synth_out, "Output directory")->required();
  synth->add_option("--count", o.synth_count, "Number of samples")->capture_default_str();
  synth->add_option("--image-side", o.dist.image_side, "Image side in pixels")->capture_default_str();
  synth->add_option("--max-roll", o.dist.max_roll_deg, "Roll range in degrees (uniform in +-max)")->capture_default_str();
  synth->add_option("--yaw-extent", o.dist.yaw_extent, "Yaw parameter range")->capture_default_str();
  synth->add_option("--noise", o.dist.noise_std, "Landmark noise in pixels")->capture_default_str();

  auto* gen = app.add_subcommand("gen-templates", "Build an anchor template set from training landmarks");
  gen->add_option("--data", o.tmpl_data, "Dataset directory or landmark CSV")->required();
  gen->add_option("--out", o.tmpl_out, "Output JSON")->required();
  gen->add_option("--provenance", o.provenance, "kmeans or hand")->check(CLI::IsMember({"kmeans", "hand"}))->capture_default_str();
  gen->add_option("--n-base", o.n_base, "KMeans cluster count")->capture_default_str();
  gen->add_option("--roll-step", o.roll_step, "Roll step in degrees")->capture_default_str();
  gen->add_option("--gamma", o.gamma, "Yaw indicator threshold for hand-designed templates")->capture_default_str();
  gen->add_option("--image-side", o.image_side, "Image side for landmark CSV input")->capture_default_str();
  gen->add_option("--landmarks", o.landmarks, "Landmarks per face for CSV input")->capture_default_str();

  auto* tr = app.add_subcommand("train", "Train an anchor model or the direct-regression baseline");
  tr->add_option("--data", o.train_data, "Training dataset directory")->required();
  tr->add_option("--templates", o.train_templates, "Template JSON (default: KMeans-24 from the data)");
  tr->add_option("--out", o.train_out, "Output weights; the configuration goes to <out>.json")->required();
  tr->add_flag("--baseline", o.baseline, "Train the direct-regression baseline instead");
  tr->add_option("--epochs", o.epochs, "Epochs")->capture_default_str();
  tr->add_option("--batch-size", o.batch_size, "Batch size")->capture_default_str();
  tr->add_option("--lr", o.lr, "Initial learning rate")->capture_default_str();
  tr->add_option("--beta", o.beta, "Confidence target temperature")->capture_default_str();
  tr->add_option("--lambda", o.lambda, "Confidence loss weight")->capture_default_str();
  tr->add_option("--con-loss", o.con_loss, "Confidence loss form: bce or literal")->check(CLI::IsMember({"bce", "literal"}))->capture_default_str();
  tr->add_option("--grid", o.grid, "Anchor grid side")->capture_default_str();
  tr->add_option("--area", o.area, "Anchor area side in pixels")->capture_default_str();
  add_aggregation_flags(tr, o);

  auto* ev = app.add_subcommand("eval", "Score predictions against ground truth");
  ev->add_option("--preds", o.preds, "Predicted landmark CSV");
  ev->add_option("--gts", o.gts, "Ground-truth landmark CSV");
  ev->add_option("--norm", o.norm, "Normalization: face, diagonal or interocular")
      ->check(CLI::IsMember({"face", "diagonal", "interocular"}))->capture_default_str();
  ev->add_option("--landmarks", o.landmarks, "Landmarks per face in the CSVs")->capture_default_str();
  ev->add_option("--model", o.eval_model, "Evaluate a trained model instead of CSVs");
  ev->add_option("--data", o.eval_data, "Dataset directory for --model");
  ev->add_option("--errors", o.errors_out, "Write per-image errors CSV");
  ev->add_option("--ced", o.ced_out, "Write the CED curve CSV");
  ev->add_option("--json", o.json_out, "Write the report as JSON");
  add_aggregation_flags(ev, o);

  auto* pr = app.add_subcommand("predict", "Predict landmarks for one image");
  pr->add_option("--model", o.predict_model, "Model weights")->required();
  pr->add_option("--image", o.image, "Input image (.fgrid or PGM)")->required();
  pr->add_option("--plot", o.plot, "Write an SVG overlay");
  pr->add_option("--out", o.pred_out, "Write the prediction CSV line here instead of stdout");
  add_aggregation_flags(pr, o);

  auto* ab = app.add_subcommand("ablate", "Run an ablation plan");
  ab->add_option("--plan", o.plan, "Plan name")->check(CLI::IsMember(plan_names()))->capture_default_str();
  ab->add_option("--out", o.ablate_out, "Result directory")->capture_default_str();
  ab->add_option("--threads", o.threads, "Worker threads")->capture_default_str();
  ab->add_option("--epochs", o.plan_epochs, "Override epochs for every variant");
  ab->add_option("--train-count", o.train_count, "Override training set size");
  ab->add_option("--eval-count", o.eval_count, "Override samples per evaluation seed");
  ab->add_flag("--no-cache", o.no_cache, "Ignore cached results");

  auto* pl = app.add_subcommand("plot", "Render result SVGs");
  pl->add_option("--kind", o.plot_kind, "bins (from summary.json) or ced (from error CSVs)")
      ->check(CLI::IsMember({"bins", "ced"}))->capture_default_str();
  pl->add_option("--input", o.plot_inputs, "Input files; ced inputs may be name=path")->required();
  pl->add_option("--out", o.plot_out, "Output SVG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*gen) return cmd_gen_templates(o);
    if (*tr) return cmd_train(o);
    if (*ev) return cmd_eval(o);
    if (*pr) return cmd_predict(o);
    if (*ab) return cmd_ablate(o);
    if (*pl) return cmd_plot(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
