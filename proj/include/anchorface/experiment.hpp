#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "anchorface/aggregate.hpp"
#include "anchorface/anchors.hpp"
#include "anchorface/data.hpp"
#include "anchorface/metrics.hpp"
#include "anchorface/net.hpp"
#include "anchorface/train.hpp"

namespace anchorface {

struct TemplateSpec {
  TemplateProvenance provenance = TemplateProvenance::KMeans;
  int n_base = 3;
  double roll_step = 45.0;
  double gamma = 6.0;  // hand design only
  std::uint64_t seed = 7;
  EmptyBucketPolicy empty_bucket = EmptyBucketPolicy::GlobalMean;

  friend bool operator==(const TemplateSpec&, const TemplateSpec&) = default;
};

inline nlohmann::ordered_json to_json(const TemplateSpec& t) {
  nlohmann::ordered_json j;
  j["provenance"] = to_string(t.provenance);
  j["n_base"] = t.n_base;
  j["roll_step"] = t.roll_step;
  j["gamma"] = t.gamma;
  j["seed"] = t.seed;
  j["empty_bucket"] = t.empty_bucket == EmptyBucketPolicy::Error ? "error" : "global-mean";
  return j;
}

/// Builds the template set from the training ground truths.
inline AnchorTemplateSet build_templates(const TemplateSpec& spec, std::span<const LandmarkShape> training) {
  if (spec.provenance == TemplateProvenance::HandDesign) {
    return hand_design_templates(training, kFaceEyes, spec.gamma, spec.roll_step, {}, spec.empty_bucket);
  }
  return kmeans_templates(training, spec.n_base, spec.roll_step, spec.seed);
}

inline int template_count(const TemplateSpec& spec) {
  const int bases = spec.provenance == TemplateProvenance::HandDesign ? 3 : spec.n_base;
  return bases * static_cast<int>(std::lround(360.0 / spec.roll_step));
}

struct DatasetSpec {
  SyntheticDistribution distribution{};
  std::uint64_t train_seed = 1;
  std::size_t train_count = 2000;
  std::vector<std::uint64_t> eval_seeds{101, 102, 103};
  std::size_t eval_count = 500;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

inline nlohmann::ordered_json to_json(const DatasetSpec& d) {
  nlohmann::ordered_json j;
  j["distribution"] = to_json(d.distribution);
  j["train_seed"] = d.train_seed;
  j["train_count"] = d.train_count;
  j["eval_seeds"] = d.eval_seeds;
  j["eval_count"] = d.eval_count;
  return j;
}

struct Variant {
  std::string name;
  ModelConfig model{};
  AnchorGridConfig grid{};
  TemplateSpec templates{};
  AggregateConfig aggregate{};
  LossConfig loss{};
  TrainSchedule schedule{};

  bool is_baseline() const { return model.head == HeadKind::Direct; }
};

/// Everything that determines the trained weights (aggregation excluded).
inline nlohmann::ordered_json training_json(const Variant& v, const DatasetSpec& data) {
  nlohmann::ordered_json j;
  j["model"] = to_json(v.model);
  j["schedule"] = to_json(v.schedule);
  j["train_data"] = {{"distribution", to_json(data.distribution)},
                     {"seed", data.train_seed},
                     {"count", data.train_count}};
  if (!v.is_baseline()) {
    j["grid"] = {{"image_side", v.grid.image_side},
                 {"anchor_area_side", v.grid.anchor_area_side},
                 {"grid_rows", v.grid.grid_rows},
                 {"grid_cols", v.grid.grid_cols}};
    j["templates"] = to_json(v.templates);
    j["loss"] = to_json(v.loss);
  }
  return j;
}

inline nlohmann::ordered_json variant_json(const Variant& v, const DatasetSpec& data) {
  nlohmann::ordered_json j = training_json(v, data);
  if (!v.is_baseline()) {
    j["aggregate"] = {{"strategy", to_string(v.aggregate.strategy)},
                      {"c_th", v.aggregate.c_th},
                      {"fallback", v.aggregate.fallback == AggregateFallback::Error ? "error" : "argmax"}};
  }
  j["eval_data"] = {{"seeds", data.eval_seeds}, {"count", data.eval_count}};
  return j;
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string variant_hash(const Variant& v, const DatasetSpec& data) {
  return hex64(fnv1a(variant_json(v, data).dump()));
}
inline std::string training_hash(const Variant& v, const DatasetSpec& data) {
  return hex64(fnv1a(training_json(v, data).dump()));
}

struct ExperimentPlan {
  std::string name;
  DatasetSpec data{};
  std::vector<Variant> variants;

  void validate() const {
    if (variants.empty()) detail::fail(ErrorKind::Config, "plan '" + name + "' has no variants");
    if (data.eval_seeds.empty() || data.train_count == 0 || data.eval_count == 0) {
      detail::fail(ErrorKind::Config, "plan '" + name + "' needs training data and at least one evaluation seed");
    }
    std::map<std::string, int> names;
    for (const auto& v : variants) {
      if (++names[v.name] > 1) detail::fail(ErrorKind::Config, "duplicate variant name '" + v.name + "'");
      v.model.validate();
      v.schedule.validate();
      if (!v.is_baseline()) {
        v.grid.validate();
        v.loss.validate();
        v.aggregate.validate();
        if (v.model.K != template_count(v.templates)) {
          detail::fail(ErrorKind::Config, "variant '" + v.name + "': model K does not match the template spec");
        }
        if (v.model.grid_rows != v.grid.grid_rows || v.model.grid_cols != v.grid.grid_cols) {
          detail::fail(ErrorKind::Config, "variant '" + v.name + "': model grid does not match the anchor grid");
        }
      }
    }
  }
};

// ---- plan builders -------------------------------------------------------------

/// Loss temperature used by the desk-scale plans. Synthetic pose distances
/// are small enough that the library default leaves every target near 1.
inline constexpr double kDeskBeta = 0.01;

inline Variant anchorface_variant(std::string name, const DatasetSpec& data) {
  Variant v;
  v.name = std::move(name);
  v.model.input_side = data.distribution.image_side;
  v.grid.image_side = data.distribution.image_side;
  v.grid.anchor_area_side = data.distribution.image_side / 4.0;
  v.model.K = template_count(v.templates);
  v.model.L = static_cast<int>(kFaceLandmarks);
  v.model.seed = 3;
  v.schedule.seed = 5;
  v.loss.beta = kDeskBeta;
  return v;
}

inline Variant baseline_variant(const DatasetSpec& data) {
  Variant v = anchorface_variant("baseline", data);
  v.model.head = HeadKind::Direct;
  return v;
}

inline Variant with_strategy(Variant v, AggregateStrategy s) {
  v.aggregate.strategy = s;
  v.name += "-" + to_string(s);
  return v;
}

/// Baseline against the reference anchor model under all three
/// aggregation strategies.
inline ExperimentPlan default_plan() {
  ExperimentPlan p{"default", {}, {}};
  p.variants.push_back(baseline_variant(p.data));
  for (auto s : {AggregateStrategy::Weighted, AggregateStrategy::Argmax, AggregateStrategy::Mean}) {
    p.variants.push_back(with_strategy(anchorface_variant("anchorface", p.data), s));
  }
  return p;
}

inline ExperimentPlan aggregation_plan() {
  ExperimentPlan p = default_plan();
  p.name = "aggregation";
  p.variants.erase(p.variants.begin());
  return p;
}

inline ExperimentPlan templates_plan() {
  ExperimentPlan p{"templates", {}, {}};
  auto add = [&](std::string name, TemplateSpec t) {
    Variant v = anchorface_variant(std::move(name), p.data);
    v.templates = t;
    v.model.K = template_count(t);
    p.variants.push_back(std::move(v));
  };
  add("hand-24", {TemplateProvenance::HandDesign, 3, 45.0});
  add("kmeans-3", {TemplateProvenance::KMeans, 3, 360.0});
  add("kmeans-24", {TemplateProvenance::KMeans, 3, 45.0});
  add("kmeans-48", {TemplateProvenance::KMeans, 3, 22.5});
  return p;
}

inline ExperimentPlan area_plan() {
  ExperimentPlan p{"area", {}, {}};
  const double side = p.data.distribution.image_side;
  for (double frac : {0.125, 0.25, 0.5, 1.0}) {
    Variant v = anchorface_variant("area-" + std::to_string(static_cast<int>(side * frac)), p.data);
    v.grid.anchor_area_side = side * frac;
    p.variants.push_back(std::move(v));
  }
  return p;
}

inline ExperimentPlan grid_plan() {
  ExperimentPlan p{"grid", {}, {}};
  for (int g : {3, 5, 7}) {
    Variant v = anchorface_variant("grid-" + std::to_string(g) + "x" + std::to_string(g), p.data);
    v.grid.grid_rows = v.grid.grid_cols = v.model.grid_rows = v.model.grid_cols = g;
    p.variants.push_back(std::move(v));
  }
  return p;
}

inline std::vector<std::string> plan_names() { return {"default", "aggregation", "templates", "area", "grid"}; }

inline ExperimentPlan plan_by_name(const std::string& name) {
  if (name == "default") return default_plan();
  if (name == "aggregation") return aggregation_plan();
  if (name == "templates") return templates_plan();
  if (name == "area") return area_plan();
  if (name == "grid") return grid_plan();
  detail::fail(ErrorKind::Config, "unknown plan '" + name + "'");
}

/// Applies one override to every variant of a plan (epochs, dataset sizes).
inline void scale_plan(ExperimentPlan& plan, std::optional<int> epochs, std::optional<std::size_t> train_count,
                       std::optional<std::size_t> eval_count) {
  if (train_count) plan.data.train_count = *train_count;
  if (eval_count) plan.data.eval_count = *eval_count;
  if (epochs) {
    for (auto& v : plan.variants) v.schedule.epochs = *epochs;
  }
}

// ---- running -------------------------------------------------------------------

enum class VariantStatus { Ok, Failed, Cached };

struct VariantResult {
  std::string variant;
  std::string config_hash;
  VariantStatus status = VariantStatus::Ok;
  std::string error;
  EvalReport report;                // pooled over every evaluation seed
  std::vector<double> seed_nme;     // one NME per evaluation seed
  double wall_time_s = 0.0;

  double mean_seed_nme() const {
    double s = 0.0;
    for (double v : seed_nme) s += v;
    return seed_nme.empty() ? 0.0 : s / static_cast<double>(seed_nme.size());
  }
};

inline nlohmann::ordered_json result_json(const VariantResult& r, bool with_time) {
  nlohmann::ordered_json j;
  j["config_hash"] = r.config_hash;
  j["variant"] = r.variant;
  j["status"] = r.status == VariantStatus::Failed ? "failed" : "ok";
  if (r.status == VariantStatus::Failed) {
    j["error"] = r.error;
  } else {
    j["report"] = to_json(r.report);
    j["seed_nme"] = r.seed_nme;
  }
  if (with_time) j["wall_time_s"] = r.wall_time_s;
  return j;
}

struct RunOptions {
  std::filesystem::path out_dir;  // empty: nothing persisted
  int threads = 1;
  bool use_cache = true;
  std::function<void(const std::string&)> log;
};

struct PlanResult {
  std::string plan_name;
  std::string train_hash;
  std::vector<std::string> eval_hashes;
  std::vector<VariantResult> results;  // plan order

  const VariantResult& at(const std::string& variant) const {
    for (const auto& r : results) {
      if (r.variant == variant) return r;
    }
    detail::fail(ErrorKind::Index, "no result for variant '" + variant + "'");
  }
};

/// Content hash of a dataset: pixels, landmarks, boxes and poses.
inline std::string dataset_hash(std::span<const Sample> data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto bytes = [&](const void* p, std::size_t n) { h = fnv1a(std::string_view(static_cast<const char*>(p), n), h); };
  for (const auto& s : data) {
    bytes(s.image.data.data(), s.image.data.size() * sizeof(float));
    for (const auto& pt : s.gt) bytes(&pt, sizeof pt);
    bytes(&s.box, sizeof s.box);
    const double yaw = s.yaw_deg.value_or(0.0);
    bytes(&yaw, sizeof yaw);
  }
  return hex64(h);
}

/// Canonical, time-free JSON summary of a run.
inline nlohmann::ordered_json summary_json(const PlanResult& pr) {
  nlohmann::ordered_json j;
  j["plan"] = pr.plan_name;
  j["train_data_hash"] = pr.train_hash;
  j["eval_data_hashes"] = pr.eval_hashes;
  auto& rows = j["variants"] = nlohmann::ordered_json::array();
  for (const auto& r : pr.results) rows.push_back(result_json(r, false));
  return j;
}

/// Append-only JSON-lines store keyed by config hash.
class ResultStore {
 public:
  explicit ResultStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    if (dir_.empty()) return;
    std::filesystem::create_directories(dir_);
    std::ifstream in(path());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || j.value("status", "") != "ok") continue;
      cache_[j.at("config_hash").get<std::string>()] = j;
    }
  }

  std::optional<nlohmann::json> find(const std::string& hash) const {
    std::lock_guard lock(mu_);
    auto it = cache_.find(hash);
    if (it == cache_.end()) return std::nullopt;
    return std::optional<nlohmann::json>(std::in_place, it->second);
  }

  void append(const std::string& plan_name, const VariantResult& r) {
    if (dir_.empty()) return;
    nlohmann::ordered_json j;
    j["config_hash"] = r.config_hash;
    j["plan_name"] = plan_name;
    j["variant"] = r.variant;
    j["status"] = r.status == VariantStatus::Failed ? "failed" : "ok";
    if (r.status == VariantStatus::Failed) {
      j["error"] = r.error;
    } else {
      j["report"] = to_json(r.report);
      j["seed_nme"] = r.seed_nme;
    }
    j["wall_time_s"] = r.wall_time_s;
    std::lock_guard lock(mu_);
    std::ofstream out(path(), std::ios::app);
    out << j.dump() << "\n";
    if (!out) detail::fail(ErrorKind::Io, "cannot append to " + path().string());
    if (r.status != VariantStatus::Failed) cache_[r.config_hash] = j;
  }

  std::filesystem::path path() const { return dir_ / "results.jsonl"; }

 private:
  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::map<std::string, nlohmann::json> cache_;
};

namespace detail {

struct PlanData {
  std::vector<Sample> train;
  std::vector<std::vector<Sample>> eval;
  std::vector<Sample> eval_pooled;
  std::vector<std::string> eval_hashes;
  std::string train_hash;
};

inline PlanData make_plan_data(const DatasetSpec& spec) {
  PlanData d;
  d.train = synth_dataset(spec.distribution, spec.train_seed, spec.train_count);
  d.train_hash = dataset_hash(d.train);
  for (auto seed : spec.eval_seeds) {
    d.eval.push_back(synth_dataset(spec.distribution, seed, spec.eval_count));
    d.eval_hashes.push_back(dataset_hash(d.eval.back()));
    d.eval_pooled.insert(d.eval_pooled.end(), d.eval.back().begin(), d.eval.back().end());
  }
  return d;
}

inline void verify_paired(const PlanData& d) {
  if (dataset_hash(d.train) != d.train_hash) fail(ErrorKind::State, "training set changed during the run");
  for (std::size_t i = 0; i < d.eval.size(); ++i) {
    if (dataset_hash(d.eval[i]) != d.eval_hashes[i]) fail(ErrorKind::State, "evaluation set changed during the run");
  }
}

/// Variants sharing one set of trained weights.
struct TrainGroup {
  std::string key;
  std::vector<std::size_t> members;
};

inline std::vector<TrainGroup> group_by_training(const ExperimentPlan& plan) {
  std::vector<TrainGroup> groups;
  for (std::size_t i = 0; i < plan.variants.size(); ++i) {
    const std::string key = training_hash(plan.variants[i], plan.data);
    auto it = std::find_if(groups.begin(), groups.end(), [&](const TrainGroup& g) { return g.key == key; });
    if (it == groups.end()) {
      groups.push_back({key, {i}});
    } else {
      it->members.push_back(i);
    }
  }
  return groups;
}

inline std::vector<double> split_seed_nme(std::span<const double> errors, std::size_t per_seed) {
  std::vector<double> out;
  for (std::size_t start = 0; start < errors.size(); start += per_seed) {
    double s = 0.0;
    for (std::size_t i = start; i < start + per_seed; ++i) s += errors[i];
    out.push_back(s / static_cast<double>(per_seed));
  }
  return out;
}

inline void run_group(const ExperimentPlan& plan, const TrainGroup& group, const PlanData& data,
                      std::vector<VariantResult>& results, const RunOptions& opts) {
  const Variant& head = plan.variants[group.members.front()];
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  auto fail_all = [&](const std::string& msg) {
    for (auto i : group.members) {
      results[i].status = VariantStatus::Failed;
      results[i].error = msg;
      results[i].wall_time_s = elapsed();
    }
  };
  try {
    std::vector<LandmarkShape> shapes;
    shapes.reserve(data.train.size());
    for (const auto& s : data.train) shapes.push_back(s.gt);
    const auto log_epoch = [&](int e, double loss) {
      if (opts.log) opts.log(head.name + " epoch " + std::to_string(e + 1) + " loss " + std::to_string(loss));
    };
    const std::size_t per_seed = plan.data.eval_count;
    if (head.is_baseline()) {
      const auto trained = train_baseline(data.train, head.model, head.schedule, log_epoch);
      verify_paired(data);
      const auto preds = predict_direct(head.model, trained.params, data.eval_pooled);
      std::vector<LandmarkShape> gts;
      for (const auto& s : data.eval_pooled) gts.push_back(s.gt);
      const auto errors = per_image_errors(preds, gts, face_size_factors(data.eval_pooled));
      for (auto i : group.members) {
        results[i].report = make_report(errors, yaw_list(data.eval_pooled));
        results[i].seed_nme = split_seed_nme(errors, per_seed);
      }
    } else {
      const AnchorSetup setup(build_anchor_grid(head.grid), build_templates(head.templates, shapes));
      const auto trained = train(data.train, setup, head.model, head.schedule, head.loss, log_epoch);
      verify_paired(data);
      const auto fields = predict_fields(head.model, trained.params, data.eval_pooled);
      std::vector<PearsonImage> series;
      series.reserve(fields.size());
      for (std::size_t k = 0; k < fields.size(); ++k) series.push_back(pearson_series(fields[k], data.eval_pooled[k].gt, setup));
      const auto pr = pearson_analysis(series);
      std::vector<LandmarkShape> gts;
      for (const auto& s : data.eval_pooled) gts.push_back(s.gt);
      const auto factors = face_size_factors(data.eval_pooled);
      for (auto i : group.members) {
        const auto& v = plan.variants[i];
        std::vector<LandmarkShape> preds;
        preds.reserve(fields.size());
        for (const auto& f : fields) preds.push_back(aggregate(f, setup.grid, setup.templates, v.aggregate, setup.table).landmarks);
        const auto errors = per_image_errors(preds, gts, factors);
        results[i].report = make_report(errors, yaw_list(data.eval_pooled));
        results[i].report.pearson = pr;
        results[i].seed_nme = split_seed_nme(errors, per_seed);
      }
    }
    for (auto i : group.members) results[i].wall_time_s = elapsed();
  } catch (const Error& e) {
    fail_all(e.what());
  }
}

}  // namespace detail

/// Trains and evaluates every variant of the plan on paired datasets.
/// Variants that share weights (differing only in aggregation) are
/// trained once. Results already present in the store are reused.
inline PlanResult run_plan(const ExperimentPlan& plan, const RunOptions& opts = {}) {
  plan.validate();
  ResultStore store(opts.out_dir);
  const auto data = detail::make_plan_data(plan.data);

  PlanResult pr;
  pr.plan_name = plan.name;
  pr.train_hash = data.train_hash;
  pr.eval_hashes = data.eval_hashes;
  pr.results.resize(plan.variants.size());
  for (std::size_t i = 0; i < plan.variants.size(); ++i) {
    pr.results[i].variant = plan.variants[i].name;
    pr.results[i].config_hash = variant_hash(plan.variants[i], plan.data);
  }

  std::vector<detail::TrainGroup> pending;
  for (auto& g : detail::group_by_training(plan)) {
    bool all_cached = opts.use_cache;
    for (auto i : g.members) all_cached = all_cached && store.find(pr.results[i].config_hash).has_value();
    if (!all_cached) {
      pending.push_back(std::move(g));
      continue;
    }
    for (auto i : g.members) {
      const auto j = *store.find(pr.results[i].config_hash);
      pr.results[i].status = VariantStatus::Cached;
      pr.results[i].report = report_from_json(j.at("report"));
      pr.results[i].seed_nme = j.at("seed_nme").get<std::vector<double>>();
      pr.results[i].wall_time_s = j.value("wall_time_s", 0.0);
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t g = next++; g < pending.size(); g = next++) {
      detail::run_group(plan, pending[g], data, pr.results, opts);
      for (auto i : pending[g].members) store.append(plan.name, pr.results[i]);
      if (opts.log) opts.log("finished " + plan.variants[pending[g].members.front()].name);
    }
  };
  const int n = std::max(1, std::min<int>(opts.threads, static_cast<int>(pending.size())));
  {
    std::vector<std::jthread> pool;
    for (int t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
  }

  if (!opts.out_dir.empty()) {
    std::ofstream out(opts.out_dir / "summary.json", std::ios::trunc);
    out << summary_json(pr).dump(2) << "\n";
    if (!out) detail::fail(ErrorKind::Io, "cannot write summary.json");
  }
  return pr;
}

}  // namespace anchorface
