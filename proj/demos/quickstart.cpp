#include <cstdio>
#include <vector>

#include "anchorface/anchorface.hpp"

using namespace anchorface;

int main() {
  SyntheticDistribution dist;
  const auto train_set = synth_dataset(dist, 1, 800);
  const auto test_set = synth_dataset(dist, 2, 100);

  std::vector<LandmarkShape> shapes;
  for (const auto& s : train_set) shapes.push_back(s.gt);
  const auto side = static_cast<double>(dist.image_side);
  AnchorSetup setup(build_anchor_grid({side, side / 4.0, 7, 7}), kmeans_templates(shapes, 3, 45.0, 7));

  ModelConfig cfg;
  cfg.input_side = dist.image_side;
  cfg.K = static_cast<int>(setup.templates.size());
  TrainSchedule schedule;
  schedule.epochs = 15;
  LossConfig loss;
  loss.beta = kDeskBeta;

  const auto result = train(train_set, setup, cfg, schedule, loss, [](int e, double loss) {
    std::printf("epoch %d  loss %.4f\n", e + 1, loss);
  });
  const auto fields = predict_fields(cfg, result.params, test_set);
  for (auto strategy : {AggregateStrategy::Weighted, AggregateStrategy::Argmax, AggregateStrategy::Mean}) {
    AggregateConfig agg;
    agg.strategy = strategy;
    const auto r = evaluate_fields(fields, test_set, setup, agg, strategy == AggregateStrategy::Weighted);
    std::printf("%-8s NME %.4f  AUC@0.1 %.4f", to_string(strategy).c_str(), r.nme, r.auc_01);
    if (r.pearson) std::printf("  P %.3f", r.pearson->p);
    std::printf("\n");
  }
}
