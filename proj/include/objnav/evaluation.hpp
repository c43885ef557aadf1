#pragma once

#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "objnav/costfield.hpp"
#include "objnav/dataset.hpp"
#include "objnav/predictor.hpp"
#include "objnav/suite.hpp"
#include "objnav/wire.hpp"

namespace objnav {

/// Rebuilds a map stack from its (18, n, n) tensor.
inline SemanticMapStack stack_from_tensor(const Tensor& t, Cell origin, double resolution, int cell_size = 1) {
  if (t.shape.size() != 3 || t.shape[0] != static_cast<std::uint32_t>(kMapChannels) || t.shape[1] != t.shape[2])
    throw ShapeError("map tensor must be (18, n, n)");
  SemanticMapStack m(static_cast<int>(t.shape[1]), origin, resolution, cell_size);
  std::copy(t.data.begin(), t.data.end(), m.values().begin());
  return m;
}

inline Observation observation_from_rays(const Tensor& rays, const AgentState& pose, double max_range = 5.0) {
  if (rays.shape.size() != 2 || rays.shape[0] != 2) throw ShapeError("rays must be (2, n)");
  const std::uint32_t n = rays.shape[1];
  Observation o;
  o.pose = pose;
  o.max_range = max_range;
  for (std::uint32_t i = 0; i < n; ++i) {
    Ray r;
    r.hit_distance = rays.data[i];
    const float cls = rays.data[n + i];
    if (cls >= 0.0f) r.hit_class = static_cast<CellClass>(static_cast<int>(cls));
    o.rays.push_back(std::move(r));
  }
  return o;
}

/// The request a remote predictor would have received for this sample.
inline PredictionRequest request_from_sample(const DatasetSample& s, double resolution = 0.05) {
  const SemanticMapStack local = stack_from_tensor(s.local, s.origin, resolution);
  const SemanticMapStack global = stack_from_tensor(s.global, s.global_origin, resolution);
  const Observation obs = observation_from_rays(s.rays, s.pose);
  return make_request(s.episode, s.step, kTargetCategories.at(static_cast<std::size_t>(s.target)), s.pose, local,
                      global, obs);
}

struct PredictionMetrics {
  LossTerms losses;
  double total = 0.0;
  double aap5 = 0.0;
  double aap9 = 0.0;
  OccupancyMetrics occupancy;
};

/// Losses, aAP and occupancy scores of `pred` against the sample's ground truth.
inline PredictionMetrics evaluate_prediction(const DatasetSample& s, const PredictionResponse& pred,
                                             double theta_occ = 0.5, const LossWeights& w = {}) {
  const Grid<double> gt_nav = tensor_grid(s.nav);
  const Grid<double> gt_occ = tensor_grid(s.occ);
  PredictionMetrics m;
  m.losses = loss_terms(gt_nav, gt_occ, pred.nav, pred.occ);
  m.total = total_loss(m.losses, w);
  const CostMap gt = make_costmap(gt_nav, gt_occ, s.origin, pred.resolution, theta_occ);
  const CostMap pr = make_costmap(pred.nav, pred.occ, s.origin, pred.resolution, theta_occ);
  m.aap5 = action_prediction_accuracy(gt, pr, 5, theta_occ);
  m.aap9 = action_prediction_accuracy(gt, pr, 9, theta_occ);
  auto binary = [theta_occ](const Grid<double>& g) {
    return map_grid<std::uint8_t>(g, [theta_occ](double v) -> std::uint8_t { return v >= theta_occ; });
  };
  m.occupancy = occupancy_metrics(binary(gt_occ), binary(pred.occ));
  return m;
}

/// Predicts a stored sample with a named provider: gt (regenerates the world
/// from its seed), frontier, or remote.
class SamplePredictor {
 public:
  SamplePredictor(AgentKind kind, std::string endpoint = {}, int timeout_ms = wire::kDefaultTimeoutMs,
                  WorldGenParams world = {})
      : kind_(kind), world_params_(world) {
    if (kind == AgentKind::Remote) {
      if (endpoint.empty()) throw Error("remote predictor needs an endpoint");
      remote_ = std::make_unique<wire::RemoteProvider>(std::move(endpoint), timeout_ms);
    }
    if (kind == AgentKind::Random) throw Error("the random agent has no cost-map predictor");
  }

  PredictionResponse predict(const DatasetSample& s) {
    const CellClass target = kTargetCategories.at(static_cast<std::size_t>(s.target));
    switch (kind_) {
      case AgentKind::Gt: {
        if (!world_ || world_->seed != s.world_seed)
          world_ = std::make_unique<WorldGrid>(generate_world(s.world_seed, world_params_));
        EpisodeConfig ep;
        ep.world_seed = s.world_seed;
        ep.target = target;
        return gt_oracle_predict(*world_, ep, s.pose);
      }
      case AgentKind::Frontier:
        return partial_fmm_predict(stack_from_tensor(s.local, s.origin, world_params_.resolution), target, s.pose,
                                   FrontierOptions{1.0, 4});
      case AgentKind::Remote:
        return remote_->predict(request_from_sample(s, world_params_.resolution), s.origin, world_params_.resolution);
      case AgentKind::Random:
        break;
    }
    throw Error("unsupported predictor");
  }

 private:
  AgentKind kind_;
  WorldGenParams world_params_;
  std::unique_ptr<WorldGrid> world_;
  std::unique_ptr<wire::RemoteProvider> remote_;
};

inline std::string prediction_csv_header() {
  return "sample,loss_occ,loss_cost,loss_dir,loss_total,aap5,aap9,acc_occupied,acc_free,f1_occupied,f1_free,"
         "iou_occupied,iou_free,mpa,mf1,miou\n";
}

inline std::string prediction_csv_row(const std::string& name, const PredictionMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%.6f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n",
                m.losses.occ, m.losses.cost, m.losses.dir, m.total, m.aap5, m.aap9, m.occupancy.accuracy[0],
                m.occupancy.accuracy[1], m.occupancy.f1[0], m.occupancy.f1[1], m.occupancy.iou[0], m.occupancy.iou[1],
                m.occupancy.mpa, m.occupancy.mf1, m.occupancy.miou);
  return csv_field(name) + buf;
}

/// Scores every sample of a split; the last row ("mean") averages the columns.
inline std::string evaluate_split_csv(const std::filesystem::path& split_dir, SamplePredictor& predictor,
                                      std::size_t limit = 0) {
  const DatasetManifest manifest = load_manifest(split_dir);
  std::string out = prediction_csv_header();
  PredictionMetrics mean;
  std::size_t n = 0;
  for (const std::string& rel : manifest.samples()) {
    if (limit && n >= limit) break;
    const DatasetSample s = load_sample(split_dir / rel);
    const PredictionMetrics m = evaluate_prediction(s, predictor.predict(s));
    out += prediction_csv_row(rel, m);
    mean.losses.occ += m.losses.occ;
    mean.losses.cost += m.losses.cost;
    mean.losses.dir += m.losses.dir;
    mean.total += m.total;
    mean.aap5 += m.aap5;
    mean.aap9 += m.aap9;
    for (int k = 0; k < 2; ++k) {
      mean.occupancy.accuracy[k] += m.occupancy.accuracy[k];
      mean.occupancy.f1[k] += m.occupancy.f1[k];
      mean.occupancy.iou[k] += m.occupancy.iou[k];
    }
    mean.occupancy.mpa += m.occupancy.mpa;
    mean.occupancy.mf1 += m.occupancy.mf1;
    mean.occupancy.miou += m.occupancy.miou;
    ++n;
  }
  if (n == 0) throw DatasetError("split has no samples");
  const double d = static_cast<double>(n);
  mean.losses = {mean.losses.occ / d, mean.losses.cost / d, mean.losses.dir / d};
  mean.total /= d;
  mean.aap5 /= d;
  mean.aap9 /= d;
  for (int k = 0; k < 2; ++k) {
    mean.occupancy.accuracy[k] /= d;
    mean.occupancy.f1[k] /= d;
    mean.occupancy.iou[k] /= d;
  }
  mean.occupancy.mpa /= d;
  mean.occupancy.mf1 /= d;
  mean.occupancy.miou /= d;
  out += prediction_csv_row("mean", mean);
  return out;
}

}  // namespace objnav
