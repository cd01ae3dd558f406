#pragma once

// Synthetic domain pairs with controllable label shift, partial-DA class
// removal and domain rotation, plus stratified minibatch index streams.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "otda/matrix.hpp"
#include "otda/measure.hpp"
#include "otda/rng.hpp"

namespace otda {

enum class DomainTag { source, target };

struct LabeledDataset {
  Matrix points;            // n x d
  std::vector<int> labels;  // in {0..K-1}
  int class_count = 0;
  DomainTag domain_tag = DomainTag::source;

  std::size_t size() const { return points.rows; }

  void validate() const {
    require(points.rows >= 1, "dataset: empty");
    require(labels.size() == points.rows, "dataset: labels/points length mismatch");
    for (int l : labels)
      require(l >= 0 && l < class_count, "dataset: label out of range");
  }

  std::vector<int> class_histogram() const {
    std::vector<int> h(static_cast<std::size_t>(class_count), 0);
    for (int l : labels) ++h[static_cast<std::size_t>(l)];
    return h;
  }

  DiscreteMeasure as_measure() const {
    DiscreteMeasure m;
    m.points = points;
    m.weights.assign(size(), 1.0 / static_cast<double>(size()));
    m.labels = labels;
    m.one_hot = Matrix(size(), static_cast<std::size_t>(class_count));
    for (std::size_t i = 0; i < size(); ++i)
      m.one_hot(i, static_cast<std::size_t>(labels[i])) = 1.0;
    return m;
  }
};

struct ScenarioConfig {
  enum class Generator { figure1, blobs, moons };
  Generator generator = Generator::blobs;
  std::vector<int> source_counts;       // per class
  std::vector<int> target_counts;       // per class; dropped classes get 0
  double radius = 4.0;                  // circle of class means (blobs)
  double sigma = 0.6;                   // cluster standard deviation
  double target_rotation_deg = 0.0;     // applied to target means (blobs) / points (moons)
  std::vector<double> target_shift;     // optional mean shift, blobs only
  std::vector<double> mean_angles_deg;  // blobs mean placement; default: even circle
  double moons_noise = 0.1;
  std::vector<int> dropped_classes;
  std::uint64_t seed = 0;

  void validate() const {
    require(!source_counts.empty(), "scenario: source_counts empty");
    for (int c : source_counts) require(c >= 0, "scenario: negative class count");
    for (int c : target_counts) require(c >= 0, "scenario: negative class count");
    const int k = static_cast<int>(source_counts.size());
    require(mean_angles_deg.empty() || mean_angles_deg.size() == source_counts.size(),
            "scenario: mean_angles_deg size mismatch");
    for (int d : dropped_classes)
      require(d >= 0 && d < k, "scenario: dropped class out of range");
  }
};

namespace detail {

inline void append_gaussian_cluster(Matrix& pts, std::vector<int>& labels, std::size_t& cursor,
                                    int label, int count, double mx, double my, double sigma,
                                    Rng& rng) {
  for (int c = 0; c < count; ++c) {
    pts(cursor, 0) = mx + sigma * normal_double(rng);
    pts(cursor, 1) = my + sigma * normal_double(rng);
    labels[cursor] = label;
    ++cursor;
  }
}

inline std::pair<double, double> rotate(double x, double y, double deg) {
  const double rad = deg * 3.14159265358979323846 / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  return {c * x - s * y, s * x + c * y};
}

}  // namespace detail

// Three balanced source clusters (4 points each) against an imbalanced
// two-cluster target with counts (10, 2) on source classes 0 and 1.
// Cluster means sit far apart relative to sigma, so any cross-class
// transport is forced by the marginals or the minibatch sampling.
inline std::pair<LabeledDataset, LabeledDataset> gen_figure1_scenario(std::uint64_t seed) {
  const double side = 5.0;
  const double sigma = 0.35;
  const double means[3][2] = {{0.0, 0.0}, {side, 0.0}, {side / 2.0, side * 0.866}};

  Rng rng = make_rng(seed, 11);
  LabeledDataset src;
  src.class_count = 3;
  src.domain_tag = DomainTag::source;
  src.points = Matrix(12, 2);
  src.labels.assign(12, 0);
  std::size_t cur = 0;
  for (int k = 0; k < 3; ++k)
    detail::append_gaussian_cluster(src.points, src.labels, cur, k, 4, means[k][0], means[k][1],
                                    sigma, rng);

  LabeledDataset tgt;
  tgt.class_count = 3;
  tgt.domain_tag = DomainTag::target;
  tgt.points = Matrix(12, 2);
  tgt.labels.assign(12, 0);
  cur = 0;
  detail::append_gaussian_cluster(tgt.points, tgt.labels, cur, 0, 10, means[0][0], means[0][1],
                                  sigma, rng);
  detail::append_gaussian_cluster(tgt.points, tgt.labels, cur, 1, 2, means[1][0], means[1][1],
                                  sigma, rng);
  return {std::move(src), std::move(tgt)};
}

inline std::pair<LabeledDataset, LabeledDataset> gen_blobs_pair(const ScenarioConfig& cfg) {
  cfg.validate();
  const int K = static_cast<int>(cfg.source_counts.size());
  std::vector<int> tgt_counts = cfg.target_counts.empty() ? cfg.source_counts : cfg.target_counts;
  require(static_cast<int>(tgt_counts.size()) == K, "scenario: target_counts size mismatch");
  for (int d : cfg.dropped_classes) tgt_counts[static_cast<std::size_t>(d)] = 0;

  std::vector<std::pair<double, double>> means(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const double ang = cfg.mean_angles_deg.empty()
                           ? 2.0 * 3.14159265358979323846 * k / K + 3.14159265358979323846 / 2.0
                           : cfg.mean_angles_deg[static_cast<std::size_t>(k)] *
                                 3.14159265358979323846 / 180.0;
    means[static_cast<std::size_t>(k)] = {cfg.radius * std::cos(ang), cfg.radius * std::sin(ang)};
  }
  const double sx = cfg.target_shift.size() > 0 ? cfg.target_shift[0] : 0.0;
  const double sy = cfg.target_shift.size() > 1 ? cfg.target_shift[1] : 0.0;

  Rng rng = make_rng(cfg.seed, 13);
  const int n_src = std::accumulate(cfg.source_counts.begin(), cfg.source_counts.end(), 0);
  const int n_tgt = std::accumulate(tgt_counts.begin(), tgt_counts.end(), 0);
  require(n_src >= 1 && n_tgt >= 1, "scenario: empty domain");

  LabeledDataset src;
  src.class_count = K;
  src.domain_tag = DomainTag::source;
  src.points = Matrix(static_cast<std::size_t>(n_src), 2);
  src.labels.assign(static_cast<std::size_t>(n_src), 0);
  std::size_t cur = 0;
  for (int k = 0; k < K; ++k)
    detail::append_gaussian_cluster(src.points, src.labels, cur, k,
                                    cfg.source_counts[static_cast<std::size_t>(k)],
                                    means[static_cast<std::size_t>(k)].first,
                                    means[static_cast<std::size_t>(k)].second, cfg.sigma, rng);

  LabeledDataset tgt;
  tgt.class_count = K;
  tgt.domain_tag = DomainTag::target;
  tgt.points = Matrix(static_cast<std::size_t>(n_tgt), 2);
  tgt.labels.assign(static_cast<std::size_t>(n_tgt), 0);
  cur = 0;
  for (int k = 0; k < K; ++k) {
    auto [mx, my] = detail::rotate(means[static_cast<std::size_t>(k)].first,
                                   means[static_cast<std::size_t>(k)].second,
                                   cfg.target_rotation_deg);
    detail::append_gaussian_cluster(tgt.points, tgt.labels, cur, k,
                                    tgt_counts[static_cast<std::size_t>(k)], mx + sx, my + sy,
                                    cfg.sigma, rng);
  }
  return {std::move(src), std::move(tgt)};
}

// Two moons; the target domain is the same construction rotated about the
// symmetry center (0.5, 0.25), so a 180-degree rotation swaps the moons.
inline std::pair<LabeledDataset, LabeledDataset> gen_moons_pair(const ScenarioConfig& cfg) {
  cfg.validate();
  require(cfg.source_counts.size() == 2, "moons: exactly two classes");
  std::vector<int> tgt_counts = cfg.target_counts.empty() ? cfg.source_counts : cfg.target_counts;
  require(tgt_counts.size() == 2, "moons: target_counts size mismatch");
  for (int d : cfg.dropped_classes) tgt_counts[static_cast<std::size_t>(d)] = 0;

  Rng rng = make_rng(cfg.seed, 17);
  auto make = [&](const std::vector<int>& counts, double rot_deg, DomainTag tag) {
    const int n = counts[0] + counts[1];
    LabeledDataset ds;
    ds.class_count = 2;
    ds.domain_tag = tag;
    ds.points = Matrix(static_cast<std::size_t>(n), 2);
    ds.labels.assign(static_cast<std::size_t>(n), 0);
    std::size_t cur = 0;
    for (int cls = 0; cls < 2; ++cls) {
      for (int c = 0; c < counts[static_cast<std::size_t>(cls)]; ++c) {
        const double t = 3.14159265358979323846 * uniform_double(rng);
        double x = cls == 0 ? std::cos(t) : 1.0 - std::cos(t);
        double y = cls == 0 ? std::sin(t) : 0.5 - std::sin(t);
        x += cfg.moons_noise * normal_double(rng);
        y += cfg.moons_noise * normal_double(rng);
        auto [rx, ry] = detail::rotate(x - 0.5, y - 0.25, rot_deg);
        ds.points(cur, 0) = rx + 0.5;
        ds.points(cur, 1) = ry + 0.25;
        ds.labels[cur] = cls;
        ++cur;
      }
    }
    return ds;
  };
  auto src = make(cfg.source_counts, 0.0, DomainTag::source);
  auto tgt = make(tgt_counts, cfg.target_rotation_deg, DomainTag::target);
  return {std::move(src), std::move(tgt)};
}

inline std::pair<LabeledDataset, LabeledDataset> generate_scenario(const ScenarioConfig& cfg) {
  switch (cfg.generator) {
    case ScenarioConfig::Generator::figure1: return gen_figure1_scenario(cfg.seed);
    case ScenarioConfig::Generator::blobs: return gen_blobs_pair(cfg);
    case ScenarioConfig::Generator::moons: return gen_moons_pair(cfg);
  }
  throw std::invalid_argument("scenario: unknown generator");
}

// One epoch of stratified index batches: m/K samples of every class per
// batch, sampled without replacement within the epoch. Requires K | m.
inline std::vector<std::vector<int>> stratified_batches(const LabeledDataset& ds, int m, Rng& rng) {
  ds.validate();
  const int K = ds.class_count;
  require(m >= 1, "stratified_batches: m < 1");
  require(m % K == 0, "stratified_batches: class count must divide batch size");
  const int quota = m / K;

  std::vector<std::vector<int>> per_class(static_cast<std::size_t>(K));
  for (std::size_t i = 0; i < ds.size(); ++i)
    per_class[static_cast<std::size_t>(ds.labels[i])].push_back(static_cast<int>(i));
  int num_batches = -1;
  for (int k = 0; k < K; ++k) {
    auto& idx = per_class[static_cast<std::size_t>(k)];
    require(static_cast<int>(idx.size()) >= quota, "stratified_batches: class smaller than quota");
    shuffle(idx, rng);
    const int nb = static_cast<int>(idx.size()) / quota;
    num_batches = num_batches < 0 ? nb : std::min(num_batches, nb);
  }

  std::vector<std::vector<int>> batches(static_cast<std::size_t>(num_batches));
  for (int bidx = 0; bidx < num_batches; ++bidx) {
    auto& batch = batches[static_cast<std::size_t>(bidx)];
    batch.reserve(static_cast<std::size_t>(m));
    for (int k = 0; k < K; ++k)
      for (int q = 0; q < quota; ++q)
        batch.push_back(per_class[static_cast<std::size_t>(k)][static_cast<std::size_t>(bidx * quota + q)]);
  }
  return batches;
}

}  // namespace otda
