#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "mpreuse/common.hpp"

namespace mpreuse {

struct LabeledSample {
  Vector features;
  ClassLabel label = 0;
};

/// One party's shard: samples, the local label space, and the global class count K.
///
/// Immutable after construction. The label space is kept sorted and may be a
/// strict superset of the labels that actually occur (a party may declare a
/// class it holds no samples of), but never a subset.
class LocalDataset {
 public:
  LocalDataset() = default;

  // Label space inferred from the samples.
  LocalDataset(std::vector<LabeledSample> samples, int num_classes);
  LocalDataset(std::vector<LabeledSample> samples, std::vector<ClassLabel> label_space, int num_classes);

  const std::vector<LabeledSample>& samples() const { return samples_; }
  const LabeledSample& operator[](std::size_t i) const { return samples_[i]; }
  const std::vector<ClassLabel>& label_space() const { return label_space_; }
  int num_classes() const { return num_classes_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  // Feature dimension; 0 for an empty dataset.
  std::size_t dim() const;

  std::vector<std::size_t> class_counts() const;
  std::vector<Vector> features() const;
  std::vector<ClassLabel> labels() const;

 private:
  std::vector<LabeledSample> samples_;
  std::vector<ClassLabel> label_space_;
  int num_classes_ = 0;
};

struct PartyRule {
  std::vector<ClassLabel> classes;
  double fraction = 1.0;
  // Optional per-class fractions, parallel to classes; overrides fraction when set.
  std::vector<double> class_fractions;

  // Fraction of class c this party receives; 0 for classes outside the rule.
  double fraction_of(ClassLabel c) const;
};

/// Biased multiparty split: for each party, which classes it sees and what
/// fraction of each of those classes' samples it receives.
struct PartitionSpec {
  std::uint64_t seed = 0;
  std::vector<PartyRule> parties;

  // Throws InvalidArgument when fractions are out of (0,1], a class is
  // over-allocated, a label is out of range, or some class has no party.
  void validate(int num_classes) const;
};

/// Geometry of the synthetic blob mixture used by generate_toy.
struct BlobGeometry {
  std::vector<Vector> means;
  double sigma = 0.8;
};

// Class means lie on a circle (radius 4 for K <= 5, wider for larger K so
// neighbouring blobs keep the same spacing); class 2 is pulled toward class 1
// so that this one pair overlaps slightly.
BlobGeometry toy_geometry(int num_classes);

/// n samples of the 2D blob mixture; class k gets floor(n/K) or ceil(n/K) samples.
LocalDataset generate_toy(std::uint64_t seed, std::size_t n, int num_classes);

/// Class-stratified split; returns (train, test). Each class keeps at least one
/// sample on both sides, so every class needs at least two samples.
std::pair<LocalDataset, LocalDataset> split_train_test(const LocalDataset& ds, double ratio, std::uint64_t seed);

/// Applies a PartitionSpec. Within each class, parties take consecutive,
/// non-overlapping slices of one seeded permutation, so a class whose
/// fractions sum to 1 is conserved exactly.
std::vector<LocalDataset> partition(const LocalDataset& ds, const PartitionSpec& spec);

// CSV with header f0,...,f{d-1},label. Doubles are written with 17 significant digits.
void write_csv(const LocalDataset& ds, const std::filesystem::path& path);
// num_classes defaults to max label + 1.
LocalDataset read_csv(const std::filesystem::path& path, std::optional<int> num_classes = std::nullopt);

}  // namespace mpreuse
