#include "mpreuse/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "mpreuse/random.hpp"

namespace mpreuse {
namespace {

constexpr double kToyRadius = 4.0;
constexpr double kToySigma = 0.8;
// Centre distance of the deliberately overlapping pair, in units of sigma.
constexpr double kOverlapSeparation = 4.25;

void check_sample(const LabeledSample& s, int num_classes, std::size_t dim) {
  if (s.label < 0 || s.label >= num_classes) {
    throw InvalidArgument("sample label " + std::to_string(s.label) + " outside [0, " +
                          std::to_string(num_classes) + ")");
  }
  if (static_cast<std::size_t>(s.features.size()) != dim) {
    throw InvalidArgument("inconsistent feature dimension in dataset");
  }
  if (!s.features.allFinite()) throw InvalidArgument("non-finite feature value in dataset");
}

std::vector<std::vector<std::size_t>> indices_by_class(const LocalDataset& ds) {
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes()));
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds[i].label)].push_back(i);
  return by_class;
}

std::vector<LabeledSample> gather(const LocalDataset& ds, std::vector<std::size_t> idx) {
  std::sort(idx.begin(), idx.end());
  std::vector<LabeledSample> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(ds[i]);
  return out;
}

std::string csv_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

}  // namespace

LocalDataset::LocalDataset(std::vector<LabeledSample> samples, int num_classes)
    : samples_(std::move(samples)), num_classes_(num_classes) {
  if (num_classes_ < 1) throw InvalidArgument("num_classes must be at least 1");
  const std::size_t d = samples_.empty() ? 0 : static_cast<std::size_t>(samples_.front().features.size());
  std::set<ClassLabel> seen;
  for (const auto& s : samples_) {
    check_sample(s, num_classes_, d);
    seen.insert(s.label);
  }
  label_space_.assign(seen.begin(), seen.end());
}

LocalDataset::LocalDataset(std::vector<LabeledSample> samples, std::vector<ClassLabel> label_space,
                           int num_classes)
    : samples_(std::move(samples)), label_space_(std::move(label_space)), num_classes_(num_classes) {
  if (num_classes_ < 1) throw InvalidArgument("num_classes must be at least 1");
  std::sort(label_space_.begin(), label_space_.end());
  label_space_.erase(std::unique(label_space_.begin(), label_space_.end()), label_space_.end());
  for (ClassLabel c : label_space_) {
    if (c < 0 || c >= num_classes_) throw InvalidArgument("label space entry outside [0, K)");
  }
  const std::size_t d = samples_.empty() ? 0 : static_cast<std::size_t>(samples_.front().features.size());
  for (const auto& s : samples_) {
    check_sample(s, num_classes_, d);
    if (!std::binary_search(label_space_.begin(), label_space_.end(), s.label)) {
      throw InvalidArgument("sample label " + std::to_string(s.label) + " not in the dataset's label space");
    }
  }
}

std::size_t LocalDataset::dim() const {
  return samples_.empty() ? 0 : static_cast<std::size_t>(samples_.front().features.size());
}

std::vector<std::size_t> LocalDataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes_), 0);
  for (const auto& s : samples_) ++counts[static_cast<std::size_t>(s.label)];
  return counts;
}

std::vector<Vector> LocalDataset::features() const {
  std::vector<Vector> out;
  out.reserve(samples_.size());
  for (const auto& s : samples_) out.push_back(s.features);
  return out;
}

std::vector<ClassLabel> LocalDataset::labels() const {
  std::vector<ClassLabel> out;
  out.reserve(samples_.size());
  for (const auto& s : samples_) out.push_back(s.label);
  return out;
}

double PartyRule::fraction_of(ClassLabel c) const {
  const auto it = std::find(classes.begin(), classes.end(), c);
  if (it == classes.end()) return 0.0;
  return class_fractions.empty() ? fraction : class_fractions[static_cast<std::size_t>(it - classes.begin())];
}

void PartitionSpec::validate(int num_classes) const {
  if (parties.empty()) throw InvalidArgument("partition spec has no parties");
  std::vector<double> allocated(static_cast<std::size_t>(num_classes), 0.0);
  std::vector<bool> covered(static_cast<std::size_t>(num_classes), false);
  for (std::size_t p = 0; p < parties.size(); ++p) {
    const auto& rule = parties[p];
    const std::string where = "parties[" + std::to_string(p) + "]";
    if (!(rule.fraction > 0.0 && rule.fraction <= 1.0)) {
      throw InvalidArgument(where + ".fraction must lie in (0, 1]");
    }
    if (rule.classes.empty()) throw InvalidArgument(where + ".classes is empty");
    if (!rule.class_fractions.empty()) {
      if (rule.class_fractions.size() != rule.classes.size()) {
        throw InvalidArgument(where + ".class_fractions must have one entry per class");
      }
      for (double f : rule.class_fractions) {
        if (!(f > 0.0 && f <= 1.0)) throw InvalidArgument(where + ".class_fractions entries must lie in (0, 1]");
      }
    }
    std::set<ClassLabel> uniq(rule.classes.begin(), rule.classes.end());
    if (uniq.size() != rule.classes.size()) throw InvalidArgument(where + ".classes has duplicates");
    for (ClassLabel c : rule.classes) {
      if (c < 0 || c >= num_classes) {
        throw InvalidArgument(where + ".classes: label " + std::to_string(c) + " outside [0, " +
                              std::to_string(num_classes) + ")");
      }
      allocated[static_cast<std::size_t>(c)] += rule.fraction_of(c);
      covered[static_cast<std::size_t>(c)] = true;
    }
  }
  for (int c = 0; c < num_classes; ++c) {
    if (allocated[static_cast<std::size_t>(c)] > 1.0 + 1e-9) {
      throw InvalidArgument("class " + std::to_string(c) + " is allocated more than its samples (fractions sum to " +
                            std::to_string(allocated[static_cast<std::size_t>(c)]) + ")");
    }
    if (!covered[static_cast<std::size_t>(c)]) {
      throw InvalidArgument("class " + std::to_string(c) + " is held by no party");
    }
  }
}

BlobGeometry toy_geometry(int num_classes) {
  if (num_classes < 1) throw InvalidArgument("num_classes must be at least 1");
  const double pi = std::numbers::pi;
  const double radius =
      num_classes <= 5 ? kToyRadius : kToyRadius * std::sin(pi / 5.0) / std::sin(pi / num_classes);
  std::vector<double> angles(static_cast<std::size_t>(num_classes));
  for (int k = 0; k < num_classes; ++k) angles[static_cast<std::size_t>(k)] = 2.0 * pi * k / num_classes;
  if (num_classes >= 3) {
    const double chord = kOverlapSeparation * kToySigma;
    angles[2] = angles[1] + 2.0 * std::asin(chord / (2.0 * radius));
  }
  BlobGeometry g;
  g.sigma = kToySigma;
  for (double a : angles) {
    Vector m(2);
    m << radius * std::cos(a), radius * std::sin(a);
    g.means.push_back(m);
  }
  return g;
}

LocalDataset generate_toy(std::uint64_t seed, std::size_t n, int num_classes) {
  const BlobGeometry g = toy_geometry(num_classes);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<LabeledSample> samples;
  samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<ClassLabel>(i % static_cast<std::size_t>(num_classes));
    Vector x(2);
    x[0] = normal(rng);
    x[1] = normal(rng);
    samples.push_back({g.means[static_cast<std::size_t>(label)] + g.sigma * x, label});
  }
  std::shuffle(samples.begin(), samples.end(), rng);
  return LocalDataset(std::move(samples), num_classes);
}

std::pair<LocalDataset, LocalDataset> split_train_test(const LocalDataset& ds, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidArgument("split ratio must lie in (0, 1)");
  Rng rng(seed);
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  auto by_class = indices_by_class(ds);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    if (idx.size() < 2) {
      throw InvalidArgument("class " + std::to_string(c) + " has fewer than 2 samples; cannot split");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    test_idx.insert(test_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  return {LocalDataset(gather(ds, std::move(train_idx)), ds.label_space(), ds.num_classes()),
          LocalDataset(gather(ds, std::move(test_idx)), ds.label_space(), ds.num_classes())};
}

std::vector<LocalDataset> partition(const LocalDataset& ds, const PartitionSpec& spec) {
  spec.validate(ds.num_classes());
  Rng rng(spec.seed);
  auto by_class = indices_by_class(ds);
  std::vector<std::vector<std::size_t>> shard_idx(spec.parties.size());
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    std::shuffle(idx.begin(), idx.end(), rng);
    const double n = static_cast<double>(idx.size());
    double cumulative = 0.0;
    for (std::size_t p = 0; p < spec.parties.size(); ++p) {
      const double fraction = spec.parties[p].fraction_of(static_cast<ClassLabel>(c));
      if (fraction == 0.0) continue;
      const auto begin = static_cast<std::size_t>(std::llround(cumulative * n));
      cumulative = std::min(1.0, cumulative + fraction);
      const auto end = std::min(idx.size(), static_cast<std::size_t>(std::llround(cumulative * n)));
      shard_idx[p].insert(shard_idx[p].end(), idx.begin() + static_cast<std::ptrdiff_t>(begin),
                          idx.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  std::vector<LocalDataset> shards;
  shards.reserve(spec.parties.size());
  for (std::size_t p = 0; p < spec.parties.size(); ++p) {
    if (shard_idx[p].empty()) throw InvalidArgument("partition produced an empty shard for party " + std::to_string(p));
    shards.emplace_back(gather(ds, std::move(shard_idx[p])), spec.parties[p].classes, ds.num_classes());
  }
  return shards;
}

void write_csv(const LocalDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  const std::size_t d = ds.dim();
  for (std::size_t k = 0; k < d; ++k) out << 'f' << k << ',';
  out << "label\n";
  for (const auto& s : ds.samples()) {
    for (Eigen::Index k = 0; k < s.features.size(); ++k) out << csv_double(s.features[k]) << ',';
    out << s.label << '\n';
  }
  if (!out) throw InvalidArgument("write failed for " + path.string());
}

LocalDataset read_csv(const std::filesystem::path& path, std::optional<int> num_classes) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument(path.string() + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::size_t columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (line.substr(line.rfind(',') == std::string::npos ? 0 : line.rfind(',') + 1) != "label") {
    throw InvalidArgument(path.string() + ":1: header must end with 'label'");
  }
  const std::size_t d = columns - 1;

  std::vector<LabeledSample> samples;
  int max_label = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      auto pos = rest.find(',');
      fields.push_back(rest.substr(0, pos));
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 1);
    }
    if (fields.size() != columns) {
      throw InvalidArgument(where + "expected " + std::to_string(columns) + " fields, found " +
                            std::to_string(fields.size()));
    }
    LabeledSample s;
    s.features.resize(static_cast<Eigen::Index>(d));
    for (std::size_t k = 0; k < d; ++k) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(fields[k].data(), fields[k].data() + fields[k].size(), v);
      if (ec != std::errc() || ptr != fields[k].data() + fields[k].size() || !std::isfinite(v)) {
        throw InvalidArgument(where + "feature f" + std::to_string(k) + " is not a finite number: '" +
                              std::string(fields[k]) + "'");
      }
      s.features[static_cast<Eigen::Index>(k)] = v;
    }
    auto& lf = fields.back();
    auto [ptr, ec] = std::from_chars(lf.data(), lf.data() + lf.size(), s.label);
    if (ec != std::errc() || ptr != lf.data() + lf.size() || s.label < 0) {
      throw InvalidArgument(where + "label is not a non-negative integer: '" + std::string(lf) + "'");
    }
    max_label = std::max(max_label, s.label);
    samples.push_back(std::move(s));
  }
  const int k = num_classes.value_or(std::max(1, max_label + 1));
  if (max_label >= k) {
    throw InvalidArgument(path.string() + ": label " + std::to_string(max_label) + " exceeds num_classes " +
                          std::to_string(k));
  }
  return LocalDataset(std::move(samples), k);
}

}  // namespace mpreuse
