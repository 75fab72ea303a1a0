#include "euler_resnet/data.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "euler_resnet/csv.hpp"

namespace euler_resnet {

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.num_classes = num_classes;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.reserve(rows.size());
  out.ids.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) =
        features.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(labels[rows[i]]);
    out.ids.push_back(ids[rows[i]]);
  }
  return out;
}

void MoonSpec::validate() const {
  if (n_per_class < 1) throw std::invalid_argument("moons: n_per_class must be >= 1");
  if (!(radius > 0.0)) throw std::invalid_argument("moons: radius must be > 0");
  if (!(noise_std >= 0.0)) throw std::invalid_argument("moons: noise_std must be >= 0");
}

Dataset generate_two_moons(const MoonSpec& spec) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(2 * spec.n_per_class);
  const double r = spec.radius;
  Rng rng(spec.seed);
  Dataset d;
  d.features.resize(n, 2);
  d.labels.resize(static_cast<std::size_t>(n));
  d.ids.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = std::numbers::pi * rng.uniform();
    const bool upper = i < spec.n_per_class;
    if (upper) {
      d.features(i, 0) = r * std::cos(t);
      d.features(i, 1) = r * std::sin(t);
    } else {
      d.features(i, 0) = r - r * std::cos(t);
      d.features(i, 1) = r / 2.0 - r * std::sin(t);
    }
    d.labels[static_cast<std::size_t>(i)] = upper ? 0 : 1;
    d.ids[static_cast<std::size_t>(i)] = static_cast<std::uint64_t>(i);
  }
  if (spec.noise_std > 0.0) d.features += gauss_draw(rng, n, 2, 0.0, spec.noise_std);
  return d;
}

Dataset add_gaussian_noise(const Dataset& d, double std, std::uint64_t seed) {
  if (!(std >= 0.0)) throw std::invalid_argument("add_gaussian_noise: std must be >= 0");
  Dataset out = d;
  if (std == 0.0) return out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    Rng rng(derive_seed(seed, d.ids[i]));
    out.features.row(static_cast<Eigen::Index>(i)) +=
        gauss_draw(rng, 1, d.features.cols(), 0.0, std);
  }
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& d, double train_fraction,
                                  std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("split: train_fraction must be in (0, 1)");
  const std::size_t n = d.size();
  const auto n_first =
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_first == 0 || n_first >= n)
    throw std::invalid_argument("split: one side of the split would be empty");
  Rng rng(seed);
  const auto perm = rng.permutation(n);
  std::vector<std::size_t> first(perm.begin(), perm.begin() + static_cast<long>(n_first));
  std::vector<std::size_t> second(perm.begin() + static_cast<long>(n_first), perm.end());
  return {d.subset(first), d.subset(second)};
}

void write_dataset_csv(const Dataset& d, const std::filesystem::path& path) {
  std::vector<std::string> header;
  for (Eigen::Index j = 0; j < d.dim(); ++j) header.push_back("x" + std::to_string(j));
  header.emplace_back("label");
  CsvWriter w(path, header);
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (Eigen::Index j = 0; j < d.dim(); ++j)
      w.field(d.features(static_cast<Eigen::Index>(i), j));
    w.field(d.labels[i]);
    w.end_row();
  }
}

Dataset read_dataset_csv(const std::filesystem::path& path, int num_classes) {
  const CsvTable t = read_csv(path);
  if (t.header.empty() || t.header.back() != "label")
    throw std::runtime_error("dataset csv: last column must be 'label'");
  const auto dim = static_cast<Eigen::Index>(t.header.size() - 1);
  Dataset d;
  d.num_classes = num_classes;
  d.features.resize(static_cast<Eigen::Index>(t.rows.size()), dim);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (Eigen::Index j = 0; j < dim; ++j)
      d.features(static_cast<Eigen::Index>(i), j) =
          std::stod(t.rows[i][static_cast<std::size_t>(j)]);
    const int label = std::stoi(t.rows[i].back());
    if (label < 0 || label >= num_classes)
      throw std::runtime_error("dataset csv: label out of range");
    d.labels.push_back(label);
    d.ids.push_back(i);
  }
  return d;
}

}  // namespace euler_resnet
